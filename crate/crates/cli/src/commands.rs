use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use forced_sn::base::{BasePoint, BaseSystem};
use forced_sn::bifurcation::{
    find_beta_c, find_beta_c_restricted, find_beta_hat, sweep as run_sweep, write_sweep_csv, BisectionOptions,
    InvariantSubset, SweepOptions,
};
use forced_sn::fibre::FibreMap;
use forced_sn::flow::as_fibre_family;
use forced_sn::graph::{fmt17, pinching_report, EngineConfig, GraphEngine, GraphField, PinchThresholds, Which};
use forced_sn::oracle::{closed_form_betac_arctan, identity_base_betac, solve_saddle_node_1d, ArctanOffset};
use forced_sn::samples::place;
use forced_sn::Error;

use crate::config::{BaseKind, Format, RunConfig};
use crate::Failure;

struct Model {
    system: BaseSystem,
    fam: Box<dyn FibreMap>,
}

fn model(cfg: &RunConfig) -> Result<Model, Failure> {
    if cfg.flow.is_some() {
        let sys = cfg.flow_system()?;
        let system = sys.base_system();
        let fam = as_fibre_family(sys, cfg.beta_range())?;
        Ok(Model {
            system,
            fam: Box::new(fam),
        })
    } else {
        Ok(Model {
            system: cfg.base_system()?,
            fam: Box::new(cfg.fibre_family()?),
        })
    }
}

fn samples(cfg: &RunConfig) -> Result<Vec<BasePoint>, Failure> {
    if cfg.flow.is_none() && cfg.base.kind == BaseKind::Periodic {
        return cfg.base_points();
    }
    Ok(place(cfg.placement, cfg.dim(), cfg.samples.unwrap_or(2000), cfg.seed))
}

fn engine_config(cfg: &RunConfig) -> EngineConfig {
    let mut e = EngineConfig::default();
    if let Some(m) = cfg.max_depth {
        e.schedule.max_depth = m;
    }
    e
}

fn need_beta(cfg: &RunConfig, cmd: &str) -> Result<f64, Failure> {
    cfg.beta.ok_or_else(|| Failure::Config(format!("{cmd} needs a β (--beta or \"beta\")")))
}

/// Creates the output directory and checks that it accepts files before
/// any computation starts.
fn prepare_out(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| Failure::Config(format!("{}: {e}", dir.display())))?;
    let probe = dir.join(".forced-sn-write-probe");
    File::create(&probe)
        .and_then(|_| std::fs::remove_file(&probe))
        .map_err(|e| Failure::Config(format!("{} is not writable: {e}", dir.display())))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Core(Error::Io(e)))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::Core(Error::Json(e)))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Failure::Core(Error::Io(e)))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<(), Failure> {
    w.flush().map_err(|e| Failure::Core(Error::Io(e)))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn warn_escapes(f: &GraphField) {
    let n = f.escaped_count();
    if n > 0 {
        eprintln!(
            "warning: {:?} graph escaped Γ at {n} of {} samples (β = {})",
            f.which,
            f.len(),
            f.beta
        );
    }
}

pub fn graphs(mut cfg: RunConfig) -> Result<(), Failure> {
    let beta = need_beta(&cfg, "graphs")?;
    let format = *cfg.format.get_or_insert(Format::Csv);
    let dir = prepare_out(&cfg)?;
    let m = model(&cfg)?;
    let s = samples(&cfg)?;
    let e = GraphEngine::with_config(&m.system, &*m.fam, engine_config(&cfg));
    let field = |which| match cfg.depth {
        Some(n) => e.graph_field(beta, &s, n, which),
        None => e.adaptive_field(beta, &s, which, false).field,
    };
    let lower = field(Which::Lower);
    let upper = field(Which::Upper);
    warn_escapes(&lower);
    warn_escapes(&upper);
    let (report, warning) = match pinching_report(&lower, &upper, PinchThresholds::default()) {
        Ok(r) => (Some(r), None),
        Err(err) => {
            eprintln!("warning: no pinching report: {err}");
            (None, Some(err.to_string()))
        }
    };
    match format {
        Format::Csv => {
            for (f, name) in [(&lower, "graph_lower.csv"), (&upper, "graph_upper.csv")] {
                let path = dir.join(name);
                let mut w = create(&path)?;
                f.write_csv(&mut w)?;
                finish(w, &path)?;
            }
        }
        Format::Json => write_json(
            &dir.join("graphs.json"),
            &json!({ "config": cfg, "lower": lower, "upper": upper }),
        )?,
    }
    write_json(
        &dir.join("pinching.json"),
        &json!({ "config": cfg, "beta": beta, "report": report, "warning": warning }),
    )
}

pub fn betac(mut cfg: RunConfig) -> Result<(), Failure> {
    let dir = prepare_out(&cfg)?;
    let m = model(&cfg)?;
    let restricted = cfg.restricted_points()?;
    let finite = restricted.is_some() || (cfg.flow.is_none() && cfg.base.kind == BaseKind::Periodic);
    let mut opts = if finite {
        BisectionOptions::finite()
    } else {
        BisectionOptions::continuum()
    };
    opts.beta_range = cfg.beta_range();
    opts.engine = engine_config(&cfg);
    opts.tol = *cfg.tol.get_or_insert(opts.tol);
    let result = match (restricted, cfg.last) {
        (Some(_), true) => {
            return Err(Failure::Config("--last is not available with --restrict".into()));
        }
        (Some((label, points)), false) => {
            let subset = InvariantSubset::Periodic { label, points };
            find_beta_c_restricted(&m.system, &*m.fam, &subset, &opts)?
        }
        (None, last) => {
            let s = samples(&cfg)?;
            if last {
                find_beta_hat(&m.system, &*m.fam, &s, &opts)?
            } else {
                find_beta_c(&m.system, &*m.fam, &s, &opts)?
            }
        }
    };
    println!("{}", fmt17(result.beta_c));
    cfg.format = Some(Format::Json);
    write_json(&dir.join("betac.json"), &json!({ "config": cfg, "result": result }))
}

pub fn sweep(mut cfg: RunConfig) -> Result<(), Failure> {
    let grid = cfg
        .beta_grid
        .ok_or_else(|| Failure::Config("sweep needs a β grid (--beta-grid start:stop:count or \"beta_grid\")".into()))?;
    let format = *cfg.format.get_or_insert(Format::Csv);
    let dir = prepare_out(&cfg)?;
    let m = model(&cfg)?;
    let s = samples(&cfg)?;
    let opts = SweepOptions {
        engine: engine_config(&cfg),
        lyap_n: *cfg.lyap_n.get_or_insert(10_000),
        lyap_depth: *cfg.lyap_depth.get_or_insert(1_000),
    };
    let rows = run_sweep(&m.system, &*m.fam, &grid.values(), &s, &opts)?;
    match format {
        Format::Csv => {
            let path = dir.join("sweep.csv");
            let mut w = create(&path)?;
            write_sweep_csv(&rows, &mut w)?;
            finish(w, &path)
        }
        Format::Json => write_json(&dir.join("sweep.json"), &json!({ "config": cfg, "rows": rows })),
    }
}

pub fn lyap(mut cfg: RunConfig) -> Result<(), Failure> {
    let beta = need_beta(&cfg, "lyap")?;
    let dir = prepare_out(&cfg)?;
    let m = model(&cfg)?;
    let dim = cfg.dim();
    let theta0 = cfg.theta0.get_or_insert_with(|| vec![0.0; dim]).clone();
    let theta0 = BasePoint::from_slice(&theta0).map_err(|e| Failure::Config(e.to_string()))?;
    m.system.check_point(&theta0).map_err(|e| Failure::Config(e.to_string()))?;
    let n = *cfg.lyap_n.get_or_insert(100_000);
    let depth = *cfg.lyap_depth.get_or_insert(1_000);
    let e = GraphEngine::with_config(&m.system, &*m.fam, engine_config(&cfg));
    let upper = e.lyapunov(beta, &theta0, Which::Upper, n, depth)?;
    let lower = e.lyapunov(beta, &theta0, Which::Lower, n, depth)?;
    println!("lambda_upper = {}\nlambda_lower = {}", fmt17(upper), fmt17(lower));
    cfg.format = Some(Format::Json);
    write_json(
        &dir.join("lyap.json"),
        &json!({ "config": cfg, "beta": beta, "lambda_upper": upper, "lambda_lower": lower }),
    )
}

pub fn oracle(mut cfg: RunConfig) -> Result<(), Failure> {
    let dir = prepare_out(&cfg)?;
    let alpha = cfg.fibre.alpha;
    let out = match cfg.offset {
        Some(offset) => {
            let closed = closed_form_betac_arctan(alpha, offset)?;
            let (lo, hi) = cfg.beta_range();
            let newton = solve_saddle_node_1d(&ArctanOffset { alpha, offset }, (lo.min(-10.0), hi.max(10.0)))?;
            println!("{}", fmt17(closed));
            json!({ "closed_form": closed, "newton": newton })
        }
        None => {
            let fam = cfg.fibre_family()?;
            let s = samples(&cfg)?;
            let (lo, hi) = cfg.beta_range();
            let r = identity_base_betac(&fam, &s, (lo.min(-10.0), hi.max(10.0)))?;
            println!("{}\n{}", fmt17(r.beta_c), fmt17(r.beta_hat));
            json!({
                "identity_base": {
                    "beta_c": r.beta_c,
                    "argmin": r.argmin,
                    "beta_hat": r.beta_hat,
                    "argmax": r.argmax,
                }
            })
        }
    };
    cfg.format = Some(Format::Json);
    let mut doc = json!({ "config": cfg });
    doc.as_object_mut().unwrap().extend(out.as_object().unwrap().clone());
    write_json(&dir.join("oracle.json"), &doc)
}

pub fn flowmap(mut cfg: RunConfig) -> Result<(), Failure> {
    let beta = need_beta(&cfg, "flowmap")?;
    let format = *cfg.format.get_or_insert(Format::Csv);
    let dir = prepare_out(&cfg)?;
    let sys = cfg.flow_system()?;
    let nx = *cfg.x_points.get_or_insert(101);
    if nx < 2 {
        return Err(Failure::Config("x_points must be at least 2".into()));
    }
    let s = place(cfg.placement, 1, cfg.samples.unwrap_or(2000), cfg.seed);
    let (lo, hi) = (sys.boundary.lower, sys.boundary.upper);
    let mut rows = Vec::with_capacity(s.len() * nx);
    for t in &s {
        for j in 0..nx {
            let x = lo + (hi - lo) * j as f64 / (nx - 1) as f64;
            rows.push((t.t1(), x, sys.time_t0_map(beta, t, x).ok()));
        }
    }
    match format {
        Format::Csv => {
            let path = dir.join("flowmap.csv");
            let mut w = create(&path)?;
            let io = |e| Failure::Core(Error::Io(e));
            writeln!(w, "theta,x,value,deriv_x,blowup").map_err(io)?;
            for (t, x, r) in &rows {
                match r {
                    Some((y, d)) => writeln!(w, "{},{},{},{},0", fmt17(*t), fmt17(*x), fmt17(*y), fmt17(*d)),
                    None => writeln!(w, "{},{},,,1", fmt17(*t), fmt17(*x)),
                }
                .map_err(io)?;
            }
            finish(w, &path)
        }
        Format::Json => {
            let rows: Vec<_> = rows
                .iter()
                .map(|(t, x, r)| json!({ "theta": t, "x": x, "value": r.map(|v| v.0), "deriv_x": r.map(|v| v.1) }))
                .collect();
            write_json(&dir.join("flowmap.json"), &json!({ "config": cfg, "rows": rows }))
        }
    }
}
