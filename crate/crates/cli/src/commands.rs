//! One function per command. Each returns the bytes it would emit, so the
//! same code backs the binary and the tests.

use ldp_sgd::linalg;
use ldp_sgd::model::Objective;
use ldp_sgd::montecarlo::{
    compare_with_theory, estimate_tail_curve, fit_empirical_rate, TailEstimate, TailQuery, TailSet, COMPARISON_HEADER,
};
use ldp_sgd::noise::{NoiseConfig, NoiseModel};
use ldp_sgd::rates::{hpb_exponent, RateEngine, RateSource};
use ldp_sgd::sgd::{self, fmt_float};
use serde_json::{json, Value};
use std::path::Path;
use std::sync::Arc;

use crate::config::{ExperimentConfig, SetConfig};
use crate::output::{to_json, write_atomic};
use crate::repro::{self, ReproOptions};
use crate::CliError;

struct Problem {
    obj: Arc<dyn Objective>,
    noise: Arc<dyn NoiseModel>,
    schedule: sgd::StepSchedule,
    x1: Vec<f64>,
}

fn problem(cfg: &ExperimentConfig) -> Result<Problem, CliError> {
    let obj = cfg.objective()?;
    let noise = cfg.noise_for(obj.as_ref())?;
    let schedule = cfg.schedule_for(obj.as_ref())?;
    let x1 = cfg.x1_for(obj.as_ref())?;
    Ok(Problem {
        obj,
        noise,
        schedule,
        x1,
    })
}

/// Rate engine, with the HPB exponent attached when the noise supplies the
/// constants it needs.
fn engine(cfg: &ExperimentConfig, p: &Problem) -> Result<RateEngine, CliError> {
    let e = RateEngine::new(p.obj.clone(), p.noise.clone(), p.schedule)?;
    if p.noise.c1().is_some() && p.noise.c2().is_some() {
        return Ok(e.with_initial_point(&p.x1, cfg.include_initial_branch.unwrap_or(true))?);
    }
    Ok(e)
}

fn parse_source(s: &str, e: &RateEngine) -> Result<RateSource, CliError> {
    Ok(match s {
        "auto" if e.is_exact() => RateSource::PsiStar,
        "auto" => RateSource::PsiBar,
        "psi_star" => RateSource::PsiStar,
        "psi_bar" => RateSource::PsiBar,
        "gaussian_closed" => RateSource::GaussianClosed,
        _ => return Err(CliError::Config(format!("unknown rate source {s:?}"))),
    })
}

fn one_or_many(mut items: Vec<Value>) -> Value {
    if items.len() == 1 {
        items.pop().unwrap()
    } else {
        Value::Array(items)
    }
}

fn vectors(v: &Option<Vec<Vec<f64>>>, what: &str) -> Result<Vec<Vec<f64>>, CliError> {
    match v {
        Some(v) if !v.is_empty() => Ok(v.clone()),
        _ => Err(CliError::Config(format!("no {what} given"))),
    }
}

fn ok_or_null(r: ldp_sgd::Result<f64>) -> Value {
    r.map_or(Value::Null, |v| json!(v))
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Vec<u8>, CliError> {
    let p = problem(cfg)?;
    let horizon = cfg
        .horizon
        .ok_or_else(|| CliError::Config("no horizon given".into()))?;
    let record = cfg.record_at.clone().unwrap_or_default();
    let rec = sgd::run(p.obj.as_ref(), p.noise.as_ref(), p.schedule, &p.x1, horizon, &record, cfg.seed()?)?;
    let mut buf = Vec::new();
    rec.write_csv(&mut buf).expect("writing to memory");
    Ok(buf)
}

pub fn psi(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let p = problem(cfg)?;
    let e = engine(cfg, &p)?;
    let sigma = p.noise.gaussian_covariance().filter(|_| p.noise.is_iterate_independent());
    let mut rows = Vec::new();
    for l in vectors(&cfg.lambdas, "lambda vectors")? {
        let psi_star = e.psi_star(&l)?;
        let mut row = json!({
            "lambda": l,
            "psi_star": psi_star,
            "remainder": ok_or_null(e.remainder(&l)),
            "psi_bar": ok_or_null(e.psi_bar(&l)),
            "coarse_bound": ok_or_null(e.coarse_psi_bound(&l)),
        });
        if let Some(s) = sigma {
            row["psi_star_closed"] = json!(e.gaussian_psi_star_closed(s, &l)?);
        }
        rows.push(row);
    }
    to_json(&one_or_many(rows))
}

pub fn rate(cfg: &ExperimentConfig, source: &str) -> Result<String, CliError> {
    let p = problem(cfg)?;
    let e = engine(cfg, &p)?;
    let src = parse_source(source, &e)?;
    let sigma = p.noise.gaussian_covariance().filter(|_| p.noise.is_iterate_independent());
    let mut rows = Vec::new();
    for z in vectors(&cfg.zs, "z vectors")? {
        let res = e.rate(src, &z)?;
        let mut row = json!({
            "z": z,
            "source": src,
            "rate": res.value,
            "witness": res.witness,
            "diagnostics": res.diagnostics,
        });
        if src != RateSource::GaussianClosed {
            row["psi_star"] = json!(e.psi_star(&res.witness)?);
            row["remainder"] = ok_or_null(e.remainder(&res.witness));
        }
        match src {
            RateSource::PsiStar => row["I_star"] = json!(res.value),
            RateSource::PsiBar => {
                row["I_bar"] = json!(res.value);
                if e.is_exact() {
                    row["I_star"] = json!(res.value);
                }
            }
            RateSource::GaussianClosed => {}
        }
        if let Some(s) = sigma {
            row["I_star_closed"] = json!(e.gaussian_rate_closed(s, &z)?);
        }
        rows.push(row);
    }
    to_json(&one_or_many(rows))
}

pub fn ball_rate(cfg: &ExperimentConfig, source: &str) -> Result<String, CliError> {
    let p = problem(cfg)?;
    let e = engine(cfg, &p)?;
    let src = parse_source(source, &e)?;
    let closed = p.noise.gaussian_covariance().is_some() && e.is_exact();
    let mut rows = Vec::new();
    for delta in cfg.deltas()? {
        let res = e.ball_rate(src, delta)?;
        let mut row = json!({
            "delta": delta,
            "source": src,
            "rate": res.value,
            "witness": res.witness,
            "diagnostics": res.diagnostics,
            "hpb_rate": e.hpb().map(|h| h.rate(delta)),
        });
        if closed {
            row["rate_closed"] = json!(e.ball_rate(RateSource::GaussianClosed, delta)?.value);
        }
        rows.push(row);
    }
    to_json(&one_or_many(rows))
}

pub fn hpb(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let p = problem(cfg)?;
    let include = cfg.include_initial_branch.unwrap_or(true);
    let h = hpb_exponent(p.obj.as_ref(), p.noise.as_ref(), &p.schedule, &p.x1, include)?;
    let deltas = cfg.deltas.clone().unwrap_or_default();
    let ks = cfg.ks.clone().unwrap_or_default();
    let mut bounds = Vec::new();
    for &delta in &deltas {
        for &k in &ks {
            bounds.push(json!({"k": k, "delta": delta, "tail_bound": h.tail_bound(k as f64, delta)}));
        }
    }
    to_json(&json!({
        "B": h.b,
        "k0": h.k0,
        "C1": p.noise.c1(),
        "C2": p.noise.c2(),
        "initial_distance": linalg::distance(&p.x1, p.obj.minimizer()),
        "include_initial_branch": include,
        "rates": deltas.iter().map(|&d| json!({"delta": d, "rate": h.rate(d)})).collect::<Vec<_>>(),
        "bounds": bounds,
    }))
}

fn tail_set(cfg: &ExperimentConfig) -> Result<TailSet, CliError> {
    Ok(match &cfg.set {
        Some(SetConfig::Ball { delta }) => TailSet::Ball { delta: *delta },
        Some(SetConfig::Lp { p, delta }) => TailSet::Lp { p: *p, delta: *delta },
        Some(SetConfig::HalfSpace { v, c }) => TailSet::HalfSpace { v: v.clone(), c: *c },
        None => TailSet::Ball {
            delta: cfg.deltas()?[0],
        },
    })
}

fn estimate(p: &Problem, set: TailSet, ks: Vec<usize>, n: usize, seed: u64, workers: usize) -> Result<TailEstimate, CliError> {
    let q = TailQuery {
        set,
        ks,
        replications: n,
        seed,
    };
    Ok(estimate_tail_curve(p.obj.as_ref(), p.noise.as_ref(), p.schedule, &p.x1, &q, workers)?)
}

fn csv_bytes(est: &TailEstimate) -> Vec<u8> {
    let mut buf = Vec::new();
    est.write_csv(&mut buf).expect("writing to memory");
    buf
}

pub fn tail(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<u8>, CliError> {
    let p = problem(cfg)?;
    let est = estimate(&p, tail_set(cfg)?, cfg.ks()?, cfg.replications()?, cfg.seed()?, workers)?;
    Ok(csv_bytes(&est))
}

fn noise_label(i: usize, cfg: &NoiseConfig) -> String {
    let kind = serde_json::to_value(cfg)
        .ok()
        .and_then(|v| v["type"].as_str().map(str::to_owned))
        .unwrap_or_else(|| "noise".into());
    format!("{i}_{kind}")
}

fn output_dir(out: Option<&Path>) -> Result<&Path, CliError> {
    let dir = out.ok_or_else(|| CliError::Config("this command needs --output DIR".into()))?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

/// Tail curves for every noise model and radius, one CSV each, plus
/// `comparison.csv` and `summary.json`. Everything is computed before the
/// first file is written.
pub fn compare(cfg: &ExperimentConfig, workers: usize, out: Option<&Path>) -> Result<(), CliError> {
    let noises = match (&cfg.noises, &cfg.noise) {
        (Some(n), _) if !n.is_empty() => n.clone(),
        (_, Some(n)) => vec![n.clone()],
        _ => return Err(CliError::Config("no noise models given".into())),
    };
    let obj = cfg.objective()?;
    let schedule = cfg.schedule_for(obj.as_ref())?;
    let x1 = cfg.x1_for(obj.as_ref())?;
    let deltas = cfg.deltas()?;
    let ks = cfg.ks()?;
    let n = cfg.replications()?;
    let seed = cfg.seed()?;
    let window = cfg.fit.clone().unwrap_or_default().window();

    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let mut table = format!("noise,delta,{COMPARISON_HEADER}\n");
    let mut summary = Vec::new();
    for (i, nc) in noises.iter().enumerate() {
        let label = noise_label(i, nc);
        let p = Problem {
            obj: obj.clone(),
            noise: nc.build(obj.dim())?,
            schedule,
            x1: x1.clone(),
        };
        let e = engine(cfg, &p)?;
        let mut per_delta = Vec::new();
        for (j, &delta) in deltas.iter().enumerate() {
            // matched streams across noise models, distinct across radii
            let est = estimate(&p, TailSet::Ball { delta }, ks.clone(), n, seed.wrapping_add(j as u64), workers)?;
            files.push((format!("tail_{label}_delta{j}.csv"), csv_bytes(&est)));
            let entry = match fit_empirical_rate(&est, &window) {
                Ok(fit) => {
                    let c = compare_with_theory(&fit, &e, &TailSet::Ball { delta }, None)?;
                    table.push_str(&format!("{label},{},{}\n", fmt_float(delta), c.csv_row()));
                    json!({"delta": delta, "comparison": c, "ordering_holds": c.ordering_holds(), "diverged": est.diverged})
                }
                Err(err) => json!({"delta": delta, "fit_error": err.to_string(), "diverged": est.diverged}),
            };
            per_delta.push(entry);
        }
        summary.push(json!({"label": label, "noise": nc, "results": per_delta}));
    }
    let summary = to_json(&json!({"seed": seed, "replications": n, "ks": ks, "noises": summary}))?;
    let dir = output_dir(out)?;
    for (name, bytes) in files {
        write_atomic(&dir.join(name), &bytes)?;
    }
    write_atomic(&dir.join("comparison.csv"), table.as_bytes())?;
    write_atomic(&dir.join("summary.json"), summary.as_bytes())
}

pub fn repro_quadratic(cfg: &ExperimentConfig, workers: usize, out: Option<&Path>) -> Result<(), CliError> {
    let mut opts = ReproOptions {
        seed: cfg.seed()?,
        workers,
        ..Default::default()
    };
    if let Some(n) = cfg.replications {
        opts.replications = n;
    }
    let s = repro::run(&opts)?;
    let summary = to_json(&s)?;
    let Some(out) = out else {
        return crate::output::emit(None, summary.as_bytes());
    };
    let dir = output_dir(Some(out))?;
    let mut table = format!("noise,delta,{COMPARISON_HEADER}\n");
    for run in &s.runs {
        for (tag, est, cmp, delta) in [
            ("large", &run.large, &run.large_comparison, s.large_delta),
            ("small", &run.small, &run.small_comparison, s.small_delta),
        ] {
            write_atomic(&dir.join(format!("tail_{}_{tag}.csv", run.label)), &csv_bytes(est))?;
            if let Some(c) = cmp {
                table.push_str(&format!("{},{},{}\n", run.label, fmt_float(delta), c.csv_row()));
            }
        }
    }
    write_atomic(&dir.join("comparison.csv"), table.as_bytes())?;
    write_atomic(&dir.join("summary.json"), summary.as_bytes())
}
