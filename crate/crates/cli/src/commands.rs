use std::path::{Path, PathBuf};

use acnoise_core::config::RunConfig;
use acnoise_core::rng::RngStream;
use acnoise_core::stats::ensemble::{ensemble_run, EnsembleSpec};
use acnoise_core::stats::estimators::{cross_correlation, sigma_lambda_estimate};
use acnoise_core::stats::observables::Observable;
use acnoise_core::stats::report::{checks_to_csv, Check, MomentReport, Rule, DEFAULT_Z};
use acnoise_core::stats::Estimate;
use acnoise_core::suites::{self, CriterionOutcome, Desk, Lab, ENSEMBLE_SUITES};
use acnoise_core::{heat_of_initial, observable, EnsembleAccumulator, Error, SimParams, Simulator};
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::output::{ResultsDir, RunManifest, Verdict};

/// Flags shared by the run commands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub suites: Vec<String>,
}

pub struct Loaded {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub spec: EnsembleSpec,
}

pub fn load(o: &Overrides) -> Result<Loaded> {
    let mut cfg = match &o.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = o.seed {
        cfg.ensemble.seed = seed;
    }
    if let Some(out) = &o.out {
        cfg.out = out.clone();
    }
    if !o.suites.is_empty() {
        cfg.suites = o.suites.clone();
    }
    let mut spec = cfg.ensemble_spec()?;
    if let Some(w) = o.workers {
        if w == 0 {
            return Err(Error::Config("--workers must be positive".into()).into());
        }
        spec.workers = w;
    }
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(Loaded { out: cfg.out.clone(), cfg, spec })
}

/// One row of the tidy statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TidyRow {
    pub lambda: f64,
    pub eps: f64,
    pub t: f64,
    pub statistic: String,
    pub value: f64,
    pub se: Option<f64>,
}

impl TidyRow {
    fn new(params: &SimParams, t: f64, statistic: impl Into<String>, est: Estimate) -> Self {
        Self { lambda: params.lambda, eps: params.eps, t, statistic: statistic.into(), value: est.value, se: est.se }
    }
}

pub fn tidy_csv(rows: &[TidyRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))
}

fn single_point(cfg: &RunConfig) -> Result<SimParams> {
    if cfg.sim.lambda.len() != 1 || cfg.sim.eps.len() != 1 {
        return Err(Error::Config("simulate needs a single lambda and a single eps".into()).into());
    }
    Ok(cfg.params(cfg.sim.lambda[0], cfg.sim.eps[0])?)
}

fn verdicts(checks: &[Check]) -> Vec<Verdict> {
    checks.iter().map(|c| Verdict { name: c.name.clone(), pass: c.pass }).collect()
}

fn print_checks(checks: &[Check]) {
    for c in checks {
        let se = c.estimate.se.map_or(String::from("exact"), |s| format!("{s:.2e}"));
        println!("{} {} = {:.6e} ({se})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.estimate.value);
    }
}

/// Returns whether every check passed.
pub fn simulate(o: &Overrides) -> Result<bool> {
    let Loaded { cfg, out, .. } = load(o)?;
    let params = single_point(&cfg)?;
    let seed = cfg.ensemble.seed;
    let mut times = vec![0.0];
    times.extend(params.t_list.iter().copied());
    let mut sim = Simulator::new(params.clone())?;
    let traj = sim
        .run_at(&mut RngStream::new(seed, 0), &times)
        .map_err(|e| Error::Replica { replica: 0, seed, source: Box::new(e) })?;
    let phi = cfg.phi_spec().build(&params.grid)?;

    let mut dir = ResultsDir::create(&out)?;
    dir.write("config.toml", cfg.to_toml()?.as_bytes())?;
    for (k, snap) in traj.snapshots().iter().enumerate() {
        let mut bytes = Vec::new();
        snap.write_record(&mut bytes)?;
        dir.write(&format!("snapshot_{k:03}.bin"), &bytes)?;
    }
    let mut obs = csv::Writer::from_writer(Vec::new());
    obs.write_record(["replica", "t", "phi_id", "value"])?;
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for &t in &params.t_list {
        let value = observable(&traj, t, &phi)?;
        obs.write_record(["0".to_string(), t.to_string(), "phi0".into(), value.to_string()])?;
        rows.push(TidyRow::new(&params, t, "pairing", Estimate::exact(value)));
        if params.lambda == 0.0 {
            let heat = heat_of_initial(&traj, t)?;
            let gap = traj.at(t)?.sub(&heat)?.max_abs() / heat.max_abs().max(f64::MIN_POSITIVE);
            checks.push(Check::new(format!("pure_heat@t={t}"), Estimate::exact(gap), Rule::AtMost {
                bound: 1e-10,
                z: 0.0,
            }));
        }
    }
    dir.write("observables.csv", &obs.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)?;
    dir.write("stats.csv", &tidy_csv(&rows)?)?;
    dir.write("report.json", serde_json::to_string_pretty(&checks)?.as_bytes())?;
    print_checks(&checks);
    let pass = checks.iter().all(|c| c.pass);
    dir.finish("simulate", cfg.hash()?, verdicts(&checks), 1)?;
    println!("wrote {}", out.display());
    Ok(pass)
}

/// A persisted ensemble at one ladder point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredEnsemble {
    pub lambda: f64,
    pub eps: f64,
    pub accumulator: EnsembleAccumulator,
}

fn accumulator_name(i: usize, j: usize) -> String {
    format!("accumulator_{i:02}_{j:02}.json")
}

pub fn ensemble_rows(acc: &EnsembleAccumulator, params: &SimParams, cfg: &RunConfig) -> Result<Vec<TidyRow>> {
    let mut rows = Vec::new();
    let index = |obs: Observable| acc.index_of(&obs.name());
    for &t in &params.t_list {
        let i = index(Observable::Pairing { t })?;
        rows.push(TidyRow::new(params, t, "pairing_mean", acc.estimate(|m| m.mean(i))));
        rows.push(TidyRow::new(params, t, "pairing_variance", acc.estimate(|m| m.variance(i))));
        for k in 3..=8 {
            rows.push(TidyRow::new(params, t, format!("pairing_standardized_{k}"), acc.estimate(|m| m.standardized(i, k))));
        }
        rows.push(TidyRow::new(params, t, "cross_correlation", cross_correlation(acc, t)?));
        let j = index(Observable::SecondMoment { t })?;
        rows.push(TidyRow::new(params, t, "pointwise_second_moment", acc.estimate(|m| m.mean(j))));
    }
    for &s in &cfg.sim.s_ladder {
        rows.push(TidyRow::new(params, params.micro_time(s), format!("sigma_sq@s={s}"), sigma_lambda_estimate(acc, s)?));
    }
    Ok(rows)
}

fn suite_checks(names: &[String], acc: &EnsembleAccumulator, params: &SimParams, cfg: &RunConfig) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for name in names.iter().filter(|n| ENSEMBLE_SUITES.contains(&n.as_str())) {
        for mut c in suites::ensemble_suite(name, acc, params, cfg)? {
            c.name = format!("{name}:lambda={},eps={}:{}", params.lambda, params.eps, c.name);
            checks.push(c);
        }
    }
    Ok(checks)
}

fn check_suites(names: &[String]) -> Result<()> {
    for n in names {
        suites::check_suite_name(n)?;
    }
    Ok(())
}

pub fn ensemble(o: &Overrides) -> Result<bool> {
    let Loaded { cfg, out, spec } = load(o)?;
    check_suites(&cfg.suites)?;
    let mut dir = ResultsDir::create(&out)?;
    dir.write("config.toml", cfg.to_toml()?.as_bytes())?;
    let registry = suites::registry_for_suites(&cfg);
    let (mut rows, mut reports, mut checks) = (Vec::new(), Vec::new(), Vec::new());
    for (i, &lambda) in cfg.sim.lambda.iter().enumerate() {
        for (j, &eps) in cfg.sim.eps.iter().enumerate() {
            let params = cfg.params(lambda, eps)?;
            let acc = ensemble_run(&params, registry.clone(), &spec)?;
            let stored = StoredEnsemble { lambda, eps, accumulator: acc };
            dir.write(&accumulator_name(i, j), serde_json::to_string(&stored)?.as_bytes())?;
            let acc = stored.accumulator;
            rows.extend(ensemble_rows(&acc, &params, &cfg)?);
            let point = suite_checks(&cfg.suites, &acc, &params, &cfg)?;
            let mut report = MomentReport::summarize(format!("lambda={lambda},eps={eps}"), &acc, DEFAULT_Z);
            point.iter().cloned().for_each(|c| report.push(c));
            checks.extend(point);
            reports.push(report);
        }
    }
    dir.write("stats.csv", &tidy_csv(&rows)?)?;
    dir.write("checks.csv", checks_to_csv(&checks).as_bytes())?;
    dir.write("report.json", serde_json::to_string_pretty(&reports)?.as_bytes())?;
    print_checks(&checks);
    let replicas = spec.n_replicas * (cfg.sim.lambda.len() * cfg.sim.eps.len()) as u64;
    dir.finish("ensemble", cfg.hash()?, verdicts(&checks), replicas)?;
    println!("wrote {}", out.display());
    Ok(checks.iter().all(|c| c.pass))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteVerdict {
    pub suite: String,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub criteria: Vec<CriterionOutcome>,
}

pub fn verify(o: &Overrides) -> Result<bool> {
    let Loaded { cfg, out, spec } = load(o)?;
    if cfg.suites.is_empty() {
        return Err(Error::Config(format!(
            "no suite selected; known suites: {}",
            suites::KNOWN_SUITES.join(", ")
        ))
        .into());
    }
    check_suites(&cfg.suites)?;
    let mut dir = ResultsDir::create(&out)?;
    dir.write("config.toml", cfg.to_toml()?.as_bytes())?;
    let mut results = Vec::new();
    let mut shared: Option<(SimParams, EnsembleAccumulator)> = None;
    let mut replicas = 0;
    for name in &cfg.suites {
        let verdict = match name.as_str() {
            "deterministic" => {
                let criteria = suites::run_standalone(name, Desk::standard())?;
                let checks: Vec<Check> = criteria.iter().flat_map(|c| c.checks.clone()).collect();
                print_checks(&checks);
                SuiteVerdict { suite: name.clone(), pass: checks.iter().all(|c| c.pass), checks, criteria: vec![] }
            }
            "clt-desk" => {
                let mut desk = Desk::from_config(&cfg)?;
                desk.workers = spec.workers;
                replicas += desk.replicas;
                let mut lab = Lab::new(desk);
                let mut criteria = Vec::new();
                for id in 1..=12 {
                    let outcome = lab.run(id)?;
                    println!("{}", outcome.line());
                    criteria.push(outcome);
                }
                let pass = criteria.iter().all(CriterionOutcome::pass);
                SuiteVerdict { suite: name.clone(), pass, checks: vec![], criteria }
            }
            _ => {
                if shared.is_none() {
                    let params = cfg.params(cfg.sim.lambda[0], cfg.sim.eps[0])?;
                    let acc = ensemble_run(&params, suites::registry_for_suites(&cfg), &spec)?;
                    replicas += spec.n_replicas;
                    shared = Some((params, acc));
                }
                let (params, acc) = shared.as_ref().expect("set above");
                let checks = suite_checks(std::slice::from_ref(name), acc, params, &cfg)?;
                print_checks(&checks);
                SuiteVerdict { suite: name.clone(), pass: checks.iter().all(|c| c.pass), checks, criteria: vec![] }
            }
        };
        println!("suite {} {}", verdict.suite, if verdict.pass { "PASS" } else { "FAIL" });
        results.push(verdict);
    }
    dir.write("verdicts.json", serde_json::to_string_pretty(&results)?.as_bytes())?;
    let summary: Vec<Verdict> = results.iter().map(|r| Verdict { name: r.suite.clone(), pass: r.pass }).collect();
    dir.finish("verify", cfg.hash()?, summary, replicas)?;
    Ok(results.iter().all(|r| r.pass))
}

/// One row of the coupling table read off the largest microscopic index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaRow {
    pub lambda: f64,
    pub eps: f64,
    pub s: usize,
    pub sigma_sq: f64,
    pub se: Option<f64>,
}

pub fn report(dir: &Path, out: Option<&Path>) -> Result<()> {
    let manifest = RunManifest::read(dir)?;
    let cfg = RunConfig::from_path(&dir.join("config.toml"))?;
    let out = out.map_or_else(|| dir.join("report"), Path::to_path_buf);
    let mut stored = Vec::new();
    for f in manifest.files.iter().filter(|f| f.path.starts_with("accumulator_")) {
        let text = std::fs::read_to_string(dir.join(&f.path)).with_context(|| format!("reading {}", f.path))?;
        let e: StoredEnsemble = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", f.path)))?;
        stored.push(e);
    }
    std::fs::create_dir_all(&out)?;
    let mut summary = format!("command: {}\nconfig hash: {}\n", manifest.command, manifest.config_hash);
    for v in &manifest.verdicts {
        summary.push_str(&format!("{} {}\n", if v.pass { "PASS" } else { "FAIL" }, v.name));
    }
    let mut rows = Vec::new();
    let mut sigma = Vec::new();
    let s = cfg.s_max();
    for e in &stored {
        let params = cfg.params(e.lambda, e.eps)?;
        rows.extend(ensemble_rows(&e.accumulator, &params, &cfg)?);
        if s > 0 {
            let est = sigma_lambda_estimate(&e.accumulator, s)?;
            sigma.push(SigmaRow { lambda: e.lambda, eps: e.eps, s, sigma_sq: est.value, se: est.se });
        }
    }
    if stored.is_empty() {
        let simulated = dir.join("stats.csv");
        if simulated.is_file() {
            std::fs::copy(&simulated, out.join("tidy.csv"))?;
        }
    } else {
        std::fs::write(out.join("tidy.csv"), tidy_csv(&rows)?)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &sigma {
            w.serialize(r)?;
        }
        std::fs::write(out.join("sigma_lambda.csv"), w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)?;
        summary.push_str(&format!("{} ensembles, {} tidy rows\n", stored.len(), rows.len()));
        for r in &sigma {
            let se = r.se.map_or(String::from("n/a"), |x| format!("{x:.2e}"));
            summary.push_str(&format!("sigma^2 lambda={} eps={} s={}: {:.5} ± {se}\n", r.lambda, r.eps, r.s, r.sigma_sq));
        }
    }
    std::fs::write(out.join("summary.txt"), summary)?;
    println!("wrote {}", out.display());
    Ok(())
}
