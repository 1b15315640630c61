//! The built-in scenarios. Each returns a JSON summary plus named CSV series.

use crate::config::{GietSource, Scenario, ScenarioConfig};
use crate::error::CliError;
use gietlab::birkhoff::{decay_csv, decay_profile};
use gietlab::diophantine::growth_fit_xy;
use gietlab::distance::c2_distance_to_iets;
use gietlab::regularity::{holder_fit, holder_quotient, HolderConfig};
use gietlab::{tpg_probe, GrowthFit, InductionChain, Observable, OrbitCache, SpecialSums, StandardIet, Towers};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::{Float, Integer};
use serde_json::{json, Value};
use std::fmt::Write as _;

/// Outputs of one scenario, before they are written anywhere.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioOutput {
    pub summary: Value,
    /// (file name, contents), in a fixed order.
    pub series: Vec<(String, String)>,
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutput, CliError> {
    match cfg.scenario {
        Scenario::RotationSanity => rotation_sanity(cfg),
        Scenario::SbsDecay => sbs_decay(cfg),
        Scenario::BrokenDecay => broken_decay(cfg),
        Scenario::Holder => holder(cfg),
        Scenario::Tpg => tpg(cfg),
    }
}

/// Partial quotients of max(a,b)/min(a,b), by Euclid on the exact dyadic
/// values. Stops early if the remainder vanishes.
pub fn dyadic_quotients(a: &Float, b: &Float, n: usize) -> Vec<u64> {
    let (ma, ea) = a.to_integer_exp().expect("finite");
    let (mb, eb) = b.to_integer_exp().expect("finite");
    let e = ea.min(eb);
    let mut x: Integer = ma << (ea - e) as u32;
    let mut y: Integer = mb << (eb - e) as u32;
    if x < y {
        std::mem::swap(&mut x, &mut y);
    }
    let mut out = Vec::with_capacity(n);
    while out.len() < n && y != 0 {
        let (q, r) = x.div_rem_floor(y.clone());
        out.push(q.to_u64().unwrap_or(u64::MAX));
        x = y;
        y = r;
    }
    out
}

/// Zorich run lengths of a 2-interval exchange.
pub fn zorich_runs(t: &StandardIet, n: usize, cfg: &ScenarioConfig) -> Result<Vec<u64>, CliError> {
    let mut chain = InductionChain::with_config(t.giet().clone(), gietlab::Acceleration::Zorich, cfg.induction());
    chain.extend_to(n)?;
    Ok(chain.records().iter().map(|r| r.rv_steps).collect())
}

/// Rotation numbers with full random mantissas in (0, 1).
pub fn random_rotations(seed: u64, n: usize, prec: u32) -> Vec<Float> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| gietlab::real::random_unit(prec, || rng.gen())).collect()
}

fn rotation_sanity(cfg: &ScenarioConfig) -> Result<ScenarioOutput, CliError> {
    let n = cfg.samples.quotients;
    let mut cases: Vec<(String, StandardIet)> = Vec::new();
    if matches!(cfg.giet, GietSource::Golden | GietSource::Rotation { .. } | GietSource::Standard { .. }) {
        let t = cfg.build_standard()?;
        if t.giet().d() != 2 {
            return Err(CliError::Config("rotation-sanity needs a 2-interval map".into()));
        }
        cases.push(("configured".into(), t));
    }
    for (i, a) in random_rotations(cfg.seed, cfg.samples.rotations, cfg.precision_bits).iter().enumerate() {
        cases.push((format!("random-{i}"), StandardIet::rotation(a)));
    }
    if cases.is_empty() {
        return Err(CliError::Config("rotation-sanity has nothing to check: use a standard map or samples.rotations > 0".into()));
    }
    let mut csv = String::from("case,index,zorich_run,partial_quotient\n");
    let mut per_case = Vec::new();
    let mut all = true;
    for (name, t) in &cases {
        let l = t.giet().lambdas();
        let quotients = dyadic_quotients(&l[0], &l[1], n);
        let runs = zorich_runs(t, quotients.len(), cfg)?;
        let matched = runs.iter().zip(&quotients).take_while(|(a, b)| a == b).count();
        all &= matched == n;
        for (i, (r, q)) in runs.iter().zip(&quotients).enumerate() {
            let _ = writeln!(csv, "{name},{},{r},{q}", i + 1);
        }
        per_case.push(json!({ "case": name, "matched": matched, "of": n }));
    }
    let summary = json!({
        "scenario": cfg.scenario.name(),
        "quotients": n,
        "cases": per_case,
        "all_matched": all,
    });
    Ok(ScenarioOutput { summary, series: vec![("quotients.csv".into(), csv)] })
}

fn chain_for(cfg: &ScenarioConfig, depth: usize) -> Result<InductionChain, CliError> {
    let mut chain = InductionChain::with_config(cfg.build_giet()?, cfg.budget.acceleration, cfg.induction());
    chain.extend_to(depth)?;
    Ok(chain)
}

/// OLS of ln(value) over the levels where the value is positive.
fn log_fit(ks: &[usize], vals: &[f64]) -> Option<GrowthFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = ks.iter().zip(vals).filter(|(_, v)| **v > 0.0).map(|(k, v)| (*k as f64, v.ln())).unzip();
    growth_fit_xy(&x, &y).ok()
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// ‖f_k‖∞ and d_{C²}(R^k T, I_d) for k = 0..=depth.
pub struct SbsSeries {
    pub ks: Vec<usize>,
    pub sup_norms: Vec<f64>,
    pub c2_distances: Vec<f64>,
}

pub fn sbs_series(chain: &InductionChain, depth: usize, sup_points: usize) -> Result<SbsSeries, CliError> {
    let sums = SpecialSums::new(chain, Observable::LogDerivative).with_samples(sup_points);
    let ks: Vec<usize> = (0..=depth).collect();
    let mut sup_norms = Vec::new();
    let mut c2_distances = Vec::new();
    for &k in &ks {
        sup_norms.push(sums.sup_norm(k)?);
        c2_distances.push(c2_distance_to_iets(&chain.renormalized(k)));
    }
    Ok(SbsSeries { ks, sup_norms, c2_distances })
}

fn sbs_decay(cfg: &ScenarioConfig) -> Result<ScenarioOutput, CliError> {
    let depth = cfg.budget.depth;
    let chain = chain_for(cfg, depth)?;
    let s = sbs_series(&chain, depth, cfg.samples.sup_points)?;
    let lo = cfg.samples.fit_from;
    let zero = s.sup_norms.iter().all(|v| *v == 0.0);
    let fit = if zero { None } else { log_fit(&s.ks[lo..], &s.sup_norms[lo..]) };
    let c2_fit = log_fit(&s.ks[lo..], &s.c2_distances[lo..]);
    let mut csv = String::from("k,sup_norm_fk,c2_distance\n");
    for i in 0..s.ks.len() {
        let _ = writeln!(csv, "{},{:e},{:e}", s.ks[i], s.sup_norms[i], s.c2_distances[i]);
    }
    let summary = json!({
        "scenario": cfg.scenario.name(),
        "fit_range": [lo, depth],
        "identically_zero": zero,
        "sup_norm_fit": fit,
        "sup_norm_decays": fit.is_some_and(|f| f.slope < 0.0),
        "c2_fit": c2_fit,
        "c2_constant": c2_fit.map(|f| f.intercept.exp()),
        "c2_decreasing": strictly_decreasing(&s.c2_distances[lo..]),
    });
    Ok(ScenarioOutput { summary, series: vec![("sbs.csv".into(), csv)] })
}

fn broken_decay(cfg: &ScenarioConfig) -> Result<ScenarioOutput, CliError> {
    let depth = cfg.budget.depth;
    let chain = chain_for(cfg, depth + 1)?;
    let lo = cfg.samples.fit_from;
    let rows = decay_profile(&chain, &Observable::LogDerivative, lo..=depth, cfg.samples.max_breaks)?;
    let ks: Vec<usize> = rows.iter().map(|r| r.k).collect();
    let dev: Vec<f64> = rows.iter().map(|r| r.deviation).collect();
    let summary = json!({
        "scenario": cfg.scenario.name(),
        "fit_range": [lo, depth],
        "identically_zero": dev.iter().all(|v| *v == 0.0),
        "deviation_fit": log_fit(&ks, &dev),
        "deviation_strictly_decreasing": strictly_decreasing(&dev),
    });
    Ok(ScenarioOutput { summary, series: vec![("broken.csv".into(), decay_csv(&rows))] })
}

/// Pairs x < y with x uniform and log-uniform gaps in [1e-4, 1e-1].
pub fn sample_pairs(seed: u64, n: usize, prec: u32) -> Vec<(Float, Float)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let gap = 10f64.powf(rng.gen_range(-4.0..-1.0));
            let x: f64 = rng.gen_range(0.001..1.0 - gap - 0.001);
            (Float::with_val(prec, x), Float::with_val(prec, x + gap))
        })
        .collect()
}

fn holder(cfg: &ScenarioConfig) -> Result<ScenarioOutput, CliError> {
    let depth = cfg.budget.depth;
    let chain = chain_for(cfg, depth + 1)?;
    let lo = cfg.samples.fit_from;
    // C(T) in d_{C²}(R^k T, I_d) ≤ C(T) ρ^k
    let ks: Vec<usize> = (lo..=depth).collect();
    let c2: Vec<f64> = ks.iter().map(|&k| c2_distance_to_iets(&chain.renormalized(k))).collect();
    let c2_fit = log_fit(&ks, &c2);
    let towers = Towers::build(chain, depth, cfg.budget.floor_cap)?;
    let mut orbit = OrbitCache::new(towers.chain().base(), cfg.budget.orbit_cap);
    let hc = HolderConfig { depth, margin: cfg.samples.margin, c2_constant: c2_fit.map(|f| f.intercept.exp()), ..Default::default() };
    let pairs = sample_pairs(cfg.seed, cfg.samples.pairs, cfg.precision_bits);
    let report = holder_fit(&towers, &mut orbit, &pairs, &hc)?;
    let quotient = report.alpha.map(|a| holder_quotient(&report, a));
    let summary = json!({
        "scenario": cfg.scenario.name(),
        "depth": depth,
        "pairs": pairs.len(),
        "lambda1": report.lambda1,
        "lambda2": report.lambda2,
        "alpha": report.alpha,
        "holder_constant": report.holder_constant,
        "holder_quotient": quotient,
        "quantitative_distance": report.quantitative_distance,
        "flags": report.flags,
        "skipped_pairs": report.skipped_pairs,
        "used_pairs": report.per_pair.len(),
    });
    Ok(ScenarioOutput { summary, series: vec![("pairs.csv".into(), report.to_csv())] })
}

fn tpg(cfg: &ScenarioConfig) -> Result<ScenarioOutput, CliError> {
    let t0 = cfg.build_standard()?;
    let r = tpg_probe(&t0, cfg.budget.depth, &cfg.induction());
    let csv = r.to_csv();
    let mut summary = serde_json::to_value(&r).expect("report serializes");
    summary["scenario"] = json!(cfg.scenario.name());
    Ok(ScenarioOutput { summary, series: vec![("norms.csv".into(), csv)] })
}
