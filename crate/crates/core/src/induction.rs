//! Rauzy–Veech induction, its Zorich and positive accelerations, and the
//! integer cocycle.
//!
//! Conventions: α is the label of the last top interval, β of the last bottom
//! interval. Heights obey q_{n+1} = A_n q_n with q_0 = (1,…,1) and
//! A_n = I + e_{loser,winner}; for standard IETs lengths obey
//! λ_n = A_nᵀ λ_{n+1}. Products are Q(m,n) = A_{n−1}···A_m.

use crate::combinatorics::Combinatorics;
use crate::diffeo::Diffeo;
use crate::giet::Giet;
use crate::matrix::IncidenceMatrix;
use crate::real::to_decimal;
use rug::{Float, Integer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InductionError {
    #[error("numerical connection at elementary step {step}: |λ_α − μ_β| = {gap:e}")]
    NumericalConnection { step: u64, gap: f64 },
    #[error("a Zorich run exceeded {cap} elementary steps")]
    RunLimitExceeded { cap: u64 },
    #[error("no positive product after {cap} Zorich steps")]
    PositivityTimeout { cap: usize },
    #[error("cocycle range {m}..{n} invalid with {available} steps available")]
    Range { m: usize, n: usize, available: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Winner {
    Top,
    Bottom,
}

/// Result of one elementary Rauzy–Veech step.
#[derive(Clone, Debug)]
pub struct RvStep {
    pub giet: Giet,
    pub matrix: IncidenceMatrix,
    pub winner: Winner,
    pub winner_label: usize,
    pub loser_label: usize,
}

/// Compare the last top and last bottom intervals.
pub fn peek_winner(t: &Giet) -> Result<Winner, InductionError> {
    let comb = t.combinatorics();
    let d = t.d();
    let a = comb.top()[d - 1];
    let b = comb.bottom()[d - 1];
    let gap = Float::with_val(t.precision(), t.lambda(a) - t.mu(b));
    if gap.clone().abs() <= t.tau() {
        return Err(InductionError::NumericalConnection { step: 0, gap: gap.to_f64().abs() });
    }
    Ok(if gap.is_sign_positive() { Winner::Top } else { Winner::Bottom })
}

/// One elementary step: first return to [0, L − min(λ_α, μ_β)).
pub fn rv_step(t: &Giet) -> Result<RvStep, InductionError> {
    let winner = peek_winner(t)?;
    let prec = t.precision();
    let comb = t.combinatorics();
    let d = t.d();
    let a = comb.top()[d - 1];
    let b = comb.bottom()[d - 1];
    let mut top = t.lambdas();
    let mut bottom = t.mus();
    let mut profiles = t.profiles();
    let (pa, pb) = (t.profile(a).clone(), t.profile(b).clone());
    let both_translations = t.is_translation(a) && t.is_translation(b);
    let f = |x: Float| Float::with_val(prec, x);
    let one = f(Float::with_val(prec, 1));
    let zero = Float::new(prec);
    let (mut top_order, mut bottom_order) = (comb.top().to_vec(), comb.bottom().to_vec());
    match winner {
        Winner::Top => {
            let c = f(1 - Float::with_val(prec, &bottom[b] / &top[a]));
            let new_top_a = f(Float::with_val(prec, &top[a] - &bottom[b]));
            let (new_mu_a, new_mu_b) = if both_translations {
                (new_top_a.clone(), bottom[b].clone())
            } else {
                let phc = if pa.is_identity() { c.clone() } else { pa.eval(&c) };
                let m = f(Float::with_val(prec, &bottom[a] * &phc));
                let rest = f(Float::with_val(prec, &bottom[a] - &m));
                if !pa.is_identity() {
                    profiles[a] = Diffeo::compose(vec![
                        Diffeo::affine(c.clone(), zero.clone()),
                        pa.clone(),
                        Diffeo::affine(f(Float::with_val(prec, phc.recip_ref())), zero.clone()),
                    ]);
                    let omp = f(Float::with_val(prec, &one - &phc));
                    profiles[b] = Diffeo::compose(vec![
                        pb.clone(),
                        Diffeo::affine(f(Float::with_val(prec, &one - &c)), c.clone()),
                        pa.clone(),
                        Diffeo::affine(f(Float::with_val(prec, omp.recip_ref())), -f(Float::with_val(prec, &phc / &omp))),
                    ]);
                }
                (m, rest)
            };
            top[a] = new_top_a;
            bottom[a] = new_mu_a;
            bottom[b] = new_mu_b;
            // β moves to just after α in the bottom row
            bottom_order.pop();
            let pos = bottom_order.iter().position(|&l| l == a).unwrap();
            bottom_order.insert(pos + 1, b);
        }
        Winner::Bottom => {
            let target = f(1 - Float::with_val(prec, &top[a] / &bottom[b]));
            let new_mu_b = f(Float::with_val(prec, &bottom[b] - &top[a]));
            let (new_top_b, new_top_a) = if both_translations {
                (new_mu_b.clone(), top[a].clone())
            } else {
                let c = if pb.is_identity() { target.clone() } else { pb.eval_inverse(&target) };
                let l = f(Float::with_val(prec, &top[b] * &c));
                let rest = f(Float::with_val(prec, &top[b] - &l));
                if !pb.is_identity() {
                    profiles[b] = Diffeo::compose(vec![
                        Diffeo::affine(c.clone(), zero.clone()),
                        pb.clone(),
                        Diffeo::affine(f(Float::with_val(prec, target.recip_ref())), zero.clone()),
                    ]);
                }
                if !(pa.is_identity() && pb.is_identity()) {
                    let s = f(Float::with_val(prec, &bottom[b] / &top[a]));
                    profiles[a] = Diffeo::compose(vec![
                        Diffeo::affine(f(Float::with_val(prec, &one - &c)), c.clone()),
                        pb.clone(),
                        Diffeo::affine(s.clone(), f(1 - s)),
                        pa.clone(),
                    ]);
                }
                (l, rest)
            };
            top[b] = new_top_b;
            top[a] = new_top_a;
            bottom[b] = new_mu_b;
            top_order.pop();
            let pos = top_order.iter().position(|&l| l == b).unwrap();
            top_order.insert(pos + 1, a);
        }
    }
    let (winner_label, loser_label) = match winner {
        Winner::Top => (a, b),
        Winner::Bottom => (b, a),
    };
    let comb = Combinatorics::from_rows_unchecked(top_order, bottom_order);
    Ok(RvStep {
        giet: Giet::assemble(comb, top, bottom, profiles, prec),
        matrix: IncidenceMatrix::elementary(d, loser_label, winner_label),
        winner,
        winner_label,
        loser_label,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Acceleration {
    /// Every elementary step is a level.
    Rauzy,
    /// Maximal runs with a constant winner.
    Zorich,
    /// Zorich runs grouped until the product is strictly positive.
    Positive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InductionConfig {
    /// Maximum elementary steps in one Zorich run.
    pub run_cap: u64,
    /// Maximum Zorich runs in one positive block.
    pub positivity_cap: usize,
}

impl Default for InductionConfig {
    fn default() -> Self {
        InductionConfig { run_cap: 1_000_000, positivity_cap: 10_000 }
    }
}

/// One acceleration step.
#[derive(Clone, Debug)]
pub struct InductionRecord {
    /// Index k of the step (A_k maps level-k heights to level k+1).
    pub k: usize,
    pub matrix: IncidenceMatrix,
    pub rv_steps: u64,
    /// Elementary steps consumed up to and including this record.
    pub n_k: u64,
    /// Induced map at level k+1, not rescaled.
    pub induced: Giet,
    /// Winner and length of each Zorich run inside this step.
    pub runs: Vec<(Winner, u64)>,
}

impl InductionRecord {
    /// Length of the inducing interval.
    pub fn inducing_length(&self) -> &Float {
        self.induced.length()
    }
}

fn zorich_run(t: &Giet, cap: u64, step0: u64) -> Result<(Giet, IncidenceMatrix, Winner, u64), InductionError> {
    let at = |e: InductionError, n: u64| match e {
        InductionError::NumericalConnection { gap, .. } => InductionError::NumericalConnection { step: step0 + n + 1, gap },
        other => other,
    };
    let first = rv_step(t).map_err(|e| at(e, 0))?;
    let winner = first.winner;
    let mut mat = first.matrix;
    let mut g = first.giet;
    let mut n = 1;
    loop {
        match peek_winner(&g) {
            Ok(w) if w == winner => {}
            Ok(_) => break,
            // a tie ends the run; the next step reports it
            Err(_) => break,
        }
        if n >= cap {
            return Err(InductionError::RunLimitExceeded { cap });
        }
        let s = rv_step(&g).map_err(|e| at(e, n))?;
        mat = s.matrix.mul(&mat);
        g = s.giet;
        n += 1;
    }
    Ok((g, mat, winner, n))
}

/// One Zorich step from `t`; `k` and `n0` only label the record.
pub fn zorich_step(t: &Giet, cfg: &InductionConfig) -> Result<InductionRecord, InductionError> {
    let (g, m, w, n) = zorich_run(t, cfg.run_cap, 0)?;
    Ok(InductionRecord { k: 0, matrix: m, rv_steps: n, n_k: n, induced: g, runs: vec![(w, n)] })
}

/// Zorich steps until the accumulated matrix is strictly positive.
pub fn positive_accel_step(t: &Giet, cfg: &InductionConfig) -> Result<InductionRecord, InductionError> {
    accel_step(t, cfg, Acceleration::Positive, 0)
}

fn accel_step(t: &Giet, cfg: &InductionConfig, acc: Acceleration, n0: u64) -> Result<InductionRecord, InductionError> {
    let d = t.d();
    match acc {
        Acceleration::Rauzy => {
            let s = rv_step(t).map_err(|e| match e {
                InductionError::NumericalConnection { gap, .. } => InductionError::NumericalConnection { step: n0 + 1, gap },
                o => o,
            })?;
            Ok(InductionRecord { k: 0, matrix: s.matrix, rv_steps: 1, n_k: n0 + 1, induced: s.giet, runs: vec![(s.winner, 1)] })
        }
        Acceleration::Zorich => {
            let (g, m, w, n) = zorich_run(t, cfg.run_cap, n0)?;
            Ok(InductionRecord { k: 0, matrix: m, rv_steps: n, n_k: n0 + n, induced: g, runs: vec![(w, n)] })
        }
        Acceleration::Positive => {
            let mut g = t.clone();
            let mut mat = IncidenceMatrix::identity(d);
            let mut runs = Vec::new();
            let mut total = 0;
            while !mat.is_positive() {
                if runs.len() >= cfg.positivity_cap {
                    return Err(InductionError::PositivityTimeout { cap: cfg.positivity_cap });
                }
                let (ng, m, w, n) = zorich_run(&g, cfg.run_cap, n0 + total)?;
                mat = m.mul(&mat);
                g = ng;
                total += n;
                runs.push((w, n));
            }
            Ok(InductionRecord { k: 0, matrix: mat, rv_steps: total, n_k: n0 + total, induced: g, runs })
        }
    }
}

/// Outcome of a connection probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeaneReport {
    /// Elementary steps completed cleanly.
    pub steps_survived: u64,
    /// 1-based elementary step at which a near-connection was detected.
    pub near_connection_at: Option<u64>,
    pub min_length: f64,
}

/// Run up to `n` elementary steps, stopping at the first step whose
/// comparison is a tie within τ or whose output has an interval shorter
/// than τ.
pub fn keane_probe(t: &Giet, n: u64) -> KeaneReport {
    let tau = t.tau();
    let mut g = t.clone();
    let mut min_length = f64::INFINITY;
    for step in 1..=n {
        match rv_step(&g) {
            Ok(s) => {
                let m = s.giet.lambdas().into_iter().chain(s.giet.mus()).min_by(|a, b| a.partial_cmp(b).unwrap()).unwrap();
                min_length = min_length.min(m.to_f64());
                if m < tau {
                    return KeaneReport { steps_survived: step - 1, near_connection_at: Some(step), min_length };
                }
                g = s.giet;
            }
            Err(_) => return KeaneReport { steps_survived: step - 1, near_connection_at: Some(step), min_length },
        }
    }
    KeaneReport { steps_survived: n, near_connection_at: None, min_length }
}

/// Append-only sequence of acceleration steps starting at `base`.
#[derive(Clone, Debug)]
pub struct InductionChain {
    base: Giet,
    acceleration: Acceleration,
    config: InductionConfig,
    records: Vec<InductionRecord>,
    /// products[k] = Q(0,k)
    products: Vec<IncidenceMatrix>,
}

impl InductionChain {
    pub fn new(base: Giet, acceleration: Acceleration) -> Self {
        Self::with_config(base, acceleration, InductionConfig::default())
    }

    pub fn with_config(base: Giet, acceleration: Acceleration, config: InductionConfig) -> Self {
        let d = base.d();
        InductionChain { base, acceleration, config, records: Vec::new(), products: vec![IncidenceMatrix::identity(d)] }
    }

    pub fn base(&self) -> &Giet {
        &self.base
    }

    pub fn acceleration(&self) -> Acceleration {
        self.acceleration
    }

    pub fn d(&self) -> usize {
        self.base.d()
    }

    /// Number of acceleration steps computed.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[InductionRecord] {
        &self.records
    }

    /// Ensure levels 0..=k exist.
    pub fn extend_to(&mut self, k: usize) -> Result<(), InductionError> {
        while self.records.len() < k {
            let last = self.induced(self.records.len());
            let n0 = self.records.last().map_or(0, |r| r.n_k);
            let mut rec = accel_step(last, &self.config, self.acceleration, n0)?;
            rec.k = self.records.len();
            let q = rec.matrix.mul(self.products.last().unwrap());
            self.products.push(q);
            self.records.push(rec);
        }
        Ok(())
    }

    /// Induced (unrescaled) map at level k; level 0 is the base.
    pub fn induced(&self, k: usize) -> &Giet {
        if k == 0 {
            &self.base
        } else {
            &self.records[k - 1].induced
        }
    }

    /// A_k.
    pub fn matrix(&self, k: usize) -> &IncidenceMatrix {
        &self.records[k].matrix
    }

    /// Q(m,n) = A_{n−1}···A_m, with Q(m,m) = I.
    pub fn cocycle(&self, m: usize, n: usize) -> Result<IncidenceMatrix, InductionError> {
        if m > n || n > self.records.len() {
            return Err(InductionError::Range { m, n, available: self.records.len() });
        }
        if m == 0 {
            return Ok(self.products[n].clone());
        }
        let mut q = IncidenceMatrix::identity(self.d());
        for r in &self.records[m..n] {
            q = r.matrix.mul(&q);
        }
        Ok(q)
    }

    /// Return times q_k = Q(0,k)·(1,…,1), indexed by label.
    pub fn heights(&self, k: usize) -> Vec<Integer> {
        self.products[k].row_sums()
    }

    /// R^k T: the level-k induced map rescaled to unit length.
    pub fn renormalized(&self, k: usize) -> Giet {
        self.induced(k).normalized()
    }

    /// One JSON object per acceleration step.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let line = serde_json::json!({
                "k": r.k,
                "n_k": r.n_k,
                "matrix": r.matrix,
                "lambda_norm": to_decimal(r.inducing_length()),
                "winner_history": r.runs,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }
}

/// The same operations with the default configuration.
pub fn cocycle_product(chain: &InductionChain, m: usize, n: usize) -> Result<IncidenceMatrix, InductionError> {
    if m >= n {
        return Err(InductionError::Range { m, n, available: chain.len() });
    }
    chain.cocycle(m, n)
}

/// R^k T, extending a fresh positive chain as needed.
pub fn renormalized_map(t: &Giet, k: usize) -> Result<Giet, InductionError> {
    let mut c = InductionChain::new(t.clone(), Acceleration::Positive);
    c.extend_to(k)?;
    Ok(c.renormalized(k))
}
