//! Numeric conjugacy to the linear model, single orbit approximations of
//! pairs of points by the orbit of 0, and the Hölder-exponent fit.
//!
//! Sign convention: with H∘T = T₀∘H, the function φ = −log DH solves
//! φ∘T − φ = log DT, so φ(z_q) − φ(z_p) = S_{q−p} f(z_p) along any orbit.

use crate::birkhoff::{broken_sup_estimate, BirkhoffError, Observable, SpecialSums};
use crate::giet::{Giet, Side};
use crate::induction::InductionChain;
use crate::real::{to_decimal, tolerance};
use crate::towers::{Covering, DynamicalPartition, FloorAddress, TowerError, Towers};
use rug::Float;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegularityError {
    #[error("partitions differ at level {level}: {detail}")]
    PartitionMismatch { level: usize, detail: String },
    #[error("no orbit entry into the target floor of level {level} within {window} steps")]
    WindowExhausted { level: usize, window: u64 },
    #[error("level {needed} needed but only {available} available")]
    DepthBudget { needed: usize, available: usize },
    #[error("orbit of 0 would need {needed} points, over the cap of {cap}")]
    OrbitBudget { needed: u64, cap: u64 },
    #[error("points are not in the same floor of level {level}")]
    NotSameFloor { level: usize },
    #[error("pair scale {k0} is too coarse for an approximation (needs k0 ≥ 1)")]
    ScaleTooCoarse { k0: usize },
    #[error("pair straddles the floor endpoint {shared}; split it first")]
    Straddles { shared: f64 },
    #[error("not enough usable pairs for a fit ({0})")]
    InsufficientData(usize),
    #[error(transparent)]
    Tower(#[from] TowerError),
    #[error(transparent)]
    Birkhoff(#[from] BirkhoffError),
}

/// Monotone piecewise-linear map through sorted nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseLinear {
    xs: Vec<Float>,
    ys: Vec<Float>,
}

impl PiecewiseLinear {
    pub fn identity(prec: u32) -> Self {
        PiecewiseLinear { xs: vec![Float::new(prec), Float::with_val(prec, 1)], ys: vec![Float::new(prec), Float::with_val(prec, 1)] }
    }

    pub fn nodes(&self) -> (&[Float], &[Float]) {
        (&self.xs, &self.ys)
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn eval(&self, x: &Float) -> Float {
        let prec = x.prec();
        let i = self.xs.partition_point(|a| a <= x).clamp(1, self.xs.len() - 1);
        let (x0, x1) = (&self.xs[i - 1], &self.xs[i]);
        let (y0, y1) = (&self.ys[i - 1], &self.ys[i]);
        let t = Float::with_val(prec, x - x0) / Float::with_val(prec, x1 - x0);
        Float::with_val(prec, y1 - y0) * t + y0
    }

    pub fn is_increasing(&self) -> bool {
        self.xs.windows(2).all(|w| w[0] < w[1]) && self.ys.windows(2).all(|w| w[0] < w[1])
    }

    /// Symmetric difference quotients at interior nodes, as (node, slope).
    pub fn node_slopes(&self) -> Vec<(f64, f64)> {
        (1..self.xs.len() - 1)
            .map(|i| {
                let dy = Float::with_val(self.xs[i].prec(), &self.ys[i + 1] - &self.ys[i - 1]);
                let dx = Float::with_val(self.xs[i].prec(), &self.xs[i + 1] - &self.xs[i - 1]);
                (self.xs[i].to_f64(), (dy / dx).to_f64())
            })
            .collect()
    }
}

/// h_k: sends the sorted floor endpoints of P_k(T) to those of P_k(T₀),
/// linear in between. Both partitions must list the same towers in the same
/// order.
pub fn numeric_conjugacy(p: &DynamicalPartition, p0: &DynamicalPartition) -> Result<PiecewiseLinear, RegularityError> {
    let level = p.level();
    if p.len() != p0.len() {
        return Err(RegularityError::PartitionMismatch { level, detail: format!("{} floors against {}", p.len(), p0.len()) });
    }
    for (i, (a, b)) in p.floors().iter().zip(p0.floors()).enumerate() {
        if (a.tower, a.height) != (b.tower, b.height) {
            return Err(RegularityError::PartitionMismatch {
                level,
                detail: format!("position {i}: floor ({}, {}) against ({}, {})", a.tower + 1, a.height, b.tower + 1, b.height),
            });
        }
    }
    let ends = |q: &DynamicalPartition| {
        let mut v: Vec<Float> = q.floors().iter().map(|f| f.left.clone()).collect();
        v.push(q.floors().last().unwrap().right.clone());
        v
    };
    Ok(PiecewiseLinear { xs: ends(p), ys: ends(p0) })
}

/// sup over a grid of |h(T x) − T₀(h x)|, skipping points within τ of a
/// discontinuity of either map.
pub fn conjugacy_residual(h: &PiecewiseLinear, t: &Giet, t0: &Giet, grid: usize) -> f64 {
    let prec = t.precision();
    let tau = tolerance(prec);
    let near = |x: &Float, cuts: &[Float]| cuts.iter().any(|c| Float::with_val(prec, x - c).abs() < tau);
    let mut worst = 0.0f64;
    for i in 0..grid {
        let x = Float::with_val(prec, (i as f64 + 0.5) / grid as f64);
        let hx = h.eval(&x);
        if near(&x, t.top_cuts()) || near(&hx, t0.top_cuts()) {
            continue;
        }
        let a = h.eval(&t.apply_halfopen(&x));
        let b = t0.apply_halfopen(&hx);
        worst = worst.max((a - b).abs().to_f64());
    }
    worst
}

/// φ = −log DH estimated at the nodes of h_k, kept only where the estimate
/// from h_{k+1} (interpolated) agrees within `tol`.
pub fn stable_log_derivative(hk: &PiecewiseLinear, hk1: &PiecewiseLinear, tol: f64) -> Vec<(f64, f64)> {
    let fine = hk1.node_slopes();
    let xs: Vec<f64> = fine.iter().map(|p| p.0).collect();
    hk.node_slopes()
        .into_iter()
        .filter_map(|(x, s)| {
            let i = xs.partition_point(|a| *a <= x);
            if i == 0 || i >= xs.len() {
                return None;
            }
            let (x0, s0) = fine[i - 1];
            let (x1, s1) = fine[i];
            let s_fine = s0 + (s1 - s0) * (x - x0) / (x1 - x0);
            let (a, b) = (-s.ln(), -s_fine.ln());
            ((a - b).abs() <= tol).then_some((x, b))
        })
        .collect()
}

/// The orbit z_n = Tⁿ(0) with prefix sums Φ_n = S_n f(0), grown on demand.
#[derive(Clone, Debug)]
pub struct OrbitCache {
    points: Vec<Float>,
    prefix: Vec<Float>,
    cap: u64,
}

impl OrbitCache {
    pub fn new(t: &Giet, cap: u64) -> Self {
        let prec = t.precision();
        OrbitCache { points: vec![Float::new(prec)], prefix: vec![Float::new(prec)], cap }
    }

    pub fn len(&self) -> u64 {
        self.points.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Make z_0..=z_n available.
    pub fn ensure(&mut self, t: &Giet, f: &Observable, n: u64) -> Result<(), RegularityError> {
        if n >= self.cap {
            return Err(RegularityError::OrbitBudget { needed: n + 1, cap: self.cap });
        }
        while (self.points.len() as u64) <= n {
            let z = self.points.last().unwrap();
            let label = t.label_at(z, Side::Right);
            let s = Float::with_val(t.precision(), self.prefix.last().unwrap() + f.on(t, label, z));
            let next = t.apply_branch(label, z);
            self.points.push(next);
            self.prefix.push(s);
        }
        Ok(())
    }

    pub fn point(&self, n: u64) -> &Float {
        &self.points[n as usize]
    }

    /// Φ_n = S_n f(0).
    pub fn prefix(&self, n: u64) -> &Float {
        &self.prefix[n as usize]
    }

    /// S_{q−p} f(z_p) for p ≤ q, which equals φ(z_q) − φ(z_p).
    pub fn sum_between(&self, p: u64, q: u64) -> Float {
        Float::with_val(self.points[0].prec(), &self.prefix[q as usize] - &self.prefix[p as usize])
    }

    /// N_k(p, q): indices p ≤ ℓ < q with z_ℓ ∈ I_k = [0, L_k).
    pub fn visits(&self, p: u64, q: u64, len_k: &Float) -> u64 {
        (p.min(q)..p.max(q)).filter(|&l| self.points[l as usize] < *len_k).count() as u64
    }
}

/// A point z_n of the orbit of 0 with its floor at the level it serves.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitPoint {
    pub index: u64,
    pub coordinate: Float,
    pub floor: FloorAddress,
}

/// Output of the single orbit approximation for a pair x < y.
#[derive(Clone, Debug, PartialEq)]
pub struct ApproximationCertificate {
    pub k0: usize,
    pub x: Float,
    pub y: Float,
    /// First visit of the orbit of 0 to the floor of P_{k0} holding x.
    pub p0: u64,
    /// x_k and y_k for k0 ≤ k ≤ depth.
    pub xs: Vec<OrbitPoint>,
    pub ys: Vec<OrbitPoint>,
    /// Visits to I_{k0−1} between x_{k0} and y_{k0}.
    pub bridge_count: u64,
    /// Visits to I_k between x_k and x_{k+1} (resp. y), k0 ≤ k < depth.
    pub step_counts_x: Vec<u64>,
    pub step_counts_y: Vec<u64>,
}

impl ApproximationCertificate {
    pub fn depth(&self) -> usize {
        self.k0 + self.xs.len() - 1
    }

    /// φ(x_depth) − φ(y_depth), the telescoped estimate of φ(x) − φ(y).
    /// Φ_{i} − Φ_{j} at the deepest approximants, which estimates φ(x) − φ(y).
    pub fn delta_phi(&self, orbit: &OrbitCache) -> Float {
        let (i, j) = (self.xs.last().unwrap().index, self.ys.last().unwrap().index);
        Float::with_val(self.x.prec(), orbit.prefix(i) - orbit.prefix(j))
    }

    pub fn summary(&self) -> CertificateSummary {
        CertificateSummary {
            k0: self.k0,
            x: to_decimal(&self.x),
            y: to_decimal(&self.y),
            p0: self.p0,
            x_indices: self.xs.iter().map(|p| p.index).collect(),
            y_indices: self.ys.iter().map(|p| p.index).collect(),
            bridge_count: self.bridge_count,
            step_counts_x: self.step_counts_x.clone(),
            step_counts_y: self.step_counts_y.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub k0: usize,
    pub x: String,
    pub y: String,
    pub p0: u64,
    pub x_indices: Vec<u64>,
    pub y_indices: Vec<u64>,
    pub bridge_count: u64,
    pub step_counts_x: Vec<u64>,
    pub step_counts_y: Vec<u64>,
}

// Orbit points of 0 are floor endpoints up to rounding, so membership is
// tested on [left − τ, right − τ).
fn in_floor_tau(left: &Float, right: &Float, z: &Float, tau: &Float) -> bool {
    let prec = z.prec();
    let w = Float::with_val(prec, z + tau);
    *left <= w && w < *right
}

fn in_floor(p: &DynamicalPartition, a: FloorAddress, z: &Float) -> bool {
    let f = p.floor(a);
    in_floor_tau(&f.left, &f.right, z, &tolerance(z.prec()))
}

fn max_height(chain: &InductionChain, k: usize) -> u64 {
    chain.heights(k).iter().max().unwrap().to_u64().unwrap()
}

/// First n ≥ from with z_n in floor `a`, within `window` steps.
fn search(
    towers: &Towers,
    orbit: &mut OrbitCache,
    f: &Observable,
    a: FloorAddress,
    from: u64,
    window: u64,
) -> Result<u64, RegularityError> {
    let t = towers.chain().base();
    orbit.ensure(t, f, from + window)?;
    let p = towers.partition(a.level);
    (from..from + window)
        .find(|&n| in_floor(p, a, orbit.point(n)))
        .ok_or(RegularityError::WindowExhausted { level: a.level, window })
}

/// Build x_k, y_k (k0 ≤ k ≤ depth) on the orbit of 0 for a pair lying in one
/// floor of P_{k0−1}. Each step searches the proven window 2·max q_{k+2}.
/// The chain must reach level depth + 1.
pub fn single_orbit_approximation(
    towers: &Towers,
    orbit: &mut OrbitCache,
    f: &Observable,
    x: &Float,
    y: &Float,
    depth: usize,
) -> Result<ApproximationCertificate, RegularityError> {
    let chain = towers.chain();
    if depth > towers.depth() || depth + 1 > chain.len() {
        return Err(RegularityError::DepthBudget { needed: depth + 1, available: towers.depth().min(chain.len().saturating_sub(1)) });
    }
    let (x, y) = if x <= y { (x.clone(), y.clone()) } else { (y.clone(), x.clone()) };
    let scale = towers.scale_of_pair(&x, &y)?;
    let k0 = scale.k0;
    if k0 == 0 {
        return Err(RegularityError::ScaleTooCoarse { k0 });
    }
    if let Covering::TwoFloors { shared } = scale.covering {
        return Err(RegularityError::Straddles { shared: shared.to_f64() });
    }
    if k0 > depth {
        return Err(RegularityError::DepthBudget { needed: k0, available: depth });
    }
    let fx = towers.partition(k0).locate(&x)?;
    let fy = towers.partition(k0).locate(&y)?;
    let budget: u64 = chain.heights((k0 + 2).min(chain.len())).iter().map(|h| h.to_u64().unwrap()).sum();
    let p0 = search(towers, orbit, f, fx, 0, budget)?;
    let i0 = p0;
    let j0 = search(towers, orbit, f, fy, p0, 2 * max_height(chain, (k0 + 1).min(chain.len())))?;
    let lk = |k: usize| chain.induced(k).length().clone();
    let bridge_count = orbit.visits(i0, j0, &lk(k0 - 1));
    let mut xs = vec![OrbitPoint { index: i0, coordinate: orbit.point(i0).clone(), floor: fx }];
    let mut ys = vec![OrbitPoint { index: j0, coordinate: orbit.point(j0).clone(), floor: fy }];
    let mut step_counts_x = Vec::new();
    let mut step_counts_y = Vec::new();
    for k in k0..depth {
        let window = 2 * max_height(chain, (k + 2).min(chain.len()));
        for (seq, pt, counts) in [(&mut xs, &x, &mut step_counts_x), (&mut ys, &y, &mut step_counts_y)] {
            let target = towers.partition(k + 1).locate(pt)?;
            let from = seq.last().unwrap().index;
            let n = search(towers, orbit, f, target, from, window)?;
            counts.push(orbit.visits(from, n, &lk(k)));
            seq.push(OrbitPoint { index: n, coordinate: orbit.point(n).clone(), floor: target });
        }
    }
    Ok(ApproximationCertificate { k0, x, y, p0, xs, ys, bridge_count, step_counts_x, step_counts_y })
}

/// Result of re-checking a certificate from raw orbit data.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CertificateAudit {
    pub checked_counts: usize,
    pub violations: Vec<String>,
}

impl CertificateAudit {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Independent verifier: recomputes orbit membership by iterating the base
/// map, floor containment by scanning all floors of each partition, and the
/// intersection counts from the raw orbit, then checks the
/// 2‖A_k‖‖A_{k+1}‖ bounds.
pub fn verify_certificate(cert: &ApproximationCertificate, towers: &Towers) -> CertificateAudit {
    let chain = towers.chain();
    let t = chain.base();
    let prec = t.precision();
    let tau = tolerance(prec);
    let last = cert.xs.iter().chain(&cert.ys).map(|p| p.index).max().unwrap();
    let mut orbit = Vec::with_capacity(last as usize + 1);
    let mut z = Float::new(prec);
    for _ in 0..=last {
        let next = t.apply_halfopen(&z);
        orbit.push(std::mem::replace(&mut z, next));
    }
    let mut audit = CertificateAudit::default();
    let floor_of = |k: usize, w: &Float| {
        towers.partition(k).floors().iter().position(|f| in_floor_tau(&f.left, &f.right, w, &tau))
    };
    let count = |a: u64, b: u64, k: usize| {
        let l = chain.induced(k).length();
        orbit[a.min(b) as usize..a.max(b) as usize].iter().filter(|w| *w < l).count() as u64
    };
    let norm = |k: usize| chain.matrix(k).norm().to_u64().unwrap_or(u64::MAX);
    for (name, seq, pt, counts) in [("x", &cert.xs, &cert.x, &cert.step_counts_x), ("y", &cert.ys, &cert.y, &cert.step_counts_y)] {
        for (i, p) in seq.iter().enumerate() {
            let k = cert.k0 + i;
            // (i) on the orbit of 0
            if Float::with_val(prec, &orbit[p.index as usize] - &p.coordinate).abs() > tau {
                audit.violations.push(format!("{name}_{k} is not z_{}", p.index));
            }
            // (iii) same floor of P_k as the target point
            if floor_of(k, &orbit[p.index as usize]) != floor_of(k, pt) {
                audit.violations.push(format!("{name}_{k} is not in the floor of P_{k} holding {name}"));
            }
            if i + 1 < seq.len() {
                // (v)
                let c = count(p.index, seq[i + 1].index, k);
                let bound = 2 * norm(k) * norm(k + 1);
                audit.checked_counts += 1;
                if c != counts[i] {
                    audit.violations.push(format!("{name} step {k}: recorded {} visits, found {c}", counts[i]));
                }
                if c > bound {
                    audit.violations.push(format!("{name} step {k}: {c} visits exceed {bound}"));
                }
            }
        }
    }
    // (iv)
    let k0 = cert.k0;
    let c = count(cert.xs[0].index, cert.ys[0].index, k0 - 1);
    let bound = 2 * norm(k0 - 1) * norm(k0);
    audit.checked_counts += 1;
    if c != cert.bridge_count {
        audit.violations.push(format!("bridge: recorded {} visits, found {c}", cert.bridge_count));
    }
    if c > bound {
        audit.violations.push(format!("bridge: {c} visits exceed {bound}"));
    }
    audit
}

/// |S_{q−p} f(z_p)| and its bound N_k(p,q)‖f_k‖∞ + R̂_k^j.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationBound {
    pub estimate: f64,
    pub visits: u64,
    pub sup_fk: f64,
    pub broken_sup: f64,
    pub bound: f64,
}

pub fn orbit_variation_bound(
    sums: &SpecialSums<'_>,
    towers: &Towers,
    orbit: &mut OrbitCache,
    p: u64,
    q: u64,
    k: usize,
    max_breaks: u64,
) -> Result<VariationBound, RegularityError> {
    let chain = sums.chain();
    let f = sums.observable();
    orbit.ensure(chain.base(), f, p.max(q))?;
    let part = towers.partition(k);
    let (a, b) = (part.position_of(orbit.point(p)), part.position_of(orbit.point(q)));
    if a != b {
        return Err(RegularityError::NotSameFloor { level: k });
    }
    let (lo, hi) = (p.min(q), p.max(q));
    let estimate = orbit.sum_between(lo, hi).abs().to_f64();
    let visits = orbit.visits(lo, hi, chain.induced(k).length());
    let sup_fk = sums.sup_norm(k)?;
    let j = part.floors()[a].tower;
    let broken_sup = broken_sup_estimate(chain, f, k, j, max_breaks).sup;
    Ok(VariationBound { estimate, visits, sup_fk, broken_sup, bound: visits as f64 * sup_fk + broken_sup })
}

/// Line fitted by Theil–Sen: median of pairwise slopes, median intercept.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MedianLine {
    pub slope: f64,
    pub intercept: f64,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn median_line(pts: &[(f64, f64)]) -> Option<MedianLine> {
    let mut slopes = Vec::new();
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            if b.0 != a.0 {
                slopes.push((b.1 - a.1) / (b.0 - a.0));
            }
        }
    }
    if slopes.is_empty() {
        return None;
    }
    let slope = median(&mut slopes);
    let mut icpt: Vec<f64> = pts.iter().map(|p| p.1 - slope * p.0).collect();
    Some(MedianLine { slope, intercept: median(&mut icpt) })
}

/// One sampled pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub k0: usize,
    pub dx: f64,
    pub dphi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityFlags {
    /// Δφ vanishes on every pair (T is affinely conjugate to T₀) or the
    /// fitted α exceeds 1.
    pub affine_degenerate: bool,
    /// Fitted λ₂ ≥ 1: no Hölder conclusion.
    pub insufficient_decay: bool,
    /// λ₂ ≤ λ₁, against the expected ordering.
    pub lambda_order_violated: bool,
    pub lambda2_below_one: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub lambda1: f64,
    pub lambda2: Option<f64>,
    pub alpha: Option<f64>,
    pub holder_constant: Option<f64>,
    /// C(T)·max|Δφ|/|Δx|^α proxy: the d_{C²} decay constant C(T) times the
    /// Hölder constant, with the T₀-dependent factor set to 1.
    pub quantitative_distance: Option<f64>,
    pub flags: RegularityFlags,
    pub skipped_pairs: usize,
    pub per_pair: Vec<PairRecord>,
}

impl RegularityReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k0,dx,dphi\n");
        for p in &self.per_pair {
            let _ = writeln!(s, "{},{:e},{:e}", p.k0, p.dx, p.dphi);
        }
        s
    }
}

/// Inputs to [`holder_fit`] besides the towers.
#[derive(Clone, Debug)]
pub struct HolderConfig {
    /// Deepest level of the approximations.
    pub depth: usize,
    /// Pairs with k0 above `depth − margin` are skipped: their approximation
    /// error is comparable to the variation itself.
    pub margin: usize,
    /// Decay constant C(T) of d_{C²}(R^m T, I_d) ≤ C ρ^m, if fitted.
    pub c2_constant: Option<f64>,
    /// |Δφ| below this counts as zero.
    pub zero_threshold: f64,
}

impl Default for HolderConfig {
    fn default() -> Self {
        HolderConfig { depth: 10, margin: 2, c2_constant: None, zero_threshold: 1e-30 }
    }
}

/// Split a pair straddling a floor endpoint f of P_{k0−1} into [x, f − δ]
/// and [f + δ, y], δ far below the finest floor in use, and repeat on the
/// pieces until each lies in one floor.
pub fn split_pair(towers: &Towers, x: &Float, y: &Float, depth: usize) -> Result<Vec<(Float, Float)>, RegularityError> {
    let (x, y) = if x <= y { (x, y) } else { (y, x) };
    let delta = towers.partition(depth).min_floor() * 1e-6f64;
    let mut out = Vec::new();
    let mut todo = vec![(x.clone(), y.clone())];
    while let Some((a, b)) = todo.pop() {
        if out.len() + todo.len() > 4 * depth + 8 {
            return Err(RegularityError::Straddles { shared: a.to_f64() });
        }
        let covering = match towers.scale_of_pair(&a, &b) {
            Ok(s) => s.covering,
            Err(TowerError::ScaleNotFound { .. }) if !out.is_empty() || !todo.is_empty() => Covering::OneFloor,
            Err(e) => return Err(e.into()),
        };
        match covering {
            Covering::OneFloor => out.push((a, b)),
            Covering::TwoFloors { shared } => {
                todo.push((Float::with_val(a.prec(), &shared + &delta), b));
                todo.push((a, Float::with_val(shared.prec(), &shared - &delta)));
            }
        }
    }
    Ok(out)
}

/// Hölder fit over sample pairs. For each pair: k0, |x − y| and Δφ from the
/// approximation certificates (two-floor pairs split at the shared endpoint).
/// λ₁ fits the lower envelope of log|x − y| against k0, λ₂ the upper
/// envelope of log|Δφ|, both by median lines through the per-k0 extremes.
pub fn holder_fit(
    towers: &Towers,
    orbit: &mut OrbitCache,
    pairs: &[(Float, Float)],
    cfg: &HolderConfig,
) -> Result<RegularityReport, RegularityError> {
    let f = Observable::LogDerivative;
    let max_k0 = cfg.depth.saturating_sub(cfg.margin);
    let mut per_pair = Vec::new();
    let mut skipped = 0;
    for (x, y) in pairs {
        let k0 = match towers.scale_of_pair(x, y) {
            Ok(s) => s.k0,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        if k0 == 0 || k0 > max_k0 {
            skipped += 1;
            continue;
        }
        let mut dphi = Float::new(x.prec());
        let mut ok = true;
        let pieces = match split_pair(towers, x, y, cfg.depth) {
            Ok(p) => p,
            Err(RegularityError::Straddles { .. } | RegularityError::Tower(_)) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        for (a, b) in pieces {
            match single_orbit_approximation(towers, orbit, &f, &a, &b, cfg.depth) {
                Ok(c) => dphi += c.delta_phi(orbit),
                // a piece inside one floor of P_depth: its variation is
                // below the resolution of the approximation
                Err(RegularityError::Tower(TowerError::ScaleNotFound { .. })) => {}
                Err(
                    RegularityError::ScaleTooCoarse { .. }
                    | RegularityError::Straddles { .. }
                    | RegularityError::Tower(TowerError::OnBoundary { .. }),
                ) => ok = false,
                Err(RegularityError::DepthBudget { .. }) => ok = false,
                Err(e) => return Err(e),
            }
        }
        if !ok {
            skipped += 1;
            continue;
        }
        let dx = Float::with_val(x.prec(), x - y).abs().to_f64();
        per_pair.push(PairRecord { k0, dx, dphi: dphi.abs().to_f64() });
    }
    if per_pair.len() < 3 {
        return Err(RegularityError::InsufficientData(per_pair.len()));
    }
    let envelope = |pick: &dyn Fn(&PairRecord) -> f64, lower: bool| {
        let mut by_k: std::collections::BTreeMap<usize, f64> = Default::default();
        for p in &per_pair {
            let v = pick(p);
            if !v.is_finite() {
                continue;
            }
            let e = by_k.entry(p.k0).or_insert(v);
            if (lower && v < *e) || (!lower && v > *e) {
                *e = v;
            }
        }
        by_k.into_iter().map(|(k, v)| (k as f64, v)).collect::<Vec<_>>()
    };
    let l1 = median_line(&envelope(&|p| p.dx.ln(), true)).ok_or(RegularityError::InsufficientData(per_pair.len()))?;
    let lambda1 = l1.slope.exp();
    let all_zero = per_pair.iter().all(|p| p.dphi < cfg.zero_threshold);
    let (lambda2, alpha, holder_constant) = if all_zero {
        (None, None, None)
    } else {
        let pts = envelope(&|p| if p.dphi >= cfg.zero_threshold { p.dphi.ln() } else { f64::NAN }, false);
        match median_line(&pts) {
            Some(l2) => {
                let lambda2 = l2.slope.exp();
                let alpha = lambda2.ln() / lambda1.ln();
                let c = per_pair.iter().map(|p| p.dphi / p.dx.powf(alpha)).fold(0.0, f64::max);
                (Some(lambda2), Some(alpha), Some(c))
            }
            None => (None, None, None),
        }
    };
    let flags = RegularityFlags {
        affine_degenerate: all_zero || alpha.is_some_and(|a| a > 1.0),
        insufficient_decay: lambda2.is_some_and(|l| l >= 1.0),
        lambda_order_violated: lambda2.is_some_and(|l| l <= lambda1),
        lambda2_below_one: lambda2.is_some_and(|l| l < 1.0),
    };
    let quantitative_distance = match (cfg.c2_constant, holder_constant) {
        (Some(c), Some(h)) => Some(c * h),
        _ => None,
    };
    Ok(RegularityReport { lambda1, lambda2, alpha, holder_constant, quantitative_distance, flags, skipped_pairs: skipped, per_pair })
}

/// Hölder quotient max |Δφ|/|x − y|^α over the recorded pairs.
pub fn holder_quotient(report: &RegularityReport, alpha: f64) -> f64 {
    report.per_pair.iter().map(|p| p.dphi / p.dx.powf(alpha)).fold(0.0, f64::max)
}

/// min over towers of |I_k^j| for a standard IET against 1/‖Q(0,k+1)‖.
/// Returns (min floor, bound) per level 0..=depth.
pub fn floor_length_bounds(chain: &InductionChain, depth: usize) -> Vec<(Float, Float)> {
    let prec = chain.base().precision();
    (0..=depth)
        .map(|k| {
            let min = chain.induced(k).lambdas().iter().min_by(|a, b| a.partial_cmp(b).unwrap()).unwrap().clone();
            let q = chain.cocycle(0, k + 1).unwrap();
            (min, Float::with_val(prec, 1) / Float::with_val(prec, q.norm()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffeo::Diffeo;
    use crate::giet::StandardIet;
    use crate::induction::Acceleration;
    use crate::towers::DEFAULT_FLOOR_CAP;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const P: u32 = 256;

    fn h() -> Diffeo {
        Diffeo::sine(Float::with_val(P, 0.1), 1)
    }

    fn towers(t: Giet, depth: usize) -> Towers {
        let mut chain = InductionChain::new(t, Acceleration::Positive);
        chain.extend_to(depth + 1).unwrap();
        Towers::build(chain, depth, DEFAULT_FLOOR_CAP).unwrap()
    }

    fn conj() -> Giet {
        Giet::conjugate_by_diffeo(&StandardIet::golden(P), &h()).unwrap()
    }

    // φ = log Dh ∘ h⁻¹ for T = h∘T₀∘h⁻¹.
    fn phi(x: &Float) -> f64 {
        let u = h().eval_inverse(x);
        h().jet(&u, 1).d1.to_f64().ln()
    }

    #[test]
    fn identity_conjugacy_on_the_model() {
        let t = towers(StandardIet::golden(P).into_giet(), 6);
        let p = t.partition(6);
        let hk = numeric_conjugacy(p, p).unwrap();
        assert!(hk.is_increasing());
        for i in 0..50 {
            let x = Float::with_val(P, (i as f64 + 0.3) / 50.0);
            assert_eq!(hk.eval(&x), x);
        }
    }

    #[test]
    fn numeric_conjugacy_converges_to_h_inverse() {
        let t = towers(conj(), 8);
        let t0 = towers(StandardIet::golden(P).into_giet(), 8);
        let mut last = f64::INFINITY;
        let mut last_res = f64::INFINITY;
        for k in [2, 4, 6, 8] {
            let hk = numeric_conjugacy(t.partition(k), t0.partition(k)).unwrap();
            assert!(hk.is_increasing());
            let err = (0..400)
                .map(|i| {
                    let x = Float::with_val(P, (i as f64 + 0.5) / 400.0);
                    (hk.eval(&x) - h().eval_inverse(&x)).abs().to_f64()
                })
                .fold(0.0, f64::max);
            assert!(err < last, "k={k}: {err} vs {last}");
            last = err;
            let res = conjugacy_residual(&hk, t.chain().base(), t0.chain().base(), 400);
            assert!(res < last_res, "k={k}: residual {res} vs {last_res}");
            last_res = res;
        }
        assert!(last <= 1e-3, "{last}");
    }

    #[test]
    fn mismatched_partitions_are_rejected() {
        let t = towers(StandardIet::golden(P).into_giet(), 4);
        assert!(matches!(
            numeric_conjugacy(t.partition(3), t.partition(4)),
            Err(RegularityError::PartitionMismatch { .. })
        ));
    }

    #[test]
    fn stable_log_derivative_tracks_phi() {
        let t = towers(conj(), 9);
        let t0 = towers(StandardIet::golden(P).into_giet(), 9);
        let h8 = numeric_conjugacy(t.partition(8), t0.partition(8)).unwrap();
        let h9 = numeric_conjugacy(t.partition(9), t0.partition(9)).unwrap();
        let pts = stable_log_derivative(&h8, &h9, 0.05);
        assert!(pts.len() > 10);
        let worst = pts.iter().map(|(x, v)| (v - phi(&Float::with_val(P, *x))).abs()).fold(0.0, f64::max);
        assert!(worst < 0.1, "{worst}");
    }

    #[test]
    fn orbit_cache_prefix_sums() {
        let t = conj();
        let mut o = OrbitCache::new(&t, 10_000);
        o.ensure(&t, &Observable::LogDerivative, 200).unwrap();
        let direct = crate::birkhoff::birkhoff_sum(&t, &Observable::LogDerivative, o.point(37), 50).unwrap();
        assert!((o.sum_between(37, 87) - direct).abs() < 1e-60);
        assert!(matches!(
            o.ensure(&t, &Observable::LogDerivative, 20_000),
            Err(RegularityError::OrbitBudget { .. })
        ));
    }

    fn random_pairs(seed: u64, n: usize, max_gap: f64) -> Vec<(Float, Float)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x: f64 = rng.gen_range(0.01..0.99 - max_gap);
                let g = max_gap * rng.gen::<f64>().powi(3) + 1e-4;
                (Float::with_val(P, x), Float::with_val(P, x + g))
            })
            .collect()
    }

    #[test]
    fn certificates_pass_independent_audit_and_telescope() {
        let depth = 9;
        let t = towers(conj(), depth);
        let mut orbit = OrbitCache::new(t.chain().base(), 5_000_000);
        let f = Observable::LogDerivative;
        let (mut built, mut pairs) = (0, 0);
        for (x, y) in random_pairs(3, 40, 0.05) {
            let Ok(pieces) = split_pair(&t, &x, &y, depth) else { continue };
            let mut approx = 0.0;
            let mut ok = true;
            for (a, b) in pieces {
                match single_orbit_approximation(&t, &mut orbit, &f, &a, &b, depth) {
                    Ok(c) => {
                        built += 1;
                        let audit = verify_certificate(&c, &t);
                        assert!(audit.passed(), "{:?}", audit.violations);
                        assert_eq!(audit.checked_counts, 2 * (depth - c.k0) + 1);
                        approx += c.delta_phi(&orbit).to_f64();
                    }
                    Err(RegularityError::Tower(TowerError::ScaleNotFound { .. })) => {}
                    Err(RegularityError::ScaleTooCoarse { .. }) => ok = false,
                    Err(e) => panic!("{e}"),
                }
            }
            if !ok {
                continue;
            }
            pairs += 1;
            // Δφ along the orbit approximates φ(x) − φ(y) up to the
            // variation of φ across floors of P_depth.
            let exact = phi(&x) - phi(&y);
            assert!((exact - approx).abs() < 2e-3, "{exact} vs {approx}");
        }
        assert!(built >= 20 && pairs >= 20, "{built} {pairs}");
    }

    #[test]
    fn variation_bound_trivial_cases() {
        let t = towers(StandardIet::golden(P).into_giet(), 5);
        let sums = SpecialSums::new(t.chain(), Observable::LogDerivative);
        let mut orbit = OrbitCache::new(t.chain().base(), 100_000);
        let v = orbit_variation_bound(&sums, &t, &mut orbit, 40, 40, 3, 20).unwrap();
        assert_eq!((v.estimate, v.visits), (0.0, 0));
        // on an IET f = 0, so both sides vanish
        orbit.ensure(t.chain().base(), &Observable::LogDerivative, 2000).unwrap();
        let p = t.partition(3);
        let a = p.position_of(orbit.point(100));
        let q = (101..2000).find(|&n| p.position_of(orbit.point(n)) == a).unwrap();
        let v = orbit_variation_bound(&sums, &t, &mut orbit, 100, q, 3, 20).unwrap();
        assert_eq!((v.estimate, v.bound), (0.0, 0.0));
    }

    #[test]
    fn variation_bound_holds_on_conjugated_orbit() {
        let t = towers(conj(), 7);
        let sums = SpecialSums::new(t.chain(), Observable::LogDerivative);
        let mut orbit = OrbitCache::new(t.chain().base(), 100_000);
        orbit.ensure(t.chain().base(), &Observable::LogDerivative, 20_000).unwrap();
        for k in [3, 5] {
            let p = t.partition(k);
            let mut checked = 0;
            for start in [500u64, 1234, 3000] {
                let a = p.position_of(orbit.point(start));
                let Some(q) = (start + 1..20_000).find(|&n| p.position_of(orbit.point(n)) == a) else { continue };
                let v = orbit_variation_bound(&sums, &t, &mut orbit, start, q, k, 40).unwrap();
                assert!(v.estimate <= v.bound + 1e-30, "k={k}: {v:?}");
                checked += 1;
            }
            assert!(checked > 0);
        }
    }

    #[test]
    fn median_line_ignores_outliers() {
        let mut pts: Vec<(f64, f64)> = (0..11).map(|k| (k as f64, 2.0 - 0.5 * k as f64)).collect();
        pts[3].1 = 100.0;
        let l = median_line(&pts).unwrap();
        assert!((l.slope + 0.5).abs() < 1e-12 && (l.intercept - 2.0).abs() < 1e-12);
        assert!(median_line(&[(1.0, 1.0), (1.0, 2.0)]).is_none());
    }

    #[test]
    fn holder_fit_on_the_model_is_affine_degenerate() {
        let depth = 8;
        let t = towers(StandardIet::golden(P).into_giet(), depth);
        let mut orbit = OrbitCache::new(t.chain().base(), 5_000_000);
        let cfg = HolderConfig { depth, ..Default::default() };
        let r = holder_fit(&t, &mut orbit, &random_pairs(5, 60, 0.1), &cfg).unwrap();
        assert!(r.flags.affine_degenerate && r.lambda2.is_none());
        assert!(r.lambda1 > 0.0 && r.lambda1 < 1.0);
    }

    #[test]
    fn holder_fit_on_conjugated_golden() {
        let depth = 9;
        let t = towers(conj(), depth);
        let mut orbit = OrbitCache::new(t.chain().base(), 5_000_000);
        let cfg = HolderConfig { depth, ..Default::default() };
        let r = holder_fit(&t, &mut orbit, &random_pairs(7, 80, 0.1), &cfg).unwrap();
        let l2 = r.lambda2.unwrap();
        assert!(r.lambda1 > 0.0 && r.lambda1 < 1.0 && l2 > 0.0 && l2 < 1.0, "{} {l2}", r.lambda1);
        assert!(!r.flags.affine_degenerate);
        // φ is smooth here, so the fitted exponent should sit near 1.
        assert!((r.alpha.unwrap() - 1.0).abs() < 0.25, "{:?}", r.alpha);
        assert_eq!(r.to_csv().lines().count(), r.per_pair.len() + 1);
    }

    // Lengths of a standard IET's induced intervals sit above 1/‖Q(0,k+1)‖.
    #[test]
    fn floor_lengths_dominate_inverse_norms() {
        let mut chain = InductionChain::new(StandardIet::golden(P).into_giet(), Acceleration::Positive);
        chain.extend_to(12).unwrap();
        for (k, (min, bound)) in floor_length_bounds(&chain, 11).into_iter().enumerate() {
            assert!(min >= bound, "level {k}");
        }
    }
}
