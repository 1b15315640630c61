//! Birkhoff sums, special Birkhoff sums along towers, the geometric
//! decomposition of a Birkhoff sum, and broken sums.

use crate::giet::{Direction, Giet, GietError, Side};
use crate::induction::{InductionChain, InductionError};
use rug::Float;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BirkhoffError {
    #[error("orbit hits a discontinuity at step {step}")]
    OrbitHitsSingularity { step: u64 },
    #[error("point {x} is not in the inducing interval of level {level}")]
    NotInBase { level: usize, x: f64 },
    #[error("return count {got} at level {level} differs from the matrix row sum {expected}")]
    CountMismatch { level: usize, got: u64, expected: String },
    #[error("orbit reaches the deepest available level {depth}; extend the chain")]
    DepthBudget { depth: usize },
    #[error("empty orbit segment")]
    EmptySegment,
    #[error("break height {m} out of range for tower height {q}")]
    BadBreak { m: u64, q: u64 },
    #[error(transparent)]
    Giet(#[from] GietError),
    #[error(transparent)]
    Induction(#[from] InductionError),
}

type ObsFn = dyn Fn(&Giet, usize, &Float) -> Float + Send + Sync;

/// A function on [0,1] that is C¹ on each top interval of the base map,
/// evaluated with the branch label so one-sided extensions are available.
#[derive(Clone)]
pub enum Observable {
    /// f = log DT.
    LogDerivative,
    Custom(Arc<ObsFn>),
}

impl std::fmt::Debug for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Observable::LogDerivative => f.write_str("LogDerivative"),
            Observable::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Observable {
    pub fn custom(f: impl Fn(&Giet, usize, &Float) -> Float + Send + Sync + 'static) -> Self {
        Observable::Custom(Arc::new(f))
    }

    /// f on branch `label` of `t`, at `x`.
    pub fn on(&self, t: &Giet, label: usize, x: &Float) -> Float {
        match self {
            Observable::LogDerivative => t.log_derivative_on(label, x),
            Observable::Custom(g) => g(t, label, x),
        }
    }

    pub fn at(&self, t: &Giet, x: &Float) -> Float {
        self.on(t, t.label_at(x, Side::Right), x)
    }
}

/// S_n f(x): Σ_{j<n} f(T^j x) for n > 0, 0 for n = 0 and
/// −Σ_{j=1}^{|n|} f(T^{−j} x) for n < 0, so that S_{n+m} = S_n + S_m∘Tⁿ
/// for all signs.
pub fn birkhoff_sum(t: &Giet, f: &Observable, x: &Float, n: i64) -> Result<Float, BirkhoffError> {
    let prec = t.precision();
    let mut s = Float::new(prec);
    let mut z = x.clone();
    if n >= 0 {
        for step in 0..n as u64 {
            let label = t.branch_label(&z).map_err(|e| sing(e, step))?;
            s += f.on(t, label, &z);
            z = t.apply_halfopen(&z);
        }
    } else {
        for step in 0..n.unsigned_abs() {
            z = t.apply(&z, Direction::Inverse).map_err(|e| sing(e, step))?;
            s -= f.at(t, &z);
        }
    }
    Ok(s)
}

fn sing(e: GietError, step: u64) -> BirkhoffError {
    match e {
        GietError::AtSingularity { .. } => BirkhoffError::OrbitHitsSingularity { step },
        other => other.into(),
    }
}

/// Σ_{j=1}^{m} f(T^{−j} x), the positive backward sum; equals −S_{−m} f(x).
pub fn backward_sum(t: &Giet, f: &Observable, x: &Float, m: u64) -> Result<Float, BirkhoffError> {
    Ok(-birkhoff_sum(t, f, x, -(m as i64))?)
}

/// Prefix sums P[i] = S_i f(x), i = 0..=n, along the half-open orbit.
pub fn prefix_sums(t: &Giet, f: &Observable, x: &Float, n: u64) -> Vec<Float> {
    let mut out = Vec::with_capacity(n as usize + 1);
    let mut s = Float::new(t.precision());
    let mut z = x.clone();
    out.push(s.clone());
    for _ in 0..n {
        s += f.at(t, &z);
        z = t.apply_halfopen(&z);
        out.push(s.clone());
    }
    out
}

/// Special Birkhoff sums f_k over the towers of an induction chain.
#[derive(Debug)]
pub struct SpecialSums<'a> {
    chain: &'a InductionChain,
    f: Observable,
    sups: Arc<Mutex<Vec<Option<f64>>>>,
    samples: usize,
}

/// Sampled sup norms of f_k per tower.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpecialSumTable {
    pub level: usize,
    pub sup_per_tower: Vec<f64>,
    pub sup: f64,
}

impl<'a> SpecialSums<'a> {
    pub fn new(chain: &'a InductionChain, f: Observable) -> Self {
        SpecialSums { chain, f, sups: Arc::default(), samples: 16 }
    }

    /// Number of interior sample points per tower (default 16).
    pub fn with_samples(mut self, n: usize) -> Self {
        self.samples = n.max(1);
        self
    }

    pub fn observable(&self) -> &Observable {
        &self.f
    }

    /// Sampled ‖f_k‖∞, cached per level.
    pub fn sup_norm(&self, k: usize) -> Result<f64, BirkhoffError> {
        if let Some(Some(v)) = self.sups.lock().unwrap().get(k) {
            return Ok(*v);
        }
        let v = self.table(k)?.sup;
        let mut c = self.sups.lock().unwrap();
        if c.len() <= k {
            c.resize(k + 1, None);
        }
        c[k] = Some(v);
        Ok(v)
    }

    pub fn chain(&self) -> &InductionChain {
        self.chain
    }

    /// f_k(z) and the first return T_k(z), built level by level: f_k sums
    /// f_{k−1} over the returns to I_{k−1} until the orbit re-enters I_k.
    /// The number of returns is checked against the row sum of A_{k−1}.
    pub fn eval(&self, k: usize, z: &Float) -> Result<(Float, Float), BirkhoffError> {
        let ind = self.chain.induced(k);
        if *z < 0 || z >= ind.length() {
            return Err(BirkhoffError::NotInBase { level: k, x: z.to_f64() });
        }
        self.eval_rec(k, z)
    }

    fn eval_rec(&self, k: usize, z: &Float) -> Result<(Float, Float), BirkhoffError> {
        let base = self.chain.base();
        if k == 0 {
            let label = base.label_at(z, Side::Right);
            return Ok((self.f.on(base, label, z), base.apply_halfopen(z)));
        }
        let ind = self.chain.induced(k);
        let tower = ind.label_at(z, Side::Right);
        let expected = self.chain.matrix(k - 1).row_sums()[tower].clone();
        let mut s = Float::new(base.precision());
        let mut w = z.clone();
        let mut visits = 0u64;
        loop {
            let (v, next) = self.eval_rec(k - 1, &w)?;
            s += v;
            visits += 1;
            w = next;
            if w < *ind.length() || visits > expected {
                break;
            }
        }
        if expected != visits {
            return Err(BirkhoffError::CountMismatch { level: k, got: visits, expected: expected.to_string() });
        }
        Ok((s, w))
    }

    /// f_k(z) through the induced map: for f = log DT this is log DT_k(z) by
    /// the chain rule; other observables fall back to [`SpecialSums::eval`].
    pub fn eval_fast(&self, k: usize, z: &Float) -> Result<Float, BirkhoffError> {
        match self.f {
            Observable::LogDerivative => {
                let ind = self.chain.induced(k);
                if *z < 0 || z >= ind.length() {
                    return Err(BirkhoffError::NotInBase { level: k, x: z.to_f64() });
                }
                Ok(ind.log_derivative_on(ind.label_at(z, Side::Right), z))
            }
            Observable::Custom(_) => Ok(self.eval(k, z)?.0),
        }
    }

    /// Sample points of tower `j` at level k: evenly spread interior points
    /// plus points 10⁻⁶ of the base length from either end.
    pub fn sample_points(&self, k: usize, j: usize) -> Vec<Float> {
        let ind = self.chain.induced(k);
        let prec = ind.precision();
        let a = ind.top_left(j);
        let lam = ind.lambda(j);
        let n = self.samples as f64;
        let mut s: Vec<f64> = (0..self.samples).map(|i| (i as f64 + 0.5) / n).collect();
        s.insert(0, 1e-6);
        s.push(1.0 - 1e-6);
        s.into_iter().map(|u| Float::with_val(prec, lam * u) + a).collect()
    }

    /// Largest |f_k(z) − S_{q_k^j} f(z)| over the sample points of every
    /// tower, with the right side computed by direct iteration.
    pub fn direct_discrepancy(&self, k: usize) -> Result<f64, BirkhoffError> {
        let heights = self.chain.heights(k);
        let mut worst = 0.0f64;
        for j in 0..self.chain.d() {
            let q = heights[j].to_i64().unwrap();
            for z in self.sample_points(k, j) {
                let a = self.eval_fast(k, &z)?;
                let b = birkhoff_sum(self.chain.base(), &self.f, &z, q)?;
                worst = worst.max((a - b).abs().to_f64());
            }
        }
        Ok(worst)
    }

    /// Sampled ‖f_k‖∞, per tower and overall.
    pub fn table(&self, k: usize) -> Result<SpecialSumTable, BirkhoffError> {
        let d = self.chain.d();
        let mut sup_per_tower = vec![0.0f64; d];
        for (j, sup) in sup_per_tower.iter_mut().enumerate() {
            for z in self.sample_points(k, j) {
                *sup = sup.max(self.eval_fast(k, &z)?.to_f64().abs());
            }
        }
        let sup = sup_per_tower.iter().cloned().fold(0.0, f64::max);
        Ok(SpecialSumTable { level: k, sup_per_tower, sup })
    }
}

/// One term f_n(x_n) of a geometric decomposition.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecompositionTerm {
    pub level: usize,
    /// Orbit time of the point x_n (so x_n = T^time x).
    pub time: u64,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    /// n0: deepest level whose inducing interval holds two points of the
    /// segment.
    pub deepest: usize,
    /// First visit to I_n0.
    pub split_time: u64,
    /// Terms before and after the split, as (level, time, value).
    pub backward: Vec<(usize, u64, Float)>,
    pub forward: Vec<(usize, u64, Float)>,
    /// Number of terms of each level on each side.
    pub counts_backward: Vec<u64>,
    pub counts_forward: Vec<u64>,
    pub reconstruction: Float,
    /// 2 Σ_{n ≤ deepest} ‖A_n‖ · M_n, with M_n the larger of the sampled
    /// ‖f_n‖∞ and the |f_n| values used.
    pub bound: Float,
}

/// Decompose S_r f(x) into special sums of levels n ≤ n0, with n0 the
/// deepest level visited twice: forward from the first visit to I_n0,
/// greedily by the deepest tower that fits, and backward from that split by
/// the deepest level whose previous visit is still in the segment.
pub fn geometric_decomposition(sums: &SpecialSums<'_>, x: &Float, r: u64) -> Result<Decomposition, BirkhoffError> {
    if r == 0 {
        return Err(BirkhoffError::EmptySegment);
    }
    let chain = sums.chain;
    let base = chain.base();
    let prec = base.precision();
    let depth = chain.len();
    let lens: Vec<Float> = (0..=depth).map(|k| chain.induced(k).length().clone()).collect();
    // level of a point: deepest ℓ with z ∈ I_ℓ = [0, L_ℓ)
    let level_of = |z: &Float| lens.partition_point(|l| z < l) - 1;
    let mut orbit = Vec::with_capacity(r as usize + 1);
    let mut z = x.clone();
    for _ in 0..=r {
        let next = base.apply_halfopen(&z);
        orbit.push(std::mem::replace(&mut z, next));
    }
    let levels: Vec<usize> = orbit.iter().map(level_of).collect();
    // n0: deepest level whose interval holds at least two of the r points
    let mut sorted: Vec<usize> = levels[..r as usize].to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let deepest = if r >= 2 { sorted[1] } else { 0 };
    if deepest >= depth {
        return Err(BirkhoffError::DepthBudget { depth });
    }
    let split = levels.iter().position(|&l| l >= deepest).unwrap() as u64;
    let heights: Vec<Vec<u64>> = (0..=deepest).map(|k| chain.heights(k).iter().map(|h| h.to_u64().unwrap()).collect()).collect();

    let mut forward = Vec::new();
    let mut t = split;
    while t < r {
        let zt = &orbit[t as usize];
        let mut chosen = None;
        for l in (0..=levels[t as usize].min(deepest)).rev() {
            let tower = chain.induced(l).label_at(zt, Side::Right);
            let q = heights[l][tower];
            if t + q <= r {
                chosen = Some((l, q));
                break;
            }
        }
        let (l, q) = chosen.expect("level 0 always fits");
        forward.push((l, t, sums.eval_fast(l, zt)?));
        t += q;
    }

    // visits[l]: times t ≤ split with x_t ∈ I_l, increasing
    let mut visits: Vec<Vec<u64>> = vec![Vec::new(); deepest + 1];
    for (t, &lv) in levels[..=split as usize].iter().enumerate() {
        for v in visits.iter_mut().take(lv.min(deepest) + 1) {
            v.push(t as u64);
        }
    }
    let mut backward = Vec::new();
    let mut s = split;
    while s > 0 {
        let mut chosen = None;
        for l in (0..=levels[s as usize].min(deepest)).rev() {
            let i = visits[l].partition_point(|&p| p < s);
            if let Some(p) = i.checked_sub(1).map(|i| visits[l][i]) {
                // the excursion from p must be a full return to I_l landing at s
                let tower = chain.induced(l).label_at(&orbit[p as usize], Side::Right);
                if p + heights[l][tower] == s {
                    chosen = Some((l, p));
                    break;
                }
            }
        }
        let (l, p) = chosen.expect("level 0 always fits");
        backward.push((l, p, sums.eval_fast(l, &orbit[p as usize])?));
        s = p;
    }
    backward.reverse();

    let mut counts_b = vec![0u64; deepest + 1];
    let mut counts_f = vec![0u64; deepest + 1];
    let mut used_max = vec![Float::new(prec); deepest + 1];
    let mut recon = Float::new(prec);
    for (side, counts) in [(&backward, &mut counts_b), (&forward, &mut counts_f)] {
        for (l, _, v) in side.iter() {
            counts[*l] += 1;
            recon += v;
            let a = Float::with_val(prec, v.abs_ref());
            if a > used_max[*l] {
                used_max[*l] = a;
            }
        }
    }
    let mut bound = Float::new(prec);
    for n in 0..=deepest {
        let sampled = Float::with_val(prec, sums.sup_norm(n)?);
        let m = if sampled > used_max[n] { sampled } else { used_max[n].clone() };
        bound += Float::with_val(prec, chain.matrix(n).norm()) * m;
    }
    bound *= 2u32;
    Ok(Decomposition {
        deepest,
        split_time: split,
        backward,
        forward,
        counts_backward: counts_b,
        counts_forward: counts_f,
        reconstruction: recon,
        bound,
    })
}

/// Owns a chain and extends it as orbits need deeper levels; sampled sup
/// norms are cached across calls.
#[derive(Debug)]
pub struct Decomposer {
    chain: InductionChain,
    f: Observable,
    sups: Arc<Mutex<Vec<Option<f64>>>>,
    samples: usize,
    max_depth: usize,
}

impl Decomposer {
    pub fn new(chain: InductionChain, f: Observable, max_depth: usize) -> Self {
        Decomposer { chain, f, sups: Arc::default(), samples: 4, max_depth }
    }

    pub fn chain(&self) -> &InductionChain {
        &self.chain
    }

    /// Extend the chain until I_len holds at most one point of the segment,
    /// then decompose.
    pub fn decompose(&mut self, x: &Float, r: u64) -> Result<Decomposition, BirkhoffError> {
        let base = self.chain.base();
        let mut z = x.clone();
        // two smallest points of the segment
        let mut lo = [x.clone(), Float::with_val(x.prec(), 2)];
        for _ in 1..r {
            z = base.apply_halfopen(&z);
            if z < lo[0] {
                lo[1] = std::mem::replace(&mut lo[0], z.clone());
            } else if z < lo[1] {
                lo[1] = z.clone();
            }
        }
        while self.chain.len() < self.max_depth && *self.chain.induced(self.chain.len()).length() > lo[1] {
            let next = self.chain.len() + 1;
            self.chain.extend_to(next)?;
        }
        let sums = SpecialSums { chain: &self.chain, f: self.f.clone(), sups: self.sups.clone(), samples: self.samples };
        geometric_decomposition(&sums, x, r)
    }
}

impl Decomposition {
    pub fn terms(&self) -> Vec<DecompositionTerm> {
        self.backward
            .iter()
            .chain(&self.forward)
            .map(|(level, time, v)| DecompositionTerm { level: *level, time: *time, value: v.to_f64() })
            .collect()
    }
}

/// Index convention for broken sums.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrokenConvention {
    /// S_m f(x) + S_{q−m} f(T^m y): B(x, x, m) = f_k(x).
    Concatenation,
    /// S_m f(x) + S_{q−m+1} f(T^m y): one extra term of the tail.
    PlusOne,
}

/// A broken sum along tower `tower` of level `level`.
#[derive(Clone, Debug)]
pub struct BrokenSumSpec {
    pub level: usize,
    pub tower: usize,
    pub x: Float,
    pub y: Float,
    pub m: u64,
}

pub fn broken_sum(chain: &InductionChain, spec: &BrokenSumSpec, f: &Observable, conv: BrokenConvention) -> Result<Float, BirkhoffError> {
    let t = chain.base();
    let q = chain.heights(spec.level)[spec.tower].to_u64().unwrap();
    if spec.m >= q {
        return Err(BirkhoffError::BadBreak { m: spec.m, q });
    }
    let ind = chain.induced(spec.level);
    for p in [&spec.x, &spec.y] {
        if *p < *ind.top_left(spec.tower) || *p >= Float::with_val(t.precision(), ind.top_left(spec.tower) + ind.lambda(spec.tower)) {
            return Err(BirkhoffError::NotInBase { level: spec.level, x: p.to_f64() });
        }
    }
    let px = prefix_sums(t, f, &spec.x, spec.m);
    let tail = match conv {
        BrokenConvention::Concatenation => q - spec.m,
        BrokenConvention::PlusOne => q - spec.m + 1,
    };
    let py = prefix_sums(t, f, &spec.y, spec.m + tail);
    Ok(Float::with_val(t.precision(), &px[spec.m as usize] + &py[(spec.m + tail) as usize]) - &py[spec.m as usize])
}

/// Sampled broken-sum supremum of one tower.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BrokenSup {
    pub level: usize,
    pub tower: usize,
    /// R̂_k^j: max over sampled base pairs and all (or sampled) breaks.
    pub sup: f64,
    /// max over sampled z of |R̂_k^j − |f_k(z)||.
    pub deviation: f64,
}

/// R̂_k^j over base points {left + δ, middle, right − δ} (δ = 10⁻⁶ of the
/// base), all 9 pairs, and every break height when q_k^j ≤ `max_breaks`
/// (otherwise `max_breaks` evenly spaced ones).
pub fn broken_sup_estimate(chain: &InductionChain, f: &Observable, k: usize, j: usize, max_breaks: u64) -> BrokenSup {
    let t = chain.base();
    let prec = t.precision();
    let ind = chain.induced(k);
    let q = chain.heights(k)[j].to_u64().unwrap();
    let a = ind.top_left(j);
    let lam = ind.lambda(j);
    let pts: Vec<Float> = [1e-6, 0.5, 1.0 - 1e-6].iter().map(|u| Float::with_val(prec, lam * *u) + a).collect();
    let prefixes: Vec<Vec<Float>> = pts.iter().map(|p| prefix_sums(t, f, p, q)).collect();
    let breaks: Vec<u64> = if q <= max_breaks {
        (0..=q).collect()
    } else {
        (0..=max_breaks).map(|i| i * q / max_breaks).collect()
    };
    let mut sup = Float::new(prec);
    for px in &prefixes {
        for py in &prefixes {
            for &m in &breaks {
                let b = Float::with_val(prec, &px[m as usize] - &py[m as usize]) + &py[q as usize];
                let b = b.abs();
                if b > sup {
                    sup = b;
                }
            }
        }
    }
    let deviation = prefixes
        .iter()
        .map(|p| Float::with_val(prec, &sup - p[q as usize].clone().abs()).abs().to_f64())
        .fold(0.0, f64::max);
    BrokenSup { level: k, tower: j, sup: sup.to_f64(), deviation }
}

/// One row of the decay profile.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayRow {
    pub k: usize,
    pub sup_norm_fk: f64,
    pub broken_sup: Vec<f64>,
    pub deviation: f64,
    /// ‖A_k‖ · ‖f_k‖∞ + max_j R̂_k^j.
    pub bound: f64,
}

/// Decay profile over levels `ks`.
/// Levels must be below `chain.len()` since the bound uses A_k.
pub fn decay_profile(chain: &InductionChain, f: &Observable, ks: impl IntoIterator<Item = usize>, max_breaks: u64) -> Result<Vec<DecayRow>, BirkhoffError> {
    let sums = SpecialSums::new(chain, f.clone());
    let mut rows = Vec::new();
    for k in ks {
        if k >= chain.len() {
            return Err(BirkhoffError::DepthBudget { depth: chain.len() });
        }
        let sup = sums.sup_norm(k)?;
        let br: Vec<BrokenSup> = (0..chain.d()).map(|j| broken_sup_estimate(chain, f, k, j, max_breaks)).collect();
        let broken_sup: Vec<f64> = br.iter().map(|b| b.sup).collect();
        let deviation = br.iter().map(|b| b.deviation).fold(0.0, f64::max);
        let norm = chain.matrix(k).norm().to_f64();
        let bound = norm * sup + broken_sup.iter().cloned().fold(0.0, f64::max);
        rows.push(DecayRow { k, sup_norm_fk: sup, broken_sup, deviation, bound });
    }
    Ok(rows)
}

/// CSV `k,sup_norm_fk,broken_sup_1..d,deviation,bound`.
pub fn decay_csv(rows: &[DecayRow]) -> String {
    let d = rows.first().map_or(0, |r| r.broken_sup.len());
    let mut s = String::from("k,sup_norm_fk");
    for j in 1..=d {
        let _ = write!(s, ",broken_sup_{j}");
    }
    s.push_str(",deviation,bound\n");
    for r in rows {
        let _ = write!(s, "{},{:e}", r.k, r.sup_norm_fk);
        for b in &r.broken_sup {
            let _ = write!(s, ",{b:e}");
        }
        let _ = writeln!(s, ",{:e},{:e}", r.deviation, r.bound);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::Combinatorics;
    use crate::diffeo::Diffeo;
    use crate::giet::StandardIet;
    use crate::induction::Acceleration;
    use crate::real::random_unit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const P: u32 = 256;

    fn conj_golden() -> Giet {
        Giet::conjugate_by_diffeo(&StandardIet::golden(P), &Diffeo::sine(Float::with_val(P, 0.1), 1)).unwrap()
    }

    fn conj_d4(seed: u64) -> Giet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<Float> = (0..4).map(|_| random_unit(P, || rng.gen()) + 0.05f64).collect();
        let s = Float::with_val(P, Float::sum(raw.iter()));
        let t0 = StandardIet::new(Combinatorics::reversal(4), raw.into_iter().map(|x| x / &s).collect(), P).unwrap();
        Giet::conjugate_by_diffeo(&t0, &Diffeo::quadratic(Float::with_val(P, 0.3))).unwrap()
    }

    fn close(a: &Float, b: &Float, tol: f64) -> bool {
        Float::with_val(P, a - b).abs() < tol
    }

    #[test]
    fn trivial_cases() {
        let t = conj_golden();
        let x = Float::with_val(P, 0.3);
        assert_eq!(birkhoff_sum(&t, &Observable::LogDerivative, &x, 0).unwrap(), 0);
        let s = StandardIet::golden(P);
        for n in [-50, -1, 1, 50] {
            assert_eq!(birkhoff_sum(&s, &Observable::LogDerivative, &x, n).unwrap(), 0);
        }
    }

    // Oracle: the golden rotation is x ↦ x + λ₂ mod 1, so S_n of the identity
    // observable is Σ frac(x + jλ₂), computed here without the map.
    #[test]
    fn rotation_sum_of_identity() {
        let s = StandardIet::golden(P);
        let step = s.lambda(1).clone();
        let f = Observable::custom(|_, _, x| x.clone());
        let x = Float::with_val(P, 0.123);
        let mut want = Float::new(P);
        let mut z = x.clone();
        for _ in 0..300 {
            want += &z;
            z += &step;
            if z >= 1 {
                z -= 1u32;
            }
        }
        assert!(close(&birkhoff_sum(&s, &f, &x, 300).unwrap(), &want, 1e-60));
    }

    #[test]
    fn cocycle_and_reflection() {
        let t = conj_golden();
        let f = Observable::LogDerivative;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let x = random_unit(P, || rng.gen());
            let n: i64 = rng.gen_range(-500..=500);
            let m: i64 = rng.gen_range(-500..=500);
            let lhs = birkhoff_sum(&t, &f, &x, n + m).unwrap();
            let mut y = x.clone();
            for _ in 0..n.unsigned_abs() {
                y = t.apply(&y, if n > 0 { Direction::Forward } else { Direction::Inverse }).unwrap();
            }
            let rhs = birkhoff_sum(&t, &f, &x, n).unwrap() + birkhoff_sum(&t, &f, &y, m).unwrap();
            assert!(close(&lhs, &rhs, 1e-60));
            // S_{−m} f(T^m x) = −S_m f(x), and the positive backward sum
            let mm = m.unsigned_abs();
            let mut u = x.clone();
            for _ in 0..mm {
                u = t.apply_halfopen(&u);
            }
            let fwd = birkhoff_sum(&t, &f, &x, mm as i64).unwrap();
            assert!(close(&birkhoff_sum(&t, &f, &u, -(mm as i64)).unwrap(), &Float::with_val(P, -&fwd), 1e-60));
            assert!(close(&backward_sum(&t, &f, &u, mm).unwrap(), &fwd, 1e-60));
        }
    }

    #[test]
    fn singular_orbits_are_reported() {
        let t = conj_golden();
        let cut = t.top_cuts()[1].clone();
        let r = birkhoff_sum(&t, &Observable::LogDerivative, &cut, 3);
        assert_eq!(r, Err(BirkhoffError::OrbitHitsSingularity { step: 0 }));
    }

    #[test]
    fn special_sums_recursion_matches_direct() {
        for (t, acc) in [(conj_golden(), Acceleration::Zorich), (conj_d4(3), Acceleration::Zorich)] {
            let mut chain = InductionChain::new(t, acc);
            chain.extend_to(6).unwrap();
            let sums = SpecialSums::new(&chain, Observable::LogDerivative);
            for k in 0..=6 {
                assert!(sums.direct_discrepancy(k).unwrap() < 1e-50, "level {k}");
                for j in 0..chain.d() {
                    for z in sums.sample_points(k, j).iter().step_by(5) {
                        let (rec, ret) = sums.eval(k, z).unwrap();
                        assert!(close(&rec, &sums.eval_fast(k, z).unwrap(), 1e-50));
                        // the return lands in I_k
                        assert!(ret < *chain.induced(k).length());
                    }
                }
            }
        }
    }

    #[test]
    fn constant_observable_counts_heights() {
        let mut chain = InductionChain::new(conj_golden(), Acceleration::Positive);
        chain.extend_to(4).unwrap();
        let sums = SpecialSums::new(&chain, Observable::custom(|t, _, _| Float::with_val(t.precision(), 1)));
        for j in 0..2 {
            let z = sums.sample_points(4, j)[3].clone();
            assert_eq!(sums.eval(4, &z).unwrap().0, chain.heights(4)[j].to_f64());
        }
        let level0 = SpecialSums::new(&chain, Observable::LogDerivative);
        let z = Float::with_val(P, 0.77);
        assert_eq!(level0.eval(0, &z).unwrap().0, chain.base().log_derivative(&z).unwrap());
    }

    fn check_decomposition(t: Giet, seed: u64, trials: usize) {
        let mut dz = Decomposer::new(InductionChain::new(t, Acceleration::Rauzy), Observable::LogDerivative, 400);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..trials {
            let x = random_unit(P, || rng.gen());
            let r = rng.gen_range(1..=2000u64);
            let dec = dz.decompose(&x, r).unwrap();
            let chain = dz.chain();
            let direct = birkhoff_sum(chain.base(), &Observable::LogDerivative, &x, r as i64).unwrap();
            assert!(close(&dec.reconstruction, &direct, 1e-40));
            assert!(Float::with_val(P, direct.abs_ref()) <= dec.bound);
            for n in 0..=dec.deepest {
                let norm = chain.matrix(n).norm();
                assert!(dec.counts_backward[n] <= norm && dec.counts_forward[n] <= norm);
            }
            let terms = dec.terms();
            assert!(terms.windows(2).all(|w| w[0].time < w[1].time));
            assert_eq!(terms[0].time, 0);
        }
    }

    #[test]
    fn decomposition_golden() {
        check_decomposition(conj_golden(), 5, 30);
    }

    #[test]
    fn decomposition_d4() {
        check_decomposition(conj_d4(3), 6, 15);
    }

    #[test]
    fn shallow_decomposition_is_single_level() {
        let mut chain = InductionChain::new(conj_golden(), Acceleration::Positive);
        chain.extend_to(8).unwrap();
        let sums = SpecialSums::new(&chain, Observable::LogDerivative);
        let q1 = chain.heights(1).iter().min().unwrap().to_u64().unwrap();
        assert!(q1 >= 2);
        let x = Float::with_val(P, chain.induced(1).length() / 3u32);
        let dec = geometric_decomposition(&sums, &x, q1 - 1).unwrap();
        assert!(dec.terms().iter().all(|t| t.level == 0));
        assert!(dec.counts_forward[0] + dec.counts_backward[0] <= chain.matrix(0).norm());
        assert_eq!(geometric_decomposition(&sums, &x, 0).unwrap_err(), BirkhoffError::EmptySegment);
    }

    #[test]
    fn broken_sums_concatenate() {
        let t = conj_golden();
        let mut chain = InductionChain::new(t, Acceleration::Zorich);
        chain.extend_to(6).unwrap();
        let f = Observable::LogDerivative;
        let sums = SpecialSums::new(&chain, f.clone());
        let j = 0;
        let pts = sums.sample_points(6, j);
        let (x, y) = (pts[4].clone(), pts[11].clone());
        let q = chain.heights(6)[j].to_u64().unwrap();
        let fx = sums.eval_fast(6, &x).unwrap();
        let fy = sums.eval_fast(6, &y).unwrap();
        for m in [0, 1, q / 2, q - 1] {
            let same = BrokenSumSpec { level: 6, tower: j, x: x.clone(), y: x.clone(), m };
            assert!(close(&broken_sum(&chain, &same, &f, BrokenConvention::Concatenation).unwrap(), &fx, 1e-55));
            let plus = broken_sum(&chain, &same, &f, BrokenConvention::PlusOne).unwrap();
            let mut top = x.clone();
            for _ in 0..q {
                top = chain.base().apply_halfopen(&top);
            }
            assert!(close(&plus, &(fx.clone() + f.at(chain.base(), &top)), 1e-55));
        }
        let at0 = BrokenSumSpec { level: 6, tower: j, x: x.clone(), y: y.clone(), m: 0 };
        assert!(close(&broken_sum(&chain, &at0, &f, BrokenConvention::Concatenation).unwrap(), &fy, 1e-55));
        let bad = BrokenSumSpec { level: 6, tower: j, x, y, m: q };
        assert!(matches!(broken_sum(&chain, &bad, &f, BrokenConvention::Concatenation), Err(BirkhoffError::BadBreak { .. })));
    }

    #[test]
    fn broken_sup_vanishes_for_iets_and_dominates_tower_sums() {
        let mut chain = InductionChain::new(StandardIet::golden(P).into_giet(), Acceleration::Zorich);
        chain.extend_to(5).unwrap();
        let b = broken_sup_estimate(&chain, &Observable::LogDerivative, 5, 1, 512);
        assert_eq!((b.sup, b.deviation), (0.0, 0.0));

        let mut chain = InductionChain::new(conj_golden(), Acceleration::Zorich);
        chain.extend_to(6).unwrap();
        let sums = SpecialSums::new(&chain, Observable::LogDerivative);
        for j in 0..2 {
            let b = broken_sup_estimate(&chain, &Observable::LogDerivative, 6, j, 512);
            // m = 0 reproduces |f_k| at each base point
            for z in [&sums.sample_points(6, j)[0], &sums.sample_points(6, j)[17]] {
                assert!(b.sup >= sums.eval_fast(6, z).unwrap().to_f64().abs() - 1e-12);
            }
        }
    }

    #[test]
    fn decay_csv_layout() {
        let mut chain = InductionChain::new(conj_golden(), Acceleration::Positive);
        chain.extend_to(4).unwrap();
        let rows = decay_profile(&chain, &Observable::LogDerivative, 1..=3, 64).unwrap();
        assert!(decay_profile(&chain, &Observable::LogDerivative, [4], 64).is_err());
        let csv = decay_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "k,sup_norm_fk,broken_sup_1,broken_sup_2,deviation,bound");
        assert_eq!(lines.count(), 3);
        assert!(rows.iter().all(|r| r.bound >= r.sup_norm_fk));
    }
}
