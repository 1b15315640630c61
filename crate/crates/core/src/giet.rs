//! Generalized interval exchange transformations in shape-profile
//! coordinates.
//!
//! Branch `i` maps the top interval I_i^t = [L^t_i, L^t_i + λ_i) onto the
//! bottom interval I_i^b = [L^b_i, L^b_i + μ_i) by
//!
//! T(x) = L^b_i + μ_i · φ_i((x − L^t_i) / λ_i),
//!
//! with φ_i a diffeomorphism of [0,1] fixing the endpoints. The slope ratio is
//! ρ_i = μ_i / λ_i. Domains need not have unit length, which lets induced
//! maps be stored without rescaling.

use crate::combinatorics::{Combinatorics, CombinatoricsError, SingularityStructure};
use crate::diffeo::{Diffeo, DiffeoError, DiffeoSpec, Jet};
use crate::quad;
use crate::real::{parse_decimal, to_decimal, tolerance, Coef, Real, DEFAULT_PRECISION};
use rug::Float;
use serde::{Deserialize, Serialize};
use std::ops::Deref;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GietError {
    #[error(transparent)]
    Combinatorics(#[from] CombinatoricsError),
    #[error("profile of interval {label}: {source}")]
    Profile { label: usize, source: DiffeoError },
    #[error("conjugating map is not a diffeomorphism of [0,1]: {0}")]
    NotADiffeo(DiffeoError),
    #[error("expected {expected} entries, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("interval {label} has non-positive length")]
    NonPositiveLength { label: usize },
    #[error("top lengths sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("bottom lengths sum to {bottom} but top lengths sum to {top}")]
    BottomLengthMismatch { top: f64, bottom: f64 },
    #[error("point {x} is within tolerance of discontinuity {index}")]
    AtSingularity { index: usize, x: f64 },
    #[error("point {x} is outside the domain [0, {length}]")]
    OutOfDomain { x: f64, length: f64 },
    #[error("not a decimal number: {0:?}")]
    BadDecimal(String),
    #[error("expected a standard IET")]
    NotStandard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Inverse,
}

/// Which one-sided branch to use at a discontinuity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// Branch of the interval to the right (intervals are `[a, b)`).
    Right,
    /// Branch of the interval to the left (intervals are `(a, b]`).
    Left,
}

#[derive(Clone, Debug)]
pub(crate) struct Branch {
    pub lam: Float,
    pub mu: Float,
    pub lt: Coef,
    pub lb: Coef,
    pub inv_lam: Coef,
    pub mu_c: Coef,
    pub rho: Coef,
    pub log_rho: Float,
    pub shift: Coef,
    pub translation: bool,
    pub profile: Diffeo,
}

/// A GIET with `d` branches.
#[derive(Clone, Debug)]
pub struct Giet {
    comb: Combinatorics,
    prec: u32,
    branches: Vec<Branch>,
    top_cuts: Vec<Float>,
    bottom_cuts: Vec<Float>,
}

impl PartialEq for Giet {
    fn eq(&self, o: &Self) -> bool {
        self.comb == o.comb
            && self.prec == o.prec
            && self.branches.iter().zip(&o.branches).all(|(a, b)| {
                a.lam == b.lam && a.mu == b.mu && a.profile == b.profile
            })
    }
}

impl Giet {
    /// Build from normalized top lengths, log-slopes and profiles.
    pub fn new(
        comb: Combinatorics,
        lambda_top: Vec<Float>,
        log_slopes: Vec<Float>,
        profiles: Vec<Diffeo>,
        prec: u32,
    ) -> Result<Self, GietError> {
        let d = comb.d();
        for v in [lambda_top.len(), log_slopes.len(), profiles.len()] {
            if v != d {
                return Err(GietError::WrongLength { expected: d, got: v });
            }
        }
        let tau = tolerance(prec);
        let sum: Float = Float::with_val(prec, Float::sum(lambda_top.iter()));
        if Float::with_val(prec, &sum - 1u32).abs() > tau {
            return Err(GietError::NotNormalized { sum: sum.to_f64() });
        }
        let bottom: Vec<Float> = lambda_top
            .iter()
            .zip(&log_slopes)
            .map(|(l, s)| {
                if s.is_zero() {
                    Float::with_val(prec, l)
                } else {
                    Float::with_val(prec, s.exp_ref()) * l
                }
            })
            .collect();
        for (label, p) in profiles.iter().enumerate() {
            p.check_profile(prec).map_err(|source| GietError::Profile { label, source })?;
        }
        Self::from_lengths(comb, lambda_top, bottom, profiles, prec)
    }

    /// Build from raw top and bottom lengths; the domain is [0, Σλ].
    /// Profiles are trusted (use [`Giet::new`] for checked input).
    pub fn from_lengths(
        comb: Combinatorics,
        top: Vec<Float>,
        bottom: Vec<Float>,
        profiles: Vec<Diffeo>,
        prec: u32,
    ) -> Result<Self, GietError> {
        let d = comb.d();
        if top.len() != d || bottom.len() != d || profiles.len() != d {
            return Err(GietError::WrongLength { expected: d, got: top.len().min(bottom.len()) });
        }
        for (label, (l, m)) in top.iter().zip(&bottom).enumerate() {
            if !(l.is_sign_positive() && !l.is_zero() && m.is_sign_positive() && !m.is_zero()) {
                return Err(GietError::NonPositiveLength { label });
            }
        }
        let st = Float::with_val(prec, Float::sum(top.iter()));
        let sb = Float::with_val(prec, Float::sum(bottom.iter()));
        if Float::with_val(prec, &st - &sb).abs() > tolerance(prec) {
            return Err(GietError::BottomLengthMismatch { top: st.to_f64(), bottom: sb.to_f64() });
        }
        Ok(Self::assemble(comb, top, bottom, profiles, prec))
    }

    pub(crate) fn assemble(
        comb: Combinatorics,
        top: Vec<Float>,
        bottom: Vec<Float>,
        profiles: Vec<Diffeo>,
        prec: u32,
    ) -> Self {
        let d = comb.d();
        let cuts = |order: &[usize], len: &[Float]| {
            let mut c = Vec::with_capacity(d + 1);
            c.push(Float::new(prec));
            for &l in order {
                let next = Float::with_val(prec, c.last().unwrap() + &len[l]);
                c.push(next);
            }
            c
        };
        let top_cuts = cuts(comb.top(), &top);
        let bottom_cuts = cuts(comb.bottom(), &bottom);
        let branches = (0..d)
            .map(|l| {
                let lt = top_cuts[comb.top_position(l)].clone();
                let lb = bottom_cuts[comb.bottom_position(l)].clone();
                let translation = profiles[l].is_identity() && top[l] == bottom[l];
                let rho = Float::with_val(prec, &bottom[l] / &top[l]);
                let log_rho = if translation { Float::new(prec) } else { Float::with_val(prec, rho.ln_ref()) };
                Branch {
                    inv_lam: Coef::new(Float::with_val(prec, top[l].recip_ref())),
                    mu_c: Coef::new(bottom[l].clone()),
                    shift: Coef::new(Float::with_val(prec, &lb - &lt)),
                    lt: Coef::new(lt),
                    lb: Coef::new(lb),
                    rho: Coef::new(rho),
                    log_rho,
                    translation,
                    lam: top[l].clone(),
                    mu: bottom[l].clone(),
                    profile: profiles[l].clone(),
                }
            })
            .collect();
        Giet { comb, prec, branches, top_cuts, bottom_cuts }
    }

    /// Standard IET with the given normalized lengths.
    pub fn standard(comb: Combinatorics, lambda: Vec<Float>, prec: u32) -> Result<Self, GietError> {
        let d = comb.d();
        let zeros = vec![Float::new(prec); d];
        Giet::new(comb, lambda, zeros, vec![Diffeo::Identity; d], prec)
    }

    /// Piecewise affine map: identity profiles, given log-slopes.
    pub fn affine(comb: Combinatorics, lambda: Vec<Float>, log_slopes: Vec<Float>, prec: u32) -> Result<Self, GietError> {
        let d = comb.d();
        Giet::new(comb, lambda, log_slopes, vec![Diffeo::Identity; d], prec)
    }

    pub fn combinatorics(&self) -> &Combinatorics {
        &self.comb
    }

    pub fn d(&self) -> usize {
        self.comb.d()
    }

    pub fn precision(&self) -> u32 {
        self.prec
    }

    pub fn tau(&self) -> Float {
        tolerance(self.prec)
    }

    /// Length of the domain, Σλ.
    pub fn length(&self) -> &Float {
        &self.top_cuts[self.d()]
    }

    pub fn lambda(&self, label: usize) -> &Float {
        &self.branches[label].lam
    }

    pub fn mu(&self, label: usize) -> &Float {
        &self.branches[label].mu
    }

    pub fn lambdas(&self) -> Vec<Float> {
        self.branches.iter().map(|b| b.lam.clone()).collect()
    }

    pub fn mus(&self) -> Vec<Float> {
        self.branches.iter().map(|b| b.mu.clone()).collect()
    }

    pub fn rho(&self, label: usize) -> &Float {
        &self.branches[label].rho.hi
    }

    pub fn log_slopes(&self) -> Vec<Float> {
        self.branches.iter().map(|b| b.log_rho.clone()).collect()
    }

    pub fn profile(&self, label: usize) -> &Diffeo {
        &self.branches[label].profile
    }

    pub fn profiles(&self) -> Vec<Diffeo> {
        self.branches.iter().map(|b| b.profile.clone()).collect()
    }

    /// Top endpoints u_0 < … < u_d.
    pub fn top_cuts(&self) -> &[Float] {
        &self.top_cuts
    }

    pub fn bottom_cuts(&self) -> &[Float] {
        &self.bottom_cuts
    }

    /// Left endpoint of the top interval of `label`.
    pub fn top_left(&self, label: usize) -> &Float {
        &self.branches[label].lt.hi
    }

    pub fn bottom_left(&self, label: usize) -> &Float {
        &self.branches[label].lb.hi
    }

    pub fn is_translation(&self, label: usize) -> bool {
        self.branches[label].translation
    }

    pub fn is_standard(&self) -> bool {
        self.branches.iter().all(|b| b.translation)
    }

    /// Label of the top interval containing `x`, using one-sided intervals.
    pub fn label_at(&self, x: &Float, side: Side) -> usize {
        let inner = &self.top_cuts[1..self.d()];
        let k = match side {
            Side::Right => inner.partition_point(|u| u <= x),
            Side::Left => inner.partition_point(|u| u < x),
        };
        self.comb.top()[k]
    }

    fn bottom_label_at(&self, x: &Float, side: Side) -> usize {
        let inner = &self.bottom_cuts[1..self.d()];
        let k = match side {
            Side::Right => inner.partition_point(|u| u <= x),
            Side::Left => inner.partition_point(|u| u < x),
        };
        self.comb.bottom()[k]
    }

    /// Jet of the (extended) branch `label` at an absolute point `x`.
    pub fn branch_jet<R: Real>(&self, label: usize, x: &R, order: u8) -> Jet<R> {
        let b = &self.branches[label];
        if b.translation {
            return Jet { v: x.add(&x.coef(&b.shift)), d1: x.lit(1.0), d2: x.lit(0.0), d3: x.lit(0.0) };
        }
        let inv_lam = x.coef(&b.inv_lam);
        let s = x.sub(&x.coef(&b.lt)).mul(&inv_lam);
        let j = b.profile.jet(&s, order);
        let rho = x.coef(&b.rho);
        let v = x.coef(&b.lb).add(&x.coef(&b.mu_c).mul(&j.v));
        if order == 0 {
            return Jet { v, d1: x.lit(0.0), d2: x.lit(0.0), d3: x.lit(0.0) };
        }
        let d1 = rho.mul(&j.d1);
        if order == 1 {
            return Jet { v, d1, d2: x.lit(0.0), d3: x.lit(0.0) };
        }
        let d2 = rho.mul(&j.d2).mul(&inv_lam);
        let d3 = rho.mul(&j.d3).mul(&inv_lam.square());
        Jet { v, d1, d2, d3 }
    }

    /// T(x) on the one-sided branch, without singularity checks.
    pub fn apply_side(&self, x: &Float, side: Side) -> Float {
        self.branch_jet(self.label_at(x, side), x, 0).v
    }

    /// Branch `label` of T at x, extended to the closed top interval.
    pub fn apply_branch(&self, label: usize, x: &Float) -> Float {
        self.branch_jet(label, x, 0).v
    }

    /// T(x) with intervals closed on the left; used for orbits.
    pub fn apply_halfopen(&self, x: &Float) -> Float {
        self.apply_side(x, Side::Right)
    }

    /// T⁻¹(x) on the one-sided bottom branch.
    pub fn inverse_side(&self, x: &Float, side: Side) -> Float {
        let label = self.bottom_label_at(x, side);
        let b = &self.branches[label];
        if b.translation {
            return Float::with_val(self.prec, x - &b.shift.hi);
        }
        let s = Float::with_val(self.prec, x - &b.lb.hi) / &b.mu;
        let t = b.profile.eval_inverse(&s);
        Float::with_val(self.prec, &b.lam * t) + &b.lt.hi
    }

    /// Forward or inverse image of a point away from the discontinuities.
    pub fn apply(&self, x: &Float, dir: Direction) -> Result<Float, GietError> {
        let cuts = match dir {
            Direction::Forward => &self.top_cuts,
            Direction::Inverse => &self.bottom_cuts,
        };
        self.check_point(x, cuts)?;
        Ok(match dir {
            Direction::Forward => self.apply_halfopen(x),
            Direction::Inverse => self.inverse_side(x, Side::Right),
        })
    }

    fn check_point(&self, x: &Float, cuts: &[Float]) -> Result<(), GietError> {
        let len = self.length();
        if x.is_nan() || *x < 0 || x > len {
            return Err(GietError::OutOfDomain { x: x.to_f64(), length: len.to_f64() });
        }
        let tau = self.tau();
        let k = cuts.partition_point(|u| u <= x);
        for i in [k.saturating_sub(1), k.min(cuts.len() - 1)] {
            if Float::with_val(self.prec, x - &cuts[i]).abs() < tau {
                return Err(GietError::AtSingularity { index: i, x: x.to_f64() });
            }
        }
        Ok(())
    }

    /// Label of the branch at `x`, failing near a top endpoint.
    pub fn branch_label(&self, x: &Float) -> Result<usize, GietError> {
        self.check_point(x, &self.top_cuts)?;
        Ok(self.label_at(x, Side::Right))
    }

    /// f = log DT on branch `label` (extended to its closed interval).
    pub fn log_derivative_on(&self, label: usize, x: &Float) -> Float {
        let b = &self.branches[label];
        if b.translation {
            return Float::new(self.prec);
        }
        let s = Float::with_val(self.prec, x - &b.lt.hi) * &b.inv_lam.hi;
        self.log_derivative_profile(label, &s)
    }

    /// log ρ_i + log φ_i'(s) at profile coordinate `s`.
    pub fn log_derivative_profile(&self, label: usize, s: &Float) -> Float {
        let b = &self.branches[label];
        if b.translation {
            return Float::new(self.prec);
        }
        if b.profile.is_identity() {
            return b.log_rho.clone();
        }
        let j = b.profile.jet(s, 1);
        Float::with_val(self.prec, j.d1.ln_ref()) + &b.log_rho
    }

    /// log DT(x).
    pub fn log_derivative(&self, x: &Float) -> Result<Float, GietError> {
        let l = self.branch_label(x)?;
        Ok(self.log_derivative_on(l, x))
    }

    /// η_T(x) = D²T(x) / DT(x).
    pub fn nonlinearity(&self, x: &Float) -> Result<Float, GietError> {
        let l = self.branch_label(x)?;
        if self.branches[l].profile.is_identity() {
            return Ok(Float::new(self.prec));
        }
        let j = self.branch_jet(l, x, 3);
        Ok(Float::with_val(self.prec, &j.d2 / &j.d1))
    }

    /// ∫|η_T| over the domain. Since η_T dx = η_φ ds branchwise, this is
    /// Σ_i ∫₀¹ |φ_i''/φ_i'| ds.
    pub fn total_nonlinearity(&self) -> f64 {
        self.branches
            .iter()
            .filter(|b| !b.profile.is_identity())
            .map(|b| {
                quad::integrate(
                    |s| {
                        let j = b.profile.jet(&s, 3);
                        (j.d2 / j.d1).abs()
                    },
                    0.0,
                    1.0,
                    1e-13,
                )
            })
            .sum()
    }

    pub fn singularity_structure(&self) -> SingularityStructure {
        self.comb.singularity_structure()
    }

    /// B_s(T) = Σ_{s(u_i)=s} (f^r(u_i) − f^l(u_i)) for f = log DT, with the
    /// one-sided values taken from the extended branches and
    /// f^l(u_0) = f^r(u_d) = 0.
    pub fn boundary(&self) -> Vec<Float> {
        let s = self.singularity_structure();
        let d = self.d();
        let mut out = vec![Float::new(self.prec); s.kappa];
        let zero = Float::new(self.prec);
        let one = Float::with_val(self.prec, 1);
        for i in 0..=d {
            let fr = if i < d { self.log_derivative_profile(self.comb.top()[i], &zero) } else { Float::new(self.prec) };
            let fl = if i > 0 { self.log_derivative_profile(self.comb.top()[i - 1], &one) } else { Float::new(self.prec) };
            out[s.assignment[i]] += fr - fl;
        }
        out
    }

    /// The same map rescaled linearly to a domain of unit length.
    pub fn normalized(&self) -> Giet {
        let len = self.length().clone();
        if len == 1 {
            return self.clone();
        }
        let top = self.branches.iter().map(|b| Float::with_val(self.prec, &b.lam / &len)).collect();
        let bottom = self.branches.iter().map(|b| Float::with_val(self.prec, &b.mu / &len)).collect();
        Giet::assemble(self.comb.clone(), top, bottom, self.profiles(), self.prec)
    }

    /// T = h ∘ T0 ∘ h⁻¹ in shape-profile coordinates.
    pub fn conjugate_by_diffeo(t0: &StandardIet, h: &Diffeo) -> Result<Giet, GietError> {
        let prec = t0.prec;
        if h.is_identity() {
            return Ok(t0.giet().clone());
        }
        h.check_profile(prec).map_err(GietError::NotADiffeo)?;
        let hinv = h.inverse();
        let d = t0.d();
        let hc = |x: &Float| h.eval(x);
        let ut: Vec<Float> = t0.top_cuts.iter().map(hc).collect();
        let ub: Vec<Float> = t0.bottom_cuts.iter().map(hc).collect();
        let mut top = Vec::with_capacity(d);
        let mut bottom = Vec::with_capacity(d);
        let mut profiles = Vec::with_capacity(d);
        for label in 0..d {
            let pt = t0.comb.top_position(label);
            let pb = t0.comb.bottom_position(label);
            let lam = Float::with_val(prec, &ut[pt + 1] - &ut[pt]);
            let mu = Float::with_val(prec, &ub[pb + 1] - &ub[pb]);
            let b0 = &t0.branches[label];
            let one = Float::with_val(prec, 1);
            let prof = Diffeo::compose(vec![
                Diffeo::affine(lam.clone(), ut[pt].clone()),
                hinv.clone(),
                Diffeo::affine(one, b0.shift.hi.clone()),
                h.clone(),
                Diffeo::affine(Float::with_val(prec, mu.recip_ref()), -Float::with_val(prec, &ub[pb] / &mu)),
            ]);
            top.push(lam);
            bottom.push(mu);
            profiles.push(prof);
        }
        Giet::from_lengths(t0.comb.clone(), top, bottom, profiles, prec)
    }

    pub fn to_document(&self) -> GietDocument {
        let n = self.normalized();
        GietDocument {
            combinatorics: n.comb.clone(),
            lambda_top: n.branches.iter().map(|b| to_decimal(&b.lam)).collect(),
            log_slopes: n.branches.iter().map(|b| to_decimal(&b.log_rho)).collect(),
            profile: n.branches.iter().map(|b| DiffeoSpec::from_diffeo(&b.profile)).collect(),
            precision_bits: self.prec,
        }
    }

    pub fn from_document(doc: &GietDocument) -> Result<Giet, GietError> {
        let prec = doc.precision_bits;
        let num = |s: &String| parse_decimal(prec, s).ok_or_else(|| GietError::BadDecimal(s.clone()));
        let lambda = doc.lambda_top.iter().map(num).collect::<Result<Vec<_>, _>>()?;
        let slopes = doc.log_slopes.iter().map(num).collect::<Result<Vec<_>, _>>()?;
        let profiles = doc
            .profile
            .iter()
            .enumerate()
            .map(|(label, p)| p.to_diffeo(prec).map_err(|source| GietError::Profile { label, source }))
            .collect::<Result<Vec<_>, _>>()?;
        Giet::new(doc.combinatorics.clone(), lambda, slopes, profiles, prec)
    }
}

/// JSON form of a GIET. Numbers are decimal strings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GietDocument {
    pub combinatorics: Combinatorics,
    pub lambda_top: Vec<String>,
    pub log_slopes: Vec<String>,
    pub profile: Vec<DiffeoSpec>,
    pub precision_bits: u32,
}

impl Default for GietDocument {
    fn default() -> Self {
        GietDocument {
            combinatorics: Combinatorics::rotation(),
            lambda_top: vec!["0.5".into(), "0.5".into()],
            log_slopes: vec!["0".into(), "0".into()],
            profile: vec![DiffeoSpec::Identity, DiffeoSpec::Identity],
            precision_bits: DEFAULT_PRECISION,
        }
    }
}

/// A GIET whose branches are all translations.
#[derive(Clone, Debug, PartialEq)]
pub struct StandardIet(Giet);

impl StandardIet {
    pub fn new(comb: Combinatorics, lambda: Vec<Float>, prec: u32) -> Result<Self, GietError> {
        Giet::standard(comb, lambda, prec).map(StandardIet)
    }

    /// Rotation by α written as a 2-interval exchange:
    /// λ = (1/(1+α), α/(1+α)).
    pub fn rotation(alpha: &Float) -> Self {
        let prec = alpha.prec();
        let s = Float::with_val(prec, alpha + 1u32);
        let l1 = Float::with_val(prec, s.recip_ref());
        let l2 = Float::with_val(prec, alpha / &s);
        StandardIet(Giet::assemble(Combinatorics::rotation(), vec![l1.clone(), l2.clone()], vec![l1, l2], vec![Diffeo::Identity; 2], prec))
    }

    /// Rotation by the inverse golden mean.
    pub fn golden(prec: u32) -> Self {
        let five = Float::with_val(prec, 5);
        let alpha = (five.sqrt() - 1u32) / 2u32;
        Self::rotation(&alpha)
    }

    pub fn giet(&self) -> &Giet {
        &self.0
    }

    pub fn into_giet(self) -> Giet {
        self.0
    }
}

impl TryFrom<Giet> for StandardIet {
    type Error = GietError;
    fn try_from(g: Giet) -> Result<Self, GietError> {
        if g.is_standard() {
            Ok(StandardIet(g))
        } else {
            Err(GietError::NotStandard)
        }
    }
}

impl Deref for StandardIet {
    type Target = Giet;
    fn deref(&self) -> &Giet {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const P: u32 = 256;

    fn f(v: f64) -> Float {
        Float::with_val(P, v)
    }

    fn dec(s: &str) -> Float {
        parse_decimal(P, s).unwrap()
    }

    fn close(a: &Float, b: &Float, tol: f64) -> bool {
        Float::with_val(P, a - b).abs() < tol
    }

    fn sine_h() -> Diffeo {
        Diffeo::sine(f(0.1), 1)
    }

    fn d2(l1: f64) -> StandardIet {
        StandardIet::new(Combinatorics::rotation(), vec![f(l1), Float::with_val(P, 1 - f(l1))], P).unwrap()
    }

    #[test]
    fn standard_apply_examples() {
        let t = d2(0.25);
        assert!(close(&t.apply(&dec("0.1"), Direction::Forward).unwrap(), &dec("0.85"), 1e-75));
        assert!(close(&t.apply(&dec("0.5"), Direction::Forward).unwrap(), &dec("0.25"), 1e-75));
        assert!(close(&t.apply(&dec("0.85"), Direction::Inverse).unwrap(), &dec("0.1"), 1e-75));
        assert!(matches!(t.apply(&f(0.25), Direction::Forward), Err(GietError::AtSingularity { index: 1, .. })));
        assert!(matches!(t.apply(&f(1.5), Direction::Forward), Err(GietError::OutOfDomain { .. })));
    }

    #[test]
    fn construction_errors() {
        let c = Combinatorics::rotation();
        assert!(matches!(Giet::standard(c.clone(), vec![f(0.5), f(0.6)], P), Err(GietError::NotNormalized { .. })));
        assert!(matches!(
            Giet::affine(c.clone(), vec![f(0.5), f(0.5)], vec![f(0.1), f(0.1)], P),
            Err(GietError::BottomLengthMismatch { .. })
        ));
        assert!(matches!(
            Giet::new(c, vec![f(0.5), f(0.5)], vec![f(0.0), f(0.0)], vec![Diffeo::Identity, Diffeo::sine(f(2.0), 1)], P),
            Err(GietError::Profile { label: 1, .. })
        ));
    }

    // Oracle: h(T0(h⁻¹ x)) with h⁻¹ by bisection, all in 256-bit.
    fn composed_oracle(t0: &StandardIet, x: &Float) -> Float {
        let h = sine_h();
        let (mut lo, mut hi) = (f(0.0), f(1.0));
        for _ in 0..300 {
            let mid = Float::with_val(P, &lo + &hi) / 2u32;
            if h.eval(&mid) < *x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let y = t0.apply_halfopen(&lo);
        h.eval(&y)
    }

    #[test]
    fn conjugate_matches_direct_composition() {
        let t0 = StandardIet::golden(P);
        let t = Giet::conjugate_by_diffeo(&t0, &sine_h()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let x = f(rng.gen_range(0.001..0.999));
            let Ok(y) = t.apply(&x, Direction::Forward) else { continue };
            let o = composed_oracle(&t0, &x);
            assert!(Float::with_val(P, &y - &o).abs() < 1e-12 * 1e-50, "{x} {y} {o}");
        }
    }

    #[test]
    fn conjugate_by_identity_is_t0() {
        let t0 = StandardIet::golden(P);
        let t = Giet::conjugate_by_diffeo(&t0, &Diffeo::Identity).unwrap();
        assert!(t.is_standard());
        assert_eq!(&t, t0.giet());
    }

    #[test]
    fn conjugate_rejects_non_diffeo() {
        let t0 = StandardIet::golden(P);
        let bad = Diffeo::affine(f(2.0), f(0.0));
        assert!(matches!(Giet::conjugate_by_diffeo(&t0, &bad), Err(GietError::NotADiffeo(_))));
    }

    #[test]
    fn round_trip_forward_inverse() {
        let t0 = StandardIet::new(Combinatorics::reversal(4), vec![dec("0.1"), dec("0.2"), dec("0.3"), dec("0.4")], P).unwrap();
        let h = Diffeo::compose(vec![sine_h(), Diffeo::quadratic(f(0.2))]);
        let t = Giet::conjugate_by_diffeo(&t0, &h).unwrap();
        let tau = t.tau();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x = f(rng.gen_range(0.0..1.0));
            let Ok(y) = t.apply(&x, Direction::Forward) else { continue };
            let Ok(back) = t.apply(&y, Direction::Inverse) else { continue };
            assert!(Float::with_val(P, &back - &x).abs() < tau);
        }
    }

    #[test]
    fn nonlinearity_vanishes_on_affine() {
        let t = Giet::affine(Combinatorics::rotation(), vec![f(0.5), f(0.5)], vec![f(0.2), f(-0.2)], P);
        // e^{0.2}/2 + e^{-0.2}/2 ≠ 1, so build a consistent pair instead
        assert!(t.is_err());
        let l1 = dec("0.4");
        let l2 = dec("0.6");
        let s1 = f(0.3);
        // μ1 + μ2 = 1 ⇒ μ2 = 1 − 0.4 e^{0.3}
        let mu1 = Float::with_val(P, s1.exp_ref()) * &l1;
        let s2 = (Float::with_val(P, 1 - &mu1) / &l2).ln();
        let t = Giet::affine(Combinatorics::rotation(), vec![l1, l2], vec![s1, s2], P).unwrap();
        assert!(t.nonlinearity(&f(0.3)).unwrap().is_zero());
        assert_eq!(t.total_nonlinearity(), 0.0);
        assert_eq!(d2(0.3).total_nonlinearity(), 0.0);
    }

    // Independent oracle: η of x ↦ h(h⁻¹(x) + δ) written out by hand,
    // η = (h''(y+δ)/h'(y+δ) − h''(y)/h'(y)) / h'(y), y = h⁻¹(x), integrated
    // by composite Simpson in x.
    #[test]
    fn total_nonlinearity_matches_composition_oracle() {
        let t0 = StandardIet::golden(P);
        let t = Giet::conjugate_by_diffeo(&t0, &sine_h()).unwrap();
        let w = 2.0 * std::f64::consts::PI;
        let e = 0.1;
        let h = |y: f64| y - e / w * (w * y).sin();
        let h1 = |y: f64| 1.0 - e * (w * y).cos();
        let h2 = |y: f64| e * w * (w * y).sin();
        let hinv = |x: f64| {
            let mut y = x;
            for _ in 0..50 {
                y -= (h(y) - x) / h1(y);
            }
            y
        };
        let alpha = t0.lambda(0).to_f64();
        let mut total = 0.0;
        // branches of T0: [0,α) shifts by 1−α, [α,1) shifts by −α
        for (a, b, delta) in [(0.0, alpha, 1.0 - alpha), (alpha, 1.0, -alpha)] {
            let (xa, xb) = (h(a), h(b));
            let eta = |x: f64| {
                let y = hinv(x);
                ((h2(y + delta) / h1(y + delta) - h2(y) / h1(y)) / h1(y)).abs()
            };
            let n = 200_000;
            let hstep = (xb - xa) / n as f64;
            let mut s = eta(xa) + eta(xb);
            for i in 1..n {
                s += eta(xa + i as f64 * hstep) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            total += s * hstep / 3.0;
        }
        let got = t.total_nonlinearity();
        assert!(((got - total) / total).abs() < 1e-8, "{got} vs {total}");
    }

    #[test]
    fn total_nonlinearity_is_affine_invariant() {
        let t0 = StandardIet::new(Combinatorics::reversal(3), vec![dec("0.2"), dec("0.5"), dec("0.3")], P).unwrap();
        let t = Giet::conjugate_by_diffeo(&t0, &Diffeo::quadratic(f(0.4))).unwrap();
        let base = t.total_nonlinearity();
        // a∘T∘b for affine a, b only rescales branch domains and ranges
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let k = f(rng.gen_range(0.1..10.0));
            let top = t.lambdas().into_iter().map(|l| l * &k).collect();
            let m = f(rng.gen_range(0.1..10.0));
            let s = Float::with_val(P, &k * &m);
            let bottom: Vec<Float> = t.mus().into_iter().map(|l| l * &s).collect();
            // rescale bottoms so the sums agree
            let sb = Float::with_val(P, Float::sum(bottom.iter()));
            let st = Float::with_val(P, &k * t.length());
            let bottom = bottom.into_iter().map(|b| b * &st / &sb).collect();
            let r = Giet::from_lengths(t.combinatorics().clone(), top, bottom, t.profiles(), P).unwrap();
            assert!(((r.total_nonlinearity() - base) / base).abs() < 1e-10);
        }
    }

    #[test]
    fn nonlinearity_distribution_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let g = Diffeo::sine(f(rng.gen_range(-0.9..0.9)), rng.gen_range(1..4));
            let h = Diffeo::quadratic(f(rng.gen_range(-0.9..0.9)));
            let signed = |d: &Diffeo| {
                quad::integrate(|s| {
                    let j = d.jet(&s, 3);
                    j.d2 / j.d1
                }, 0.0, 1.0, 1e-13)
            };
            let lhs = signed(&h.then(&g));
            let rhs = signed(&h) + signed(&g);
            assert!((lhs - rhs).abs() < 1e-8);
        }
    }

    #[test]
    fn boundary_vanishes_for_standard_and_conjugates() {
        for d in 2..=6 {
            let lam: Vec<Float> = (1..=d).map(|i| Float::with_val(P, 2 * i) / (d * (d + 1)) as u32).collect();
            let t0 = StandardIet::new(Combinatorics::reversal(d), lam, P).unwrap();
            assert!(t0.boundary().iter().all(|b| b.is_zero()));
            let t = Giet::conjugate_by_diffeo(&t0, &Diffeo::compose(vec![sine_h(), Diffeo::quadratic(f(0.3))])).unwrap();
            for b in t.boundary() {
                assert!(b.abs() < 1e-10);
            }
        }
    }

    // By hand for d=2: σ has one class, so B = [f^r(u0) − 0] + [f^r(u1) − f^l(u1)]
    // + [0 − f^l(u2)] = s1 + s2 − s1 − s2 = 0 for identity profiles.
    #[test]
    fn boundary_affine_d2_hand_value() {
        let l1 = dec("0.4");
        let l2 = dec("0.6");
        let s1 = f(0.3);
        let mu1 = Float::with_val(P, s1.exp_ref()) * &l1;
        let s2 = (Float::with_val(P, 1 - &mu1) / &l2).ln();
        let t = Giet::affine(Combinatorics::rotation(), vec![l1, l2], vec![s1, s2], P).unwrap();
        let b = t.boundary();
        assert_eq!(b.len(), 1);
        assert!(b[0].clone().abs() < 1e-70);
    }

    #[test]
    fn document_round_trip() {
        let t0 = StandardIet::golden(P);
        let t = Giet::conjugate_by_diffeo(&t0, &sine_h()).unwrap();
        let doc = t.to_document();
        let json = serde_json::to_string(&doc).unwrap();
        let back = Giet::from_document(&serde_json::from_str(&json).unwrap()).unwrap();
        let x = f(0.3);
        let diff = Float::with_val(P, t.apply_halfopen(&x) - back.apply_halfopen(&x));
        assert!(diff.abs() < 1e-70);
        assert_eq!(t0.to_document().lambda_top, Giet::from_document(&t0.to_document()).unwrap().to_document().lambda_top);
    }
}
