//! Closed-form diffeomorphism family and lazy composition chains.
//!
//! Branch profiles of induced maps are never resampled: every Rauzy–Veech
//! step wraps the old profiles in a new [`Diffeo::Compose`] node, sharing
//! subtrees through `Arc`. Derivatives up to order three follow from the
//! chain rule, see [`Jet`].

use crate::real::{tolerance, Coef, Real};
use rug::Float;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffeoError {
    #[error("map does not fix the endpoints of [0,1] (value {value} at {at})")]
    EndpointNotFixed { at: f64, value: f64 },
    #[error("derivative not positive at {at} (value {value})")]
    NotADiffeo { at: f64, value: f64 },
    #[error("family parameter out of range: {0}")]
    BadParameter(String),
}

/// Value and first three derivatives at a point.
#[derive(Clone, Debug)]
pub struct Jet<R> {
    pub v: R,
    pub d1: R,
    pub d2: R,
    pub d3: R,
}

impl<R: Real> Jet<R> {
    pub fn ident(x: &R) -> Self {
        Jet { v: x.clone(), d1: x.lit(1.0), d2: x.lit(0.0), d3: x.lit(0.0) }
    }

    /// Jet of `outer ∘ inner`, where `outer` was evaluated at `inner.v`.
    fn chain(outer: Jet<R>, inner: &Jet<R>, order: u8) -> Self {
        let zero = inner.v.lit(0.0);
        let d1 = if order >= 1 { outer.d1.mul(&inner.d1) } else { zero.clone() };
        let (d2, d3) = if order >= 2 {
            let u1sq = inner.d1.square();
            let d2 = outer.d2.mul(&u1sq).add(&outer.d1.mul(&inner.d2));
            let d3 = outer
                .d3
                .mul(&u1sq.mul(&inner.d1))
                .add(&outer.d2.mul(&inner.d1).mul(&inner.d2).mul_f(3.0))
                .add(&outer.d1.mul(&inner.d3));
            (d2, d3)
        } else {
            (zero.clone(), zero)
        };
        Jet { v: outer.v, d1, d2, d3 }
    }
}

/// A C³ diffeomorphism of the line, built from a small closed-form family.
///
/// `Compose` applies its parts first to last.
#[derive(Clone, Debug, PartialEq)]
pub enum Diffeo {
    Identity,
    /// x − (ε / 2πn) sin(2πn x), a diffeo for |ε| < 1.
    Sine { eps: Coef, freq: u32 },
    /// x + a·x(1 − x), a diffeo of [0,1] for |a| < 1.
    Quadratic { a: Coef },
    /// x ↦ scale·x + shift.
    Affine { scale: Coef, shift: Coef },
    Inverse(Arc<Diffeo>),
    Compose(Arc<[Diffeo]>),
}

impl Diffeo {
    pub fn sine(eps: Float, freq: u32) -> Self {
        Diffeo::Sine { eps: Coef::new(eps), freq }
    }

    pub fn quadratic(a: Float) -> Self {
        Diffeo::Quadratic { a: Coef::new(a) }
    }

    pub fn affine(scale: Float, shift: Float) -> Self {
        Diffeo::Affine { scale: Coef::new(scale), shift: Coef::new(shift) }
    }

    /// Affine map sending [a, b] onto [c, d] increasingly.
    pub fn affine_between(a: &Float, b: &Float, c: &Float, d: &Float) -> Self {
        let p = a.prec().max(c.prec());
        let scale = Float::with_val(p, d - c) / Float::with_val(p, b - a);
        let shift = Float::with_val(p, c - Float::with_val(p, &scale * a));
        Diffeo::affine(scale, shift)
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Diffeo::Identity)
    }

    /// Composition applying `parts` in order. Identities are dropped and
    /// adjacent affine maps merged; nested chains are kept shared.
    pub fn compose(parts: Vec<Diffeo>) -> Self {
        let mut out: Vec<Diffeo> = Vec::with_capacity(parts.len());
        for p in parts {
            match p {
                Diffeo::Identity => {}
                Diffeo::Affine { scale: s2, shift: b2 } => {
                    if let Some(Diffeo::Affine { scale: s1, shift: b1 }) = out.last() {
                        let prec = s1.hi.prec().max(s2.hi.prec());
                        let scale = Float::with_val(prec, &s2.hi * &s1.hi);
                        let shift = Float::with_val(prec, &s2.hi * &b1.hi) + &b2.hi;
                        out.pop();
                        out.push(Diffeo::affine(scale, shift));
                    } else {
                        out.push(Diffeo::Affine { scale: s2, shift: b2 });
                    }
                }
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Diffeo::Identity,
            1 => out.pop().unwrap(),
            _ => Diffeo::Compose(out.into()),
        }
    }

    /// `g ∘ self`.
    pub fn then(&self, g: &Diffeo) -> Self {
        Diffeo::compose(vec![self.clone(), g.clone()])
    }

    /// Structural inverse: chains reverse, affine maps invert in closed form.
    pub fn inverse(&self) -> Self {
        match self {
            Diffeo::Identity => Diffeo::Identity,
            Diffeo::Affine { scale, shift } => {
                let p = scale.hi.prec();
                let s = Float::with_val(p, 1) / &scale.hi;
                let b = -Float::with_val(p, &shift.hi * &s);
                Diffeo::affine(s, b)
            }
            Diffeo::Inverse(g) => (**g).clone(),
            Diffeo::Compose(parts) => {
                Diffeo::compose(parts.iter().rev().map(|p| p.inverse()).collect())
            }
            other => Diffeo::Inverse(Arc::new(other.clone())),
        }
    }

    /// Number of family leaves in the expression tree.
    pub fn size(&self) -> usize {
        match self {
            Diffeo::Identity => 0,
            Diffeo::Inverse(g) => g.size(),
            Diffeo::Compose(p) => p.iter().map(Diffeo::size).sum(),
            _ => 1,
        }
    }

    pub fn eval<R: Real>(&self, x: &R) -> R {
        self.jet(x, 0).v
    }

    /// g⁻¹(y), walking the tree in reverse without building the inverse.
    pub fn eval_inverse<R: Real>(&self, y: &R) -> R {
        match self {
            Diffeo::Identity => y.clone(),
            Diffeo::Affine { scale, shift } => y.sub(&y.coef(shift)).div(&y.coef(scale)),
            Diffeo::Inverse(g) => g.eval(y),
            Diffeo::Compose(parts) => {
                let mut v = y.clone();
                for p in parts.iter().rev() {
                    v = p.eval_inverse(&v);
                }
                v
            }
            leaf => inverse_jet(leaf, y, 0).v,
        }
    }

    /// Jet up to `order` (0, 1 or 3; 2 is computed as 3).
    pub fn jet<R: Real>(&self, x: &R, order: u8) -> Jet<R> {
        match self {
            Diffeo::Identity => Jet::ident(x),
            Diffeo::Affine { scale, shift } => {
                let s = x.coef(scale);
                let v = s.mul(x).add(&x.coef(shift));
                Jet { v, d1: s, d2: x.lit(0.0), d3: x.lit(0.0) }
            }
            Diffeo::Sine { eps, freq } => {
                let e = x.coef(eps);
                let w = x.pi().mul_f(2.0 * *freq as f64);
                let (sn, cs) = w.mul(x).sin_cos();
                sine_jet(x, &e, &w, &sn, &cs, order)
            }
            Diffeo::Quadratic { a } => {
                let a = x.coef(a);
                let one = x.lit(1.0);
                let v = x.add(&a.mul(x).mul(&one.sub(x)));
                let d1 = one.add(&a.mul(&one.sub(&x.mul_f(2.0))));
                Jet { v, d1, d2: a.mul_f(-2.0), d3: x.lit(0.0) }
            }
            Diffeo::Inverse(g) => inverse_jet(g, x, order),
            Diffeo::Compose(parts) => {
                let mut j = Jet::ident(x);
                for p in parts.iter() {
                    let o = p.jet(&j.v, order);
                    j = Jet::chain(o, &j, order);
                }
                j
            }
        }
    }

    /// Check that `self` is a profile: fixes 0 and 1 (within τ) and has a
    /// positive derivative on a 2¹⁰-point grid plus the family certificate.
    pub fn check_profile(&self, prec: u32) -> Result<(), DiffeoError> {
        self.check_family()?;
        let tau = tolerance(prec).to_f64().max(1e-12);
        for at in [0.0, 1.0] {
            let v = self.eval(&Float::with_val(prec, at)).to_f64();
            if (v - at).abs() > tau {
                return Err(DiffeoError::EndpointNotFixed { at, value: v });
            }
        }
        let n = 1024;
        for i in 0..=n {
            let at = i as f64 / n as f64;
            let d = self.jet(&at, 1).d1;
            if !(d > 0.0) {
                return Err(DiffeoError::NotADiffeo { at, value: d });
            }
        }
        Ok(())
    }

    fn check_family(&self) -> Result<(), DiffeoError> {
        match self {
            Diffeo::Sine { eps, freq } => {
                if *freq == 0 || !(eps.lo.abs() < 1.0) {
                    return Err(DiffeoError::BadParameter(format!(
                        "sine needs |eps| < 1 and freq ≥ 1, got eps={}, freq={freq}",
                        eps.lo
                    )));
                }
            }
            Diffeo::Quadratic { a } => {
                if !(a.lo.abs() < 1.0) {
                    return Err(DiffeoError::BadParameter(format!(
                        "quadratic needs |a| < 1, got {}",
                        a.lo
                    )));
                }
            }
            Diffeo::Affine { scale, .. } => {
                if !(scale.lo > 0.0) {
                    return Err(DiffeoError::BadParameter("affine scale must be positive".into()));
                }
            }
            Diffeo::Inverse(g) => g.check_family()?,
            Diffeo::Compose(p) => {
                for q in p.iter() {
                    q.check_family()?;
                }
            }
            Diffeo::Identity => {}
        }
        Ok(())
    }
}

fn sine_jet<R: Real>(x: &R, e: &R, w: &R, sn: &R, cs: &R, order: u8) -> Jet<R> {
    let v = x.sub(&e.div(w).mul(sn));
    let d1 = x.lit(1.0).sub(&e.mul(cs));
    let (d2, d3) = if order >= 2 {
        (e.mul(w).mul(sn), e.mul(&w.square()).mul(cs))
    } else {
        (x.lit(0.0), x.lit(0.0))
    };
    Jet { v, d1, d2, d3 }
}

/// Jet of g⁻¹ at `y` from the jet of g at x = g⁻¹(y):
/// (g⁻¹)' = 1/g', (g⁻¹)'' = −g''/g'³, (g⁻¹)''' = (3g''² − g'g''')/g'⁵.
fn inverse_jet<R: Real>(g: &Diffeo, y: &R, order: u8) -> Jet<R> {
    let (x, gj) = match g {
        Diffeo::Quadratic { a } if a.lo != 0.0 => {
            let a = y.coef(a);
            let b = y.lit(1.0).add(&a);
            // stable root of a x² − (1+a) x + y = 0
            let disc = b.square().sub(&a.mul(y).mul_f(4.0));
            let x = y.mul_f(2.0).div(&b.add(&disc.sqrt()));
            let gj = g.jet(&x, order.max(1));
            (x, gj)
        }
        _ => newton_inverse(g, y, order),
    };
    let zero = y.lit(0.0);
    let inv1 = y.lit(1.0).div(&gj.d1);
    if order < 2 {
        return Jet { v: x, d1: inv1, d2: zero.clone(), d3: zero };
    }
    let inv3 = inv1.square().mul(&inv1);
    let d2 = gj.d2.neg().mul(&inv3);
    let d3 = gj.d2.square().mul_f(3.0).sub(&gj.d1.mul(&gj.d3)).mul(&inv3).mul(&inv1.square());
    Jet { v: x, d1: inv1, d2, d3 }
}

/// Halley iteration for g(x) = y, seeded from an `f64` solve. Returns x and
/// the jet of g at x.
fn newton_inverse<R: Real>(g: &Diffeo, y: &R, order: u8) -> (R, Jet<R>) {
    let yf = y.to_f64();
    let mut xf = yf;
    for _ in 0..60 {
        let j = g.jet(&xf, 3);
        let r = j.v - yf;
        let den = 2.0 * j.d1 * j.d1 - r * j.d2;
        let step = if den != 0.0 { 2.0 * r * j.d1 / den } else { r / j.d1 };
        xf -= step;
        if step.abs() <= 4.0 * f64::EPSILON * xf.abs().max(1.0) {
            break;
        }
    }
    let mut x = y.lit(xf);
    let eps = y.solver_eps();
    let mut last = f64::INFINITY;
    for _ in 0..40 {
        let j = g.jet(&x, 3);
        let r = j.v.sub(y);
        let den = j.d1.square().mul_f(2.0).sub(&r.mul(&j.d2));
        let step = r.mul_f(2.0).mul(&j.d1).div(&den);
        x = x.sub(&step);
        let s = step.to_f64().abs();
        if s <= eps * x.to_f64().abs().max(1.0) || s >= last {
            break;
        }
        last = s;
    }
    let j = g.jet(&x, order.max(1));
    (x, j)
}

/// Serializable family descriptor for a [`Diffeo`]; parameters are decimal
/// strings so that the working precision survives a round trip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DiffeoSpec {
    Identity,
    Sine { eps: String, freq: u32 },
    Quadratic { a: String },
    Affine { scale: String, shift: String },
    Inverse { of: Box<DiffeoSpec> },
    Compose { parts: Vec<DiffeoSpec> },
}

impl DiffeoSpec {
    pub fn to_diffeo(&self, prec: u32) -> Result<Diffeo, DiffeoError> {
        let num = |s: &str| {
            crate::real::parse_decimal(prec, s)
                .ok_or_else(|| DiffeoError::BadParameter(format!("not a decimal: {s:?}")))
        };
        let d = match self {
            DiffeoSpec::Identity => Diffeo::Identity,
            DiffeoSpec::Sine { eps, freq } => Diffeo::sine(num(eps)?, *freq),
            DiffeoSpec::Quadratic { a } => Diffeo::quadratic(num(a)?),
            DiffeoSpec::Affine { scale, shift } => Diffeo::affine(num(scale)?, num(shift)?),
            DiffeoSpec::Inverse { of } => of.to_diffeo(prec)?.inverse(),
            DiffeoSpec::Compose { parts } => Diffeo::compose(
                parts.iter().map(|p| p.to_diffeo(prec)).collect::<Result<_, _>>()?,
            ),
        };
        d.check_family()?;
        Ok(d)
    }

    pub fn from_diffeo(d: &Diffeo) -> Self {
        use crate::real::to_decimal;
        match d {
            Diffeo::Identity => DiffeoSpec::Identity,
            Diffeo::Sine { eps, freq } => DiffeoSpec::Sine { eps: to_decimal(&eps.hi), freq: *freq },
            Diffeo::Quadratic { a } => DiffeoSpec::Quadratic { a: to_decimal(&a.hi) },
            Diffeo::Affine { scale, shift } => DiffeoSpec::Affine {
                scale: to_decimal(&scale.hi),
                shift: to_decimal(&shift.hi),
            },
            Diffeo::Inverse(g) => DiffeoSpec::Inverse { of: Box::new(DiffeoSpec::from_diffeo(g)) },
            Diffeo::Compose(p) => DiffeoSpec::Compose { parts: p.iter().map(DiffeoSpec::from_diffeo).collect() },
        }
    }
}
