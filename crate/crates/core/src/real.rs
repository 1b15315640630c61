//! Scalar abstraction over `f64` and MPFR floats.
//!
//! Everything that must be exact to working precision runs on [`rug::Float`];
//! grid-heavy diagnostics (C² norms, quadrature) run the same expression trees
//! on `f64`.

use rug::float::Constant;
use rug::ops::Pow;
use rug::Float;
use std::fmt::Debug;

/// Default working precision in bits.
pub const DEFAULT_PRECISION: u32 = 256;

/// Tolerance τ = 2^(−p/2) for precision `p`.
pub fn tolerance(prec: u32) -> Float {
    Float::with_val(prec, 1) >> (prec / 2)
}

/// Minimal field operations needed to evaluate branch jets.
pub trait Real: Clone + Debug + PartialOrd {
    /// A constant carrying the precision of `self`.
    fn lit(&self, v: f64) -> Self;
    fn coef(&self, c: &Coef) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn ln(&self) -> Self;
    fn abs(&self) -> Self;
    fn sin_cos(&self) -> (Self, Self);
    fn pi(&self) -> Self;
    fn to_f64(&self) -> f64;
    /// Stopping threshold for iterative solvers (a few ulps).
    fn solver_eps(&self) -> f64;

    fn square(&self) -> Self {
        self.mul(self)
    }
    fn mul_f(&self, v: f64) -> Self {
        self.mul(&self.lit(v))
    }
}

/// A coefficient stored at full precision, with a cached `f64` shadow.
#[derive(Clone, Debug, PartialEq)]
pub struct Coef {
    pub hi: Float,
    pub lo: f64,
}

impl Coef {
    pub fn new(hi: Float) -> Self {
        let lo = hi.to_f64();
        Coef { hi, lo }
    }

    pub fn from_f64(prec: u32, v: f64) -> Self {
        Coef::new(Float::with_val(prec, v))
    }
}

impl Real for f64 {
    fn lit(&self, v: f64) -> Self {
        v
    }
    fn coef(&self, c: &Coef) -> Self {
        c.lo
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn sin_cos(&self) -> (Self, Self) {
        f64::sin_cos(*self)
    }
    fn pi(&self) -> Self {
        std::f64::consts::PI
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn solver_eps(&self) -> f64 {
        4.0 * f64::EPSILON
    }
}

impl Real for Float {
    fn lit(&self, v: f64) -> Self {
        Float::with_val(self.prec(), v)
    }
    fn coef(&self, c: &Coef) -> Self {
        Float::with_val(self.prec(), &c.hi)
    }
    fn add(&self, o: &Self) -> Self {
        Float::with_val(self.prec(), self + o)
    }
    fn sub(&self, o: &Self) -> Self {
        Float::with_val(self.prec(), self - o)
    }
    fn mul(&self, o: &Self) -> Self {
        Float::with_val(self.prec(), self * o)
    }
    fn div(&self, o: &Self) -> Self {
        Float::with_val(self.prec(), self / o)
    }
    fn neg(&self) -> Self {
        Float::with_val(self.prec(), -self)
    }
    fn sqrt(&self) -> Self {
        Float::with_val(self.prec(), self.sqrt_ref())
    }
    fn ln(&self) -> Self {
        Float::with_val(self.prec(), self.ln_ref())
    }
    fn abs(&self) -> Self {
        Float::with_val(self.prec(), self.abs_ref())
    }
    fn sin_cos(&self) -> (Self, Self) {
        self.clone().sin_cos(Float::new(self.prec()))
    }
    fn pi(&self) -> Self {
        Float::with_val(self.prec(), Constant::Pi)
    }
    fn to_f64(&self) -> f64 {
        Float::to_f64(self)
    }
    fn solver_eps(&self) -> f64 {
        let e = Float::with_val(64, 2).pow(-(self.prec() as i32) + 3);
        e.to_f64()
    }
}

/// Uniform sample from [0, 1) with every mantissa bit random, drawing
/// 64-bit words from `next`. Lengths sampled in `f64` are rationally
/// dependent at 53 bits and produce spurious connections.
pub fn random_unit(prec: u32, mut next: impl FnMut() -> u64) -> Float {
    let mut x = Float::new(prec);
    let words = prec.div_ceil(64);
    for k in 1..=words {
        x += Float::with_val(prec, next()) >> (64 * k);
    }
    x
}

/// Parse a decimal string at the given precision.
pub fn parse_decimal(prec: u32, s: &str) -> Option<Float> {
    Float::parse(s.trim()).ok().map(|p| Float::with_val(prec, p))
}

/// Decimal rendering that survives a round trip at the value's precision.
pub fn to_decimal(x: &Float) -> String {
    x.to_string_radix(10, None)
}
