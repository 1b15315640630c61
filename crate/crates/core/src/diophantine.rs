//! Empirical probe of typical positive growth: positivity of the accelerated
//! matrices, subexponential growth of their norms and exponential growth of
//! the products.

use crate::giet::StandardIet;
use crate::induction::{Acceleration, InductionChain, InductionConfig};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiophantineError {
    #[error("a fit needs at least 3 points, got {0}")]
    TooShort(usize),
    #[error("degenerate series: abscissae have zero variance or values are not finite")]
    DegenerateSeries,
}

/// Ordinary least squares line with coefficient of determination.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub slope: f64,
    pub intercept: f64,
    /// 1 for a series with zero variance, which the line fits exactly.
    pub r2: f64,
}

/// OLS fit of `ys` against k = 0, 1, ….
pub fn growth_fit(ys: &[f64]) -> Result<GrowthFit, DiophantineError> {
    let xs: Vec<f64> = (0..ys.len()).map(|k| k as f64).collect();
    growth_fit_xy(&xs, ys)
}

pub fn growth_fit_xy(xs: &[f64], ys: &[f64]) -> Result<GrowthFit, DiophantineError> {
    let n = xs.len().min(ys.len());
    if n < 3 {
        return Err(DiophantineError::TooShort(n));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(DiophantineError::DegenerateSeries);
    }
    let nf = n as f64;
    let mx = xs[..n].iter().sum::<f64>() / nf;
    let my = ys[..n].iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (dx, dy) = (xs[i] - mx, ys[i] - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(DiophantineError::DegenerateSeries);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(GrowthFit { slope, intercept, r2 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TpgReport {
    /// Number of accelerated steps requested.
    pub steps_requested: usize,
    /// Number of steps completed before a failure, if any.
    pub steps_probed: usize,
    /// Why the probe stopped early.
    pub truncated: Option<String>,
    pub all_positive: bool,
    pub first_non_positive: Option<usize>,
    /// ‖A_k‖ and ‖Q(0,k+1)‖ as decimal integers, k = 0..steps_probed.
    pub norms: Vec<String>,
    pub product_norms: Vec<String>,
    /// (S): log‖A_k‖ against k.
    pub subexp_fit: Option<GrowthFit>,
    /// (E): log‖Q(0,k)‖ against k; ρ̂ = exp(slope).
    pub product_fit: Option<GrowthFit>,
    pub rho_hat: Option<f64>,
    /// Envelope constants: K_lo ρ̂^k ≤ ‖Q(0,k)‖ ≤ K_hi ρ̂^k on the data.
    pub k_lower: Option<f64>,
    pub k_upper: Option<f64>,
    /// slope of (S) ≤ 0.1·log ρ̂.
    pub subexponential: bool,
    pub exponential: bool,
    /// ‖Q(0,k+1)‖ ≤ Π_{i≤k} ‖A_i‖ at every k, checked over the integers.
    pub submultiplicative: bool,
}

impl TpgReport {
    /// CSV `k,norm_a,norm_q`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,norm_a,norm_q\n");
        for (k, (a, q)) in self.norms.iter().zip(&self.product_norms).enumerate() {
            let _ = writeln!(s, "{k},{a},{q}");
        }
        s
    }
}

fn ln_integer(x: &rug::Integer) -> f64 {
    // exact enough for fits: mantissa and exponent from the integer
    let (m, e) = x.to_f64_exp();
    m.ln() + e as f64 * std::f64::consts::LN_2
}

/// Run `k` positive-acceleration steps on `t0` and fit growth rates.
pub fn tpg_probe(t0: &StandardIet, k: usize, cfg: &InductionConfig) -> TpgReport {
    let mut chain = InductionChain::with_config(t0.giet().clone(), Acceleration::Positive, cfg.clone());
    let mut truncated = None;
    for step in 1..=k {
        if let Err(e) = chain.extend_to(step) {
            truncated = Some(e.to_string());
            break;
        }
    }
    let n = chain.len();
    let mut norms = Vec::with_capacity(n);
    let mut product_norms = Vec::with_capacity(n);
    let mut first_non_positive = None;
    let mut submultiplicative = true;
    let mut running = rug::Integer::from(1);
    for i in 0..n {
        let a = chain.matrix(i);
        if first_non_positive.is_none() && !a.is_positive() {
            first_non_positive = Some(i);
        }
        let na = a.norm();
        running *= &na;
        let q = chain.cocycle(0, i + 1).expect("within chain").norm();
        if q > running {
            submultiplicative = false;
        }
        norms.push(na);
        product_norms.push(q);
    }
    let la: Vec<f64> = norms.iter().map(ln_integer).collect();
    let lq: Vec<f64> = product_norms.iter().map(ln_integer).collect();
    let xs: Vec<f64> = (1..=n).map(|i| i as f64).collect();
    let subexp_fit = growth_fit(&la).ok();
    let product_fit = growth_fit_xy(&xs, &lq).ok();
    let rho_hat = product_fit.map(|f| f.slope.exp());
    let (k_lower, k_upper) = match product_fit {
        Some(f) => {
            let resid: Vec<f64> = xs.iter().zip(&lq).map(|(x, y)| y - f.slope * x).collect();
            let lo = resid.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = resid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (Some(lo.exp()), Some(hi.exp()))
        }
        None => (None, None),
    };
    let exponential = rho_hat.is_some_and(|r| r > 1.0);
    let subexponential = match (subexp_fit, rho_hat) {
        (Some(s), Some(r)) if r > 1.0 => s.slope <= 0.1 * r.ln(),
        _ => false,
    };
    TpgReport {
        steps_requested: k,
        steps_probed: n,
        truncated,
        all_positive: first_non_positive.is_none() && n > 0,
        first_non_positive,
        norms: norms.iter().map(|x| x.to_string()).collect(),
        product_norms: product_norms.iter().map(|x| x.to_string()).collect(),
        subexp_fit,
        product_fit,
        rho_hat,
        k_lower,
        k_upper,
        subexponential,
        exponential,
        submultiplicative,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::Combinatorics;
    use crate::real::{parse_decimal, random_unit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rug::{Float, Integer};

    const P: u32 = 256;

    #[test]
    fn fits_on_trivial_series() {
        let c = growth_fit(&[2.5; 6]).unwrap();
        assert_eq!((c.slope, c.r2), (0.0, 1.0));
        let a = growth_fit(&[1.0, 4.0, 7.0, 10.0, 13.0]).unwrap();
        assert!((a.slope - 3.0).abs() < 1e-12 && (a.intercept - 1.0).abs() < 1e-12);
        assert!((a.r2 - 1.0).abs() < 1e-12);
        assert_eq!(growth_fit(&[1.0, 2.0]), Err(DiophantineError::TooShort(2)));
        assert_eq!(growth_fit_xy(&[1.0; 4], &[1.0, 2.0, 3.0, 4.0]), Err(DiophantineError::DegenerateSeries));
    }

    // Binet: log F_n − n log φ → −log √5, so the fitted slope tends to log φ.
    #[test]
    fn log_fibonacci_slope() {
        let mut fib = vec![Integer::from(1), Integer::from(1)];
        for i in 2..400 {
            let n = Integer::from(&fib[i - 1] + &fib[i - 2]);
            fib.push(n);
        }
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        let mut last = f64::INFINITY;
        for len in [20, 80, 320] {
            let ys: Vec<f64> = fib[..len].iter().map(ln_integer).collect();
            let err = (growth_fit(&ys).unwrap().slope - golden.ln()).abs();
            assert!(err < last);
            last = err;
        }
        assert!(last < 1e-4);
    }

    // Golden positive blocks are [[2,1],[1,1]] (or its transpose), whose
    // k-th power has entry sum F_{2k+3}.
    #[test]
    fn golden_probe_matches_fibonacci_norms() {
        let r = tpg_probe(&StandardIet::golden(P), 15, &InductionConfig::default());
        assert_eq!(r.steps_probed, 15);
        assert!(r.all_positive && r.truncated.is_none() && r.submultiplicative);
        assert!(r.norms.iter().all(|n| n == "5"));
        let mut fib = vec![Integer::from(0), Integer::from(1)];
        for i in 2..40 {
            let n = Integer::from(&fib[i - 1] + &fib[i - 2]);
            fib.push(n);
        }
        for (k, q) in r.product_norms.iter().enumerate() {
            assert_eq!(*q, fib[2 * (k + 1) + 3].to_string());
        }
        let phi2 = ((1.0 + 5f64.sqrt()) / 2.0).powi(2);
        assert!((r.rho_hat.unwrap() - phi2).abs() < 1e-3);
        assert!(r.subexp_fit.unwrap().slope.abs() < 1e-12);
        assert!(r.subexponential && r.exponential);
        assert_eq!(r.to_csv().lines().count(), 16);
    }

    #[test]
    fn rational_input_is_truncated() {
        let half = parse_decimal(P, "0.25").unwrap();
        let t = StandardIet::new(Combinatorics::rotation(), vec![Float::with_val(P, 1u32) - &half, half], P).unwrap();
        let r = tpg_probe(&t, 10, &InductionConfig::default());
        assert!(r.truncated.unwrap().contains("numerical connection"));
        assert!(r.steps_probed < 10);
    }

    #[test]
    fn random_reversals_grow() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw: Vec<Float> = (0..4).map(|_| random_unit(P, || rng.gen()) + 0.01f64).collect();
            let s = Float::with_val(P, Float::sum(raw.iter()));
            let t = StandardIet::new(Combinatorics::reversal(4), raw.into_iter().map(|x| x / &s).collect(), P).unwrap();
            let r = tpg_probe(&t, 12, &InductionConfig::default());
            assert_eq!(r.steps_probed, 12, "seed {seed}");
            assert!(r.all_positive && r.submultiplicative);
            assert!(r.rho_hat.unwrap() > 1.0);
        }
    }
}
