//! C² distances between GIETs and to the subspace of standard IETs.

use crate::diffeo::Diffeo;
use crate::giet::Giet;
use rug::Float;

const GRID0: usize = 1 << 10;
const GRID_MAX: usize = 1 << 16;
const REL_STOP: f64 = 1e-6;

/// Grid estimate of ‖p − q‖_{C²} on [0,1]: the sup of |Δ|, |Δ'|, |Δ''|.
/// The grid starts at 2¹⁰ cells and doubles (new points only) until two
/// successive estimates agree to 1e-6 relative.
pub fn c2_norm_diff(p: &Diffeo, q: &Diffeo) -> f64 {
    if p == q {
        return 0.0;
    }
    let at = |s: f64| {
        let a = p.jet(&s, 3);
        let b = q.jet(&s, 3);
        (a.v - b.v).abs().max((a.d1 - b.d1).abs()).max((a.d2 - b.d2).abs())
    };
    let mut n = GRID0;
    let mut sup = (0..=n).map(|i| at(i as f64 / n as f64)).fold(0.0, f64::max);
    while n < GRID_MAX {
        n *= 2;
        let finer = (1..n).step_by(2).map(|i| at(i as f64 / n as f64)).fold(sup, f64::max);
        let done = finer - sup <= REL_STOP * finer;
        sup = finer;
        if done {
            break;
        }
    }
    sup
}

fn max_abs_diff(a: impl Iterator<Item = Float>) -> f64 {
    a.map(|x| x.abs().to_f64()).fold(0.0, f64::max)
}

/// max_j|λ₁ʲ−λ₂ʲ| + max_j|ρ₁ʲ−ρ₂ʲ| + max_j‖φ₁ʲ−φ₂ʲ‖_{C²}; +∞ when the
/// combinatorics differ.
pub fn c2_distance(t1: &Giet, t2: &Giet) -> f64 {
    if t1.combinatorics() != t2.combinatorics() {
        return f64::INFINITY;
    }
    let d = t1.d();
    let lam = max_abs_diff((0..d).map(|j| Float::with_val(t1.precision(), t1.lambda(j) - t2.lambda(j))));
    let rho = max_abs_diff((0..d).map(|j| Float::with_val(t1.precision(), t1.rho(j) - t2.rho(j))));
    let prof = (0..d).map(|j| c2_norm_diff(t1.profile(j), t2.profile(j))).fold(0.0, f64::max);
    lam + rho + prof
}

/// Distance to the nearest standard IET: the λ-term vanishes for λ' = λ_T,
/// leaving max_j|ρ_j − 1| + max_j‖φ_j − Id‖_{C²}.
pub fn c2_distance_to_iets(t: &Giet) -> f64 {
    let d = t.d();
    let rho = max_abs_diff((0..d).map(|j| Float::with_val(t.precision(), t.rho(j) - 1u32)));
    let prof = (0..d)
        .map(|j| c2_norm_diff(t.profile(j), &Diffeo::Identity))
        .fold(0.0, f64::max);
    rho + prof
}
