//! Dynamical partitions: the Rohlin towers over the level-k inducing
//! intervals, floor addressing, mesh, and the scale of a pair of points.

use crate::giet::{Giet, Side};
use crate::induction::{InductionChain, InductionError};
use crate::real::{to_decimal, tolerance};
use rug::{Float, Integer};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

/// Default cap on the number of floors of one partition.
pub const DEFAULT_FLOOR_CAP: u64 = 200_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TowerError {
    #[error(transparent)]
    Induction(#[from] InductionError),
    #[error("level {level} has {floors} floors, over the budget of {cap}")]
    FloorBudgetExceeded { level: usize, floors: String, cap: u64 },
    #[error("point {x} is within tolerance of a floor endpoint at level {level}")]
    OnBoundary { level: usize, x: f64 },
    #[error("point {x} is outside [0, 1]")]
    OutOfDomain { x: f64 },
    #[error("floors of level {level} do not tile the interval (gap {gap:e})")]
    Inconsistent { level: usize, gap: f64 },
    #[error("no level up to {depth} separates the pair")]
    ScaleNotFound { depth: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FloorAddress {
    pub level: usize,
    /// Label of the tower (0-based).
    pub tower: usize,
    pub height: u64,
}

#[derive(Clone, Debug)]
pub struct Floor {
    pub left: Float,
    pub right: Float,
    pub tower: usize,
    pub height: u64,
}

/// The partition P_k of [0,1] into floors T^m(I_k^j), 0 ≤ m < q_k^j.
#[derive(Clone, Debug)]
pub struct DynamicalPartition {
    level: usize,
    bases: Vec<(Float, Float)>,
    heights: Vec<u64>,
    /// Floors sorted by position.
    floors: Vec<Floor>,
    /// `index[j][m]` is the sorted position of floor m of tower j.
    index: Vec<Vec<usize>>,
    tau: Float,
}

impl DynamicalPartition {
    /// Push the endpoints of each base I_k^j forward under the base map.
    /// Each floor lies in one top interval, picked by its midpoint, and both
    /// endpoints move by that branch so rounding near a cut cannot flip them.
    pub fn build(chain: &InductionChain, k: usize, cap: u64) -> Result<Self, TowerError> {
        let t = chain.base();
        let ind = chain.induced(k);
        let hs = chain.heights(k);
        let total: Integer = hs.iter().sum();
        if total > cap {
            return Err(TowerError::FloorBudgetExceeded { level: k, floors: total.to_string(), cap });
        }
        let heights: Vec<u64> = hs.iter().map(|h| h.to_u64().unwrap()).collect();
        let d = t.d();
        let prec = t.precision();
        let mut floors = Vec::with_capacity(total.to_usize().unwrap());
        let mut bases = Vec::with_capacity(d);
        for j in 0..d {
            let a = ind.top_left(j).clone();
            let b = Float::with_val(prec, &a + ind.lambda(j));
            bases.push((a.clone(), b.clone()));
            let (mut l, mut r) = (a, b);
            for m in 0..heights[j] {
                let mid = Float::with_val(prec, &l + &r) / 2u32;
                let label = t.label_at(&mid, Side::Right);
                let nl = t.apply_branch(label, &l);
                let nr = t.apply_branch(label, &r);
                floors.push(Floor { left: l, right: r, tower: j, height: m });
                l = nl;
                r = nr;
            }
        }
        floors.sort_by(|a, b| a.left.partial_cmp(&b.left).unwrap());
        let mut index: Vec<Vec<usize>> = heights.iter().map(|&h| vec![0; h as usize]).collect();
        for (i, f) in floors.iter().enumerate() {
            index[f.tower][f.height as usize] = i;
        }
        let p = DynamicalPartition { level: k, bases, heights, floors, index, tau: tolerance(prec) };
        p.check_tiling(t)?;
        Ok(p)
    }

    fn check_tiling(&self, t: &Giet) -> Result<(), TowerError> {
        let prec = t.precision();
        let mut prev = Float::new(prec);
        let mut worst = Float::new(prec);
        for f in &self.floors {
            let gap = Float::with_val(prec, &f.left - &prev).abs();
            if gap > worst {
                worst = gap;
            }
            prev = f.right.clone();
        }
        let end = Float::with_val(prec, &prev - t.length()).abs();
        if end > worst {
            worst = end;
        }
        if worst > self.tau {
            return Err(TowerError::Inconsistent { level: self.level, gap: worst.to_f64() });
        }
        Ok(())
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn heights(&self) -> &[u64] {
        &self.heights
    }

    /// Base I_k^j of tower `j`.
    pub fn base(&self, j: usize) -> (&Float, &Float) {
        (&self.bases[j].0, &self.bases[j].1)
    }

    pub fn floors(&self) -> &[Floor] {
        &self.floors
    }

    pub fn floor(&self, a: FloorAddress) -> &Floor {
        &self.floors[self.index[a.tower][a.height as usize]]
    }

    pub fn len(&self) -> usize {
        self.floors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.floors.is_empty()
    }

    /// Sorted position of the floor containing `x` (floors taken half-open).
    pub fn position_of(&self, x: &Float) -> usize {
        self.floors.partition_point(|f| f.left <= *x).saturating_sub(1)
    }

    /// Sorted position of the floor with address `a`.
    pub fn position(&self, a: FloorAddress) -> usize {
        self.index[a.tower][a.height as usize]
    }

    pub fn address_at(&self, pos: usize) -> FloorAddress {
        let f = &self.floors[pos];
        FloorAddress { level: self.level, tower: f.tower, height: f.height }
    }

    /// Floor containing `x`, failing within τ of a floor endpoint.
    pub fn locate(&self, x: &Float) -> Result<FloorAddress, TowerError> {
        if x.is_nan() || *x < 0 || *x > self.floors.last().unwrap().right {
            return Err(TowerError::OutOfDomain { x: x.to_f64() });
        }
        let i = self.position_of(x);
        let f = &self.floors[i];
        let prec = x.prec();
        if Float::with_val(prec, x - &f.left).abs() < self.tau || Float::with_val(prec, &f.right - x).abs() < self.tau {
            return Err(TowerError::OnBoundary { level: self.level, x: x.to_f64() });
        }
        Ok(self.address_at(i))
    }

    /// Largest floor length.
    pub fn mesh(&self) -> Float {
        let prec = self.tau.prec();
        self.floors
            .iter()
            .map(|f| Float::with_val(prec, &f.right - &f.left))
            .max_by(|a, b| a.partial_cmp(b).unwrap())
            .unwrap()
    }

    /// Smallest floor length.
    pub fn min_floor(&self) -> Float {
        let prec = self.tau.prec();
        self.floors
            .iter()
            .map(|f| Float::with_val(prec, &f.right - &f.left))
            .min_by(|a, b| a.partial_cmp(b).unwrap())
            .unwrap()
    }

    /// Number of floor endpoints lying in [x, y]. The last endpoint (right
    /// end of the domain) is included.
    pub fn endpoints_in(&self, x: &Float, y: &Float) -> (usize, Option<Float>) {
        // endpoints e_0 < … < e_N are the lefts plus the final right
        let lo = self.floors.partition_point(|f| f.left < *x);
        let hi = self.floors.partition_point(|f| f.left <= *y);
        let mut count = hi.saturating_sub(lo);
        let mut first = (count > 0).then(|| self.floors[lo].left.clone());
        let last = &self.floors.last().unwrap().right;
        if last >= x && last <= y {
            count += 1;
            first.get_or_insert_with(|| last.clone());
        }
        (count, first)
    }

    /// CSV rows `level,tower,height,left,right` (towers 1-based), sorted by
    /// position, endpoints as decimal strings.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,tower,height,left,right\n");
        for f in &self.floors {
            let _ = writeln!(s, "{},{},{},{},{}", self.level, f.tower + 1, f.height, to_decimal(&f.left), to_decimal(&f.right));
        }
        s
    }
}

/// How [x, y] sits in P_{k0−1}.
#[derive(Clone, Debug, PartialEq)]
pub enum Covering {
    /// Inside one floor (for k0 = 0 the "floor" is the whole interval).
    OneFloor,
    /// Inside two adjacent floors sharing the endpoint `shared`.
    TwoFloors { shared: Float },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scale {
    pub k0: usize,
    pub covering: Covering,
}

/// An induction chain together with its partitions P_0..=P_depth.
#[derive(Clone, Debug)]
pub struct Towers {
    chain: InductionChain,
    partitions: Vec<DynamicalPartition>,
}

impl Towers {
    pub fn build(mut chain: InductionChain, depth: usize, cap: u64) -> Result<Self, TowerError> {
        chain.extend_to(depth)?;
        let partitions = (0..=depth).map(|k| DynamicalPartition::build(&chain, k, cap)).collect::<Result<_, _>>()?;
        Ok(Towers { chain, partitions })
    }

    pub fn chain(&self) -> &InductionChain {
        &self.chain
    }

    pub fn depth(&self) -> usize {
        self.partitions.len() - 1
    }

    pub fn partition(&self, k: usize) -> &DynamicalPartition {
        &self.partitions[k]
    }

    pub fn partitions(&self) -> &[DynamicalPartition] {
        &self.partitions
    }

    /// k(x,y): the least level with a full floor inside [x, y], and how
    /// [x, y] sits in the previous level.
    pub fn scale_of_pair(&self, x: &Float, y: &Float) -> Result<Scale, TowerError> {
        let (x, y) = if x <= y { (x, y) } else { (y, x) };
        for (k, p) in self.partitions.iter().enumerate() {
            if p.endpoints_in(x, y).0 >= 2 {
                let covering = if k == 0 {
                    Covering::OneFloor
                } else {
                    match self.partitions[k - 1].endpoints_in(x, y) {
                        (0, _) => Covering::OneFloor,
                        (_, Some(shared)) => Covering::TwoFloors { shared },
                        _ => unreachable!(),
                    }
                };
                return Ok(Scale { k0: k, covering });
            }
        }
        Err(TowerError::ScaleNotFound { depth: self.depth() })
    }
}
