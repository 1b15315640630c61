//! Nonnegative integer matrices with arbitrary-precision entries.

use rug::{Float, Integer};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

/// A d×d matrix of arbitrary-precision integers, row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct IncidenceMatrix {
    d: usize,
    e: Vec<Integer>,
}

impl fmt::Debug for IncidenceMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.rows()).finish()
    }
}

impl IncidenceMatrix {
    pub fn identity(d: usize) -> Self {
        let mut e = vec![Integer::new(); d * d];
        for i in 0..d {
            e[i * d + i] = Integer::from(1);
        }
        IncidenceMatrix { d, e }
    }

    /// I + e_{row,col}.
    pub fn elementary(d: usize, row: usize, col: usize) -> Self {
        let mut m = Self::identity(d);
        m.e[row * d + col] += 1;
        m
    }

    pub fn from_rows(rows: Vec<Vec<Integer>>) -> Self {
        let d = rows.len();
        assert!(rows.iter().all(|r| r.len() == d), "matrix must be square");
        IncidenceMatrix { d, e: rows.into_iter().flatten().collect() }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize) -> &Integer {
        &self.e[i * self.d + j]
    }

    pub fn rows(&self) -> Vec<Vec<Integer>> {
        self.e.chunks(self.d).map(|r| r.to_vec()).collect()
    }

    /// self · o
    pub fn mul(&self, o: &IncidenceMatrix) -> IncidenceMatrix {
        let d = self.d;
        assert_eq!(d, o.d);
        let mut e = vec![Integer::new(); d * d];
        for i in 0..d {
            for k in 0..d {
                let a = &self.e[i * d + k];
                if *a == 0 {
                    continue;
                }
                for j in 0..d {
                    e[i * d + j] += a * &o.e[k * d + j];
                }
            }
        }
        IncidenceMatrix { d, e }
    }

    /// Entrywise sum ‖A‖ = Σ|A_ij|.
    pub fn norm(&self) -> Integer {
        self.e.iter().map(|x| x.clone().abs()).sum()
    }

    pub fn is_positive(&self) -> bool {
        self.e.iter().all(|x| *x > 0)
    }

    pub fn min_entry(&self) -> Integer {
        self.e.iter().min().cloned().unwrap_or_default()
    }

    /// Row sums, i.e. A · (1,…,1)ᵀ.
    pub fn row_sums(&self) -> Vec<Integer> {
        self.e.chunks(self.d).map(|r| r.iter().sum()).collect()
    }

    pub fn mul_vec(&self, v: &[Integer]) -> Vec<Integer> {
        self.e
            .chunks(self.d)
            .map(|r| r.iter().zip(v).map(|(a, b)| Integer::from(a * b)).sum())
            .collect()
    }

    /// Aᵀ · v for a real vector, at the precision of `v`.
    pub fn transpose_mul(&self, v: &[Float]) -> Vec<Float> {
        let prec = v.first().map_or(53, Float::prec);
        (0..self.d)
            .map(|j| {
                let mut s = Float::new(prec);
                for (i, vi) in v.iter().enumerate() {
                    let a = self.get(i, j);
                    if *a != 0 {
                        s += Float::with_val(prec, vi * a);
                    }
                }
                s
            })
            .collect()
    }

    pub fn rows_decimal(&self) -> Vec<Vec<String>> {
        self.e.chunks(self.d).map(|r| r.iter().map(Integer::to_string).collect()).collect()
    }
}

impl Serialize for IncidenceMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.rows_decimal().serialize(s)
    }
}

impl<'de> Deserialize<'de> for IncidenceMatrix {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let rows: Vec<Vec<String>> = Vec::deserialize(de)?;
        let d = rows.len();
        let mut out = Vec::with_capacity(d);
        for r in rows {
            if r.len() != d {
                return Err(serde::de::Error::custom("matrix must be square"));
            }
            let parsed = r
                .iter()
                .map(|s| s.parse::<Integer>().map_err(serde::de::Error::custom))
                .collect::<Result<Vec<_>, _>>()?;
            out.push(parsed);
        }
        Ok(IncidenceMatrix::from_rows(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[i64]]) -> IncidenceMatrix {
        IncidenceMatrix::from_rows(rows.iter().map(|r| r.iter().map(|&x| Integer::from(x)).collect()).collect())
    }

    #[test]
    fn product_and_norm() {
        let a = m(&[&[1, 1], &[0, 1]]);
        let b = m(&[&[1, 0], &[1, 1]]);
        assert_eq!(a.mul(&b), m(&[&[2, 1], &[1, 1]]));
        assert_eq!(a.mul(&b).norm(), 5);
        assert!(a.mul(&b).is_positive());
        assert!(!a.is_positive());
        assert_eq!(IncidenceMatrix::elementary(3, 2, 0), m(&[&[1, 0, 0], &[0, 1, 0], &[1, 0, 1]]));
        assert_eq!(a.row_sums(), vec![Integer::from(2), Integer::from(1)]);
    }

    #[test]
    fn big_entries_serialize_exactly() {
        let mut p = IncidenceMatrix::identity(2);
        let f = m(&[&[1, 1], &[1, 0]]);
        for _ in 0..200 {
            p = p.mul(&f);
        }
        let json = serde_json::to_string(&p).unwrap();
        let back: IncidenceMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        // F_201 = 453973694165307953197296969697410619233826
        assert_eq!(p.get(0, 0).to_string(), "453973694165307953197296969697410619233826");
    }
}
