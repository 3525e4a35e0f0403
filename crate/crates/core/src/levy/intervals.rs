//! Finite unions of closed intervals, the Smith–Volterra–Cantor family, and
//! exact self-overlap lengths.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::pairwise_sum;

/// Deepest Smith–Volterra–Cantor level that is materialized; deeper requests
/// are capped with a warning.
pub const SVC_MAX_LEVEL: u32 = 20;

/// Sorted, pairwise disjoint closed intervals on the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalUnion {
    intervals: Vec<(f64, f64)>,
}

impl IntervalUnion {
    /// Builds a union from arbitrary closed intervals, merging overlaps.
    pub fn new(mut raw: Vec<(f64, f64)>) -> Result<Self> {
        for &(a, b) in &raw {
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::invalid("interval endpoints must be finite"));
            }
            if b < a {
                return Err(Error::invalid(format!("interval [{a}, {b}] has b < a")));
            }
        }
        raw.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (a, b) in raw {
            match out.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
        Ok(IntervalUnion { intervals: out })
    }

    pub fn single(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![(a, b)])
    }

    pub fn empty() -> Self {
        IntervalUnion { intervals: Vec::new() }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    /// Total Lebesgue measure.
    pub fn length(&self) -> f64 {
        let lens: Vec<f64> = self.intervals.iter().map(|(a, b)| b - a).collect();
        pairwise_sum(&lens)
    }

    pub fn contains(&self, x: f64) -> bool {
        let idx = self.intervals.partition_point(|&(_, b)| b < x);
        idx < self.intervals.len() && self.intervals[idx].0 <= x
    }

    pub fn translated(&self, z: f64) -> Self {
        IntervalUnion {
            intervals: self.intervals.iter().map(|&(a, b)| (a + z, b + z)).collect(),
        }
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        Some((self.intervals.first()?.0, self.intervals.last()?.1))
    }

    /// Intersection with another union by a sorted two-pointer sweep.
    pub fn intersect(&self, other: &IntervalUnion) -> IntervalUnion {
        let (u, v) = (&self.intervals, &other.intervals);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < u.len() && j < v.len() {
            let lo = u[i].0.max(v[j].0);
            let hi = u[i].1.min(v[j].1);
            if lo <= hi {
                out.push((lo, hi));
            }
            if u[i].1 < v[j].1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        IntervalUnion { intervals: out }
    }

    /// Removes the open interval `(lo, hi)`; the result stays closed.
    pub fn remove_open(&self, lo: f64, hi: f64) -> IntervalUnion {
        let mut out = Vec::with_capacity(self.intervals.len() + 1);
        for &(a, b) in &self.intervals {
            if b <= lo || a >= hi {
                out.push((a, b));
                continue;
            }
            if a <= lo {
                out.push((a, lo));
            }
            if b >= hi {
                out.push((hi, b));
            }
        }
        IntervalUnion { intervals: out }
    }

    /// Euclidean distance from a point to the union.
    pub fn distance_to(&self, x: f64) -> f64 {
        self.intervals
            .iter()
            .map(|&(a, b)| {
                if x < a {
                    a - x
                } else if x > b {
                    x - b
                } else {
                    0.0
                }
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Length of `u ∩ (u − z)` by a sorted interval sweep.
pub fn interval_overlap(u: &IntervalUnion, z: f64) -> f64 {
    u.intersect(&u.translated(-z)).length()
}

fn rational(x: f64) -> Result<BigRational> {
    BigRational::from_float(x).ok_or_else(|| Error::invalid(format!("{x} is not a finite number")))
}

/// Smith–Volterra–Cantor construction in exact rational arithmetic.
///
/// At step `k` the middle open interval of length
/// `removed_total * 2 * 4^-k` is removed from each of the `2^(k-1)` current
/// intervals, so the level-`n` union has length
/// `1 - removed_total * (1 - 2^-n)`.
pub fn svc_set_exact(level: u32, removed_total: &BigRational) -> Result<Vec<(BigRational, BigRational)>> {
    if !removed_total.is_positive() || removed_total >= &BigRational::one() {
        return Err(Error::invalid("removed_total must lie in (0, 1)"));
    }
    let level = if level > SVC_MAX_LEVEL {
        log::warn!("SVC level {level} capped at {SVC_MAX_LEVEL}");
        SVC_MAX_LEVEL
    } else {
        level
    };
    let two = BigRational::from_integer(BigInt::from(2));
    let mut current = vec![(BigRational::zero(), BigRational::one())];
    let mut removal = removed_total * &two / BigRational::from_integer(BigInt::from(4));
    for _ in 0..level {
        let mut next = Vec::with_capacity(current.len() * 2);
        for (a, b) in current {
            let mid = (&a + &b) / &two;
            let half = &removal / &two;
            let left_end = &mid - &half;
            let right_start = &mid + &half;
            if left_end <= a {
                return Err(Error::invalid("removal schedule exceeds interval length"));
            }
            next.push((a, left_end));
            next.push((right_start, b));
        }
        current = next;
        removal /= BigRational::from_integer(BigInt::from(4));
    }
    Ok(current)
}

/// Floating-point view of [`svc_set_exact`]. Endpoints are exact whenever
/// `removed_total` is a dyadic rational and the level is moderate.
pub fn svc_set(level: u32, removed_total: f64) -> Result<IntervalUnion> {
    let exact = svc_set_exact(level, &rational(removed_total)?)?;
    let intervals = exact
        .iter()
        .map(|(a, b)| (a.to_f64().unwrap_or(f64::NAN), b.to_f64().unwrap_or(f64::NAN)))
        .collect();
    Ok(IntervalUnion { intervals })
}

/// Closed-form SVC length `1 - removed_total * (1 - 2^-level)`.
pub fn svc_length(level: u32, removed_total: &BigRational) -> BigRational {
    let level = level.min(SVC_MAX_LEVEL);
    let pow = BigRational::from_integer(BigInt::one() << level as usize);
    BigRational::one() - removed_total * (BigRational::one() - pow.recip())
}

/// Exact length of `u ∩ (u − z)` for rational endpoints.
pub fn interval_overlap_exact(u: &[(BigRational, BigRational)], z: &BigRational) -> BigRational {
    let (mut i, mut j) = (0, 0);
    let mut total = BigRational::zero();
    while i < u.len() && j < u.len() {
        let (ref a1, ref b1) = u[i];
        let a2 = &u[j].0 - z;
        let b2 = &u[j].1 - z;
        let lo = if *a1 > a2 { a1.clone() } else { a2.clone() };
        let hi = if *b1 < b2 { b1.clone() } else { b2.clone() };
        if lo < hi {
            total += hi - lo;
        }
        if *b1 < b2 {
            i += 1;
        } else {
            j += 1;
        }
    }
    total
}

pub fn exact_length(u: &[(BigRational, BigRational)]) -> BigRational {
    u.iter().fold(BigRational::zero(), |acc, (a, b)| acc + (b - a))
}
