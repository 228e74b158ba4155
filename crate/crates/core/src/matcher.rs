//! Constant-QP size matching.
//!
//! Given a target size and a `qp -> bytes` oracle that is non-increasing in
//! QP, find the QP whose size is closest to the target without falling more
//! than `1 - min_ratio` below it. Ties go to the larger size; among equal
//! sizes the QP adjacent to the target crossing wins (the largest QP for
//! sizes at or above the target, the smallest QP for sizes below it).

use std::collections::BTreeMap;
use std::error::Error as StdError;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schedule::MAX_QP;

pub type ProbeError = Box<dyn StdError + Send + Sync>;

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("invalid match constraint: {0}")]
    Constraint(String),
    #[error("no QP in range reaches {min_ratio} of target {target} bytes (probes: {probes:?})")]
    Infeasible {
        target: u64,
        min_ratio: f64,
        probes: Vec<(i32, u64)>,
    },
    #[error("probe at qp {qp} failed: {source}")]
    Probe {
        qp: i32,
        #[source]
        source: ProbeError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchConstraint {
    pub min_ratio: f64,
    pub qp_min: i32,
    pub qp_max: i32,
}

impl Default for MatchConstraint {
    fn default() -> Self {
        Self {
            min_ratio: 0.95,
            qp_min: 0,
            qp_max: MAX_QP,
        }
    }
}

impl MatchConstraint {
    pub fn qp_range(&self) -> RangeInclusive<i32> {
        self.qp_min..=self.qp_max
    }

    pub fn validate(&self) -> Result<(), MatchError> {
        if !(self.min_ratio > 0.0 && self.min_ratio <= 1.0) {
            return Err(MatchError::Constraint(format!("min_ratio {} outside (0, 1]", self.min_ratio)));
        }
        if self.qp_min > self.qp_max || self.qp_min < 0 || self.qp_max > MAX_QP {
            return Err(MatchError::Constraint(format!(
                "qp range [{}, {}] invalid",
                self.qp_min, self.qp_max
            )));
        }
        Ok(())
    }

    fn floor_bytes(&self, target: u64) -> f64 {
        self.min_ratio * target as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub qp: i32,
    pub size: u64,
    pub ratio: f64,
    /// Every `(qp, size)` probe in call order.
    pub probes: Vec<(i32, u64)>,
    /// True when a monotonicity violation forced a full scan.
    pub exhaustive: bool,
}

/// Upper bound on oracle calls for a monotone oracle over `[0, 51]`.
pub const MAX_PROBES: usize = 9;

struct Prober<F> {
    f: F,
    cache: BTreeMap<i32, u64>,
    log: Vec<(i32, u64)>,
    violation: bool,
}

impl<F: FnMut(i32) -> Result<u64, ProbeError>> Prober<F> {
    fn probe(&mut self, qp: i32) -> Result<u64, MatchError> {
        if let Some(&s) = self.cache.get(&qp) {
            return Ok(s);
        }
        let size = (self.f)(qp).map_err(|source| MatchError::Probe { qp, source })?;
        let below_ok = self.cache.range(..qp).all(|(_, &s)| s >= size);
        let above_ok = self.cache.range(qp + 1..).all(|(_, &s)| s <= size);
        if !(below_ok && above_ok) && !self.violation {
            log::warn!("size oracle is not monotone in QP near qp {qp}; falling back to exhaustive scan");
            self.violation = true;
        }
        self.cache.insert(qp, size);
        self.log.push((qp, size));
        Ok(size)
    }
}

/// Selection rule shared by the fast path and the exhaustive scan.
/// Returns the best QP among `sizes`, or `None` when nothing is feasible.
pub fn best_candidate(sizes: &[(i32, u64)], target: u64, c: &MatchConstraint) -> Option<(i32, u64)> {
    let floor = c.floor_bytes(target);
    let key = |&(qp, s): &(i32, u64)| {
        let dist = s.abs_diff(target);
        // smaller distance, then larger size, then closer to the crossing
        let tie = if s >= target { -(qp as i64) } else { qp as i64 };
        (dist, std::cmp::Reverse(s), tie)
    };
    sizes
        .iter()
        .filter(|&&(_, s)| s as f64 >= floor)
        .min_by_key(|p| key(p))
        .copied()
}

/// Bracketed binary search on a monotone size curve, with exhaustive
/// fallback when the oracle turns out to be non-monotone.
pub fn match_constant_qp<F>(target: u64, encode_fn: F, c: &MatchConstraint) -> Result<MatchResult, MatchError>
where
    F: FnMut(i32) -> Result<u64, ProbeError>,
{
    c.validate()?;
    if target == 0 {
        return Err(MatchError::Constraint("target size must be positive".into()));
    }
    let mut p = Prober {
        f: encode_fn,
        cache: BTreeMap::new(),
        log: Vec::new(),
        violation: false,
    };
    let floor = c.floor_bytes(target);

    let chosen = 'search: {
        let s_min = p.probe(c.qp_min)?;
        if (s_min as f64) < floor {
            break 'search None;
        }
        if s_min < target {
            break 'search Some((c.qp_min, s_min));
        }
        let s_max = p.probe(c.qp_max)?;
        if s_max >= target {
            break 'search Some((c.qp_max, s_max));
        }
        // invariant: size(lo) >= target > size(hi)
        let (mut lo, mut hi) = (c.qp_min, c.qp_max);
        while hi - lo > 1 && !p.violation {
            let mid = lo + (hi - lo) / 2;
            if p.probe(mid)? >= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let pair = [(lo, p.cache[&lo]), (hi, p.cache[&hi])];
        best_candidate(&pair, target, c)
    };

    let (chosen, exhaustive) = if p.violation {
        for qp in c.qp_range() {
            p.probe(qp)?;
        }
        let all: Vec<(i32, u64)> = p.cache.iter().map(|(&q, &s)| (q, s)).collect();
        (best_candidate(&all, target, c), true)
    } else {
        (chosen, false)
    };

    match chosen {
        Some((qp, size)) => Ok(MatchResult {
            qp,
            size,
            ratio: size as f64 / target as f64,
            probes: p.log,
            exhaustive,
        }),
        None => Err(MatchError::Infeasible {
            target,
            min_ratio: c.min_ratio,
            probes: p.log,
        }),
    }
}
