//! Capacity ergodicity on a finite window of the shift.
//!
//! Atoms are the binary words of length `w`; the shift acts on the window
//! cyclically, so a candidate set is invariant when it is closed under
//! rotation of words. The check quantifies over the encoded measures only.

use std::sync::Arc;

use crate::error::{domain, Result};
use crate::scenario::{DiscreteMeasure, SampleSpace, ScenarioSet};

pub const WINDOW_LIMIT: usize = 20;

fn word(i: usize, w: usize) -> Vec<u8> {
    (0..w).map(|k| ((i >> (w - 1 - k)) & 1) as u8).collect()
}

/// All words of length `w`, atom `i` spelling `i` in binary, first symbol most significant.
pub fn window_space(w: usize) -> Result<Arc<SampleSpace>> {
    if w == 0 || w > WINDOW_LIMIT {
        return domain(format!("window length must be in 1..={WINDOW_LIMIT}"));
    }
    SampleSpace::new(
        (0..1usize << w)
            .map(|i| word(i, w).iter().map(|b| char::from(b'0' + b)).collect())
            .collect(),
    )
}

/// Window marginal of the product measure with `P(0) = p0`.
pub fn bernoulli_window(w: usize, p0: f64) -> Result<DiscreteMeasure> {
    if !(0.0..=1.0).contains(&p0) {
        return domain("P(0) must be a probability");
    }
    let weights = (0..1usize << w)
        .map(|i| {
            let ones = i.count_ones() as i32;
            (1.0 - p0).powi(ones) * p0.powi(w as i32 - ones)
        })
        .collect();
    DiscreteMeasure::new(weights)
}

fn rotate(i: usize, w: usize) -> usize {
    let top = (i >> (w - 1)) & 1;
    ((i << 1) & ((1 << w) - 1)) | top
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateVerdict {
    pub name: String,
    /// `max_P P(A)`.
    pub capacity: f64,
    /// `max_P P(A^c)`.
    pub capacity_complement: f64,
    pub trivial: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityReport {
    pub verdicts: Vec<CandidateVerdict>,
    /// Every candidate has capacity or complement capacity zero.
    pub ergodic_consistent: bool,
}

/// A non-invariant candidate is rejected with a witness word whose rotation
/// leaves the set.
pub fn capacity_ergodicity_check(
    set: &ScenarioSet,
    candidates: &[(String, Vec<bool>)],
) -> Result<CapacityReport> {
    let n = set.space().len();
    if !n.is_power_of_two() {
        return domain("scenario set is not over a window of binary words");
    }
    let w = n.trailing_zeros() as usize;
    let mut verdicts = Vec::new();
    for (name, flags) in candidates {
        if flags.len() != n {
            return domain(format!("candidate `{name}` has {} flags for {n} atoms", flags.len()));
        }
        if let Some(i) = (0..n).find(|&i| flags[i] != flags[rotate(i, w)]) {
            return domain(format!(
                "candidate `{name}` is not shift-invariant: contains {} but not its shift {}",
                if flags[i] { &set.space().atoms()[i] } else { &set.space().atoms()[rotate(i, w)] },
                if flags[i] { &set.space().atoms()[rotate(i, w)] } else { &set.space().atoms()[i] },
            ));
        }
        let cap = |inside: bool| {
            set.measures()
                .iter()
                .map(|m| {
                    m.weights()
                        .iter()
                        .zip(flags)
                        .filter(|(_, f)| **f == inside)
                        .map(|(p, _)| p)
                        .sum::<f64>()
                })
                .fold(0.0, f64::max)
        };
        let (c, cc) = (cap(true), cap(false));
        verdicts.push(CandidateVerdict {
            name: name.clone(),
            capacity: c,
            capacity_complement: cc,
            trivial: c <= 1e-9 || cc <= 1e-9,
        });
    }
    Ok(CapacityReport {
        ergodic_consistent: verdicts.iter().all(|v| v.trivial),
        verdicts,
    })
}
