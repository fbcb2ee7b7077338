//! Supervised `(K_start, K_end, Δq)` pairs for learning the joint-displacement metric.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sim::Frame;
use crate::types::ImageState;

pub const DEFAULT_MAX_SPAN: usize = 10;
pub const DEFAULT_AUGMENT_FACTOR: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct PairSample<T> {
    pub k_start: ImageState<T>,
    pub k_end: ImageState<T>,
    /// Signed per-joint displacement in radians.
    pub dq: Vec<T>,
    /// Source frame indices `(start, end)` while the oracle dataset is at hand.
    #[serde(skip)]
    pub window: Option<(usize, usize)>,
}

impl<T: Real> PairSample<T> {
    /// Network input: both image states flattened and concatenated.
    pub fn input(&self) -> Vec<T> {
        let mut x = self.k_start.flatten();
        x.extend(self.k_end.flatten());
        x
    }
}

fn check_ordered<T>(frames: &[Frame<T>]) -> Result<()> {
    for (position, w) in frames.windows(2).enumerate() {
        if w[1].frame_index <= w[0].frame_index {
            return Err(Error::Unordered {
                position: position + 1,
            });
        }
    }
    Ok(())
}

fn step_displacement<T: Real>(f: &Frame<T>) -> impl Iterator<Item = T> + '_ {
    f.joint_velocity.iter().map(move |&v| v * f.dt)
}

/// Pair spanning frames `from → to` (either direction); Δq sums the recorded
/// per-step displacements and is negated for backward windows.
pub fn span_pair<T: Real>(frames: &[Frame<T>], from: usize, to: usize) -> PairSample<T> {
    let joints = frames[from].joint_velocity.len();
    let (lo, hi) = (from.min(to), from.max(to));
    let mut dq = vec![T::zero(); joints];
    for f in &frames[lo..hi] {
        for (acc, d) in dq.iter_mut().zip(step_displacement(f)) {
            *acc = *acc + d;
        }
    }
    if from > to {
        dq.iter_mut().for_each(|d| *d = -*d);
    }
    PairSample {
        k_start: frames[from].image_state.clone(),
        k_end: frames[to].image_state.clone(),
        dq,
        window: Some((frames[from].frame_index, frames[to].frame_index)),
    }
}

/// One pair per adjacent frame pair.
pub fn consecutive_pairs<T: Real>(frames: &[Frame<T>]) -> Result<Vec<PairSample<T>>> {
    check_ordered(frames)?;
    Ok((0..frames.len().saturating_sub(1))
        .map(|i| span_pair(frames, i, i + 1))
        .collect())
}

/// `samples` random forward windows of at most `max_span` frames.
pub fn augment_spans<T: Real>(
    frames: &[Frame<T>],
    max_span: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<PairSample<T>>> {
    check_ordered(frames)?;
    if frames.len() < 2 || max_span == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let last = frames.len() - 1;
    Ok((0..samples)
        .map(|_| {
            let i = rng.gen_range(0..last);
            let span = rng.gen_range(1..=max_span);
            span_pair(frames, i, (i + span).min(last))
        })
        .collect())
}

/// Deterministic shuffle-and-cut into `(train, validation)`.
pub fn split<T: Clone>(pairs: &[T], train_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (pairs.len() as f64 * train_fraction).round() as usize;
    let pick = |idx: &[usize]| idx.iter().map(|&i| pairs[i].clone()).collect::<Vec<_>>();
    Ok((pick(&order[..cut]), pick(&order[cut..])))
}
