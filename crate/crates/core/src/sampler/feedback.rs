//! Sampling biased by error-table feedback.
//!
//! Discrete dims follow one of the resolved frequent combinations, picked
//! uniformly. Each ordered dim gets a sampling window centred on the
//! counterexample centroid whose width is proportional to the dim's
//! |loading| relative to the top-ranked dim, never narrower than 20% of the
//! range (±10%). The top-ranked dim therefore spans its full range.

use rand::seq::IteratorRandom;
use rand::Rng;

use super::{sample_uniform, SamplerError};
use crate::errortable::FeedbackSpec;
use crate::modspace::{Modification, SpaceLayout, CONTINUOUS_NAMES, DISCRETE_NAMES, NUM_CONTINUOUS};

/// Half-width of the window for the lowest-priority dims, as a fraction of the range.
pub const MIN_HALF_WINDOW: f64 = 0.10;

/// Checks that every referenced dim and id exists in `layout`.
pub fn check_feedback(layout: &SpaceLayout, fb: &FeedbackSpec) -> Result<(), SamplerError> {
    if fb.is_degenerate() {
        return Err(SamplerError::DegenerateFeedback);
    }
    for l in &fb.ordered_priority {
        if !CONTINUOUS_NAMES.contains(&l.column.as_str()) {
            return Err(SamplerError::UnknownFeedback(l.column.clone()));
        }
    }
    for name in fb.ordered_centroid.keys() {
        if !CONTINUOUS_NAMES.contains(&name.as_str()) {
            return Err(SamplerError::UnknownFeedback(name.clone()));
        }
    }
    for combo in &fb.unordered_combos {
        for (dim, ids) in &combo.constraints {
            let d = DISCRETE_NAMES
                .iter()
                .position(|n| n == dim)
                .ok_or_else(|| SamplerError::UnknownFeedback(dim.clone()))?;
            for id in ids {
                match id {
                    Some(v) if *v >= layout.cardinality(d) => {
                        return Err(SamplerError::UnknownFeedback(format!("{dim}={v}")))
                    }
                    None if !SpaceLayout::allows_absent(d) => {
                        return Err(SamplerError::UnknownFeedback(format!("{dim}=none")))
                    }
                    _ => {}
                }
            }
        }
    }
    Ok(())
}

/// Sampling window `[lo, hi]` for continuous dim `d`.
pub fn window(layout: &SpaceLayout, fb: &FeedbackSpec, d: usize) -> (f64, f64) {
    let r = layout.range(d);
    if fb.ordered_priority.is_empty() {
        return (r.min, r.max);
    }
    let top = fb.ordered_priority[0].loading.abs();
    let name = CONTINUOUS_NAMES[d];
    let share = fb
        .ordered_priority
        .iter()
        .find(|l| l.column == name)
        .map_or(0.0, |l| if top > 0.0 { l.loading.abs() / top } else { 1.0 });
    let span = r.width() * share.max(2.0 * MIN_HALF_WINDOW).min(1.0);
    let centre = fb
        .ordered_centroid
        .get(name)
        .copied()
        .unwrap_or_else(|| r.midpoint());
    let lo = (centre - span / 2.0).clamp(r.min, r.max - span);
    (lo, lo + span)
}

pub fn sample_feedback<R: Rng + ?Sized>(
    layout: &SpaceLayout,
    fb: &FeedbackSpec,
    rng: &mut R,
) -> Result<Modification, SamplerError> {
    check_feedback(layout, fb)?;
    let mut m = sample_uniform(layout, rng);
    if let Some(combo) = fb.unordered_combos.iter().choose(rng) {
        for (dim, ids) in &combo.constraints {
            let d = DISCRETE_NAMES
                .iter()
                .position(|n| n == dim)
                .expect("checked above");
            m.discrete[d] = *ids.iter().choose(rng).expect("resolved combos are nonempty");
        }
    }
    for d in 0..NUM_CONTINUOUS {
        let (lo, hi) = window(layout, fb, d);
        m.continuous[d] = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    }
    Ok(m)
}
