//! Normalized information gain: the fraction of the remaining distance to the
//! truth that one round closes, `(d_prev − d_cur) / d_prev`.

/// Below this previous distance the goal counts as reached and the reward is 0.
pub const DISTANCE_GUARD: f64 = 1e-8;

/// Unclipped gain, or `None` when the previous distance is below the guard.
pub fn raw_gain(prev: f64, cur: f64) -> Option<f64> {
    (prev >= DISTANCE_GUARD).then(|| (prev - cur) / prev)
}

/// Reward used by both environments: clipped to `[-1, 1]`, zero past the guard.
pub fn normalized_gain(prev: f64, cur: f64) -> f64 {
    raw_gain(prev, cur).map_or(0.0, |r| r.clamp(-1.0, 1.0))
}
