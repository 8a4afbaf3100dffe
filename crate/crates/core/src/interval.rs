//! Time intervals and the interval arithmetic shared by the rest of the crate.
//!
//! Times are `f64` seconds in memory. Every file format carries integer
//! milliseconds; use [`secs_to_ms`] and [`ms_to_secs`] at the boundary.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Default split between short and long actions, in seconds.
pub const DEFAULT_DURATION_THRESHOLD: f64 = 15.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IntervalError {
    #[error("invalid interval [{start}, {end}]")]
    Invalid { start: f64, end: f64 },
}

/// A closed `[start, end]` interval in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeInterval {
    start: f64,
    end: f64,
}

impl TimeInterval {
    /// Builds an interval, rejecting negative, non-finite or reversed bounds.
    pub fn new(start: f64, end: f64) -> Result<Self, IntervalError> {
        if !start.is_finite() || !end.is_finite() || start < 0.0 || start > end {
            return Err(IntervalError::Invalid { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn from_ms(start_ms: u64, end_ms: u64) -> Result<Self, IntervalError> {
        Self::new(ms_to_secs(start_ms), ms_to_secs(end_ms))
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn start_ms(&self) -> u64 {
        secs_to_ms(self.start)
    }

    pub fn end_ms(&self) -> u64 {
        secs_to_ms(self.end)
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn intersection_len(&self, other: &TimeInterval) -> f64 {
        (self.end.min(other.end) - self.start.max(other.start)).max(0.0)
    }

    pub fn union_len(&self, other: &TimeInterval) -> f64 {
        self.duration() + other.duration() - self.intersection_len(other)
    }

    /// Smallest interval covering both.
    pub fn hull(&self, other: &TimeInterval) -> TimeInterval {
        TimeInterval {
            start: self.start.min(other.start),
            end: self.end.max(other.end),
        }
    }

    pub fn contains(&self, other: &TimeInterval) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    /// Clamps both endpoints into `[lo, hi]`.
    pub fn clamp(&self, lo: f64, hi: f64) -> TimeInterval {
        let start = self.start.clamp(lo, hi);
        let end = self.end.clamp(start, hi.max(start));
        TimeInterval { start, end }
    }

    /// Fraction of `self` covered by `other`; 0 for zero-length `self`
    /// unless `other` contains it.
    pub fn coverage_by(&self, other: &TimeInterval) -> f64 {
        let d = self.duration();
        if d == 0.0 {
            return if other.contains(self) { 1.0 } else { 0.0 };
        }
        self.intersection_len(other) / d
    }
}

impl fmt::Display for TimeInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:.3}, {:.3}]", self.start, self.end)
    }
}

/// Intersection over union of two intervals.
///
/// Two identical zero-length intervals have IoU 1; any other pair whose
/// union has zero length has IoU 0.
pub fn iou(a: &TimeInterval, b: &TimeInterval) -> f64 {
    let union = a.union_len(b);
    if union <= 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    (a.intersection_len(b) / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DurationClass {
    Short,
    Long,
}

impl fmt::Display for DurationClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DurationClass::Short => f.write_str("short"),
            DurationClass::Long => f.write_str("long"),
        }
    }
}

/// Short iff the duration does not exceed `threshold`.
pub fn classify_duration(interval: &TimeInterval, threshold: f64) -> DurationClass {
    debug_assert!(threshold > 0.0);
    if interval.duration() <= threshold {
        DurationClass::Short
    } else {
        DurationClass::Long
    }
}

pub fn secs_to_ms(secs: f64) -> u64 {
    (secs * 1000.0).round().max(0.0) as u64
}

pub fn ms_to_secs(ms: u64) -> f64 {
    ms as f64 / 1000.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iv(a: f64, b: f64) -> TimeInterval {
        TimeInterval::new(a, b).unwrap()
    }

    /// Counts shared 1 ms ticks; endpoints must lie on the millisecond grid.
    fn tick_iou(a: (u64, u64), b: (u64, u64)) -> f64 {
        let (mut inter, mut union) = (0u64, 0u64);
        let hi = a.1.max(b.1);
        for t in a.0.min(b.0)..hi {
            let in_a = t >= a.0 && t < a.1;
            let in_b = t >= b.0 && t < b.1;
            if in_a && in_b {
                inter += 1;
            }
            if in_a || in_b {
                union += 1;
            }
        }
        if union == 0 {
            return if a == b { 1.0 } else { 0.0 };
        }
        inter as f64 / union as f64
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&iv(5.0, 15.0), &iv(5.0, 15.0)), 1.0);
        assert_eq!(iou(&iv(0.0, 10.0), &iv(20.0, 30.0)), 0.0);
        let expected = tick_iou((0, 10_000), (5_000, 15_000));
        assert!((expected - 5000.0 / 15000.0).abs() < 1e-15);
        assert!((iou(&iv(0.0, 10.0), &iv(5.0, 15.0)) - expected).abs() < 1e-12);
    }

    #[test]
    fn degenerate_unions() {
        assert_eq!(iou(&iv(3.0, 3.0), &iv(3.0, 3.0)), 1.0);
        assert_eq!(iou(&iv(3.0, 3.0), &iv(4.0, 4.0)), 0.0);
        assert_eq!(iou(&iv(3.0, 3.0), &iv(2.0, 5.0)), 0.0);
    }

    #[test]
    fn rejects_bad_intervals() {
        assert!(TimeInterval::new(2.0, 1.0).is_err());
        assert!(TimeInterval::new(-1.0, 1.0).is_err());
        assert!(TimeInterval::new(0.0, f64::NAN).is_err());
    }

    #[test]
    fn duration_classes() {
        assert_eq!(classify_duration(&iv(0.0, 15.0), 15.0), DurationClass::Short);
        assert_eq!(classify_duration(&iv(0.0, 15.001), 15.0), DurationClass::Long);
        assert_eq!(classify_duration(&iv(3.0, 10.0), 15.0), DurationClass::Short);
    }

    #[test]
    fn ms_round_trip() {
        let i = TimeInterval::from_ms(1500, 2250).unwrap();
        assert_eq!((i.start(), i.end()), (1.5, 2.25));
        assert_eq!((i.start_ms(), i.end_ms()), (1500, 2250));
    }

    fn interval_ms() -> impl Strategy<Value = (u64, u64)> {
        (0u64..20_000, 0u64..20_000).prop_map(|(a, b)| (a.min(b), a.max(b)))
    }

    proptest! {
        #[test]
        fn symmetric(a in interval_ms(), b in interval_ms()) {
            let (a, b) = (TimeInterval::from_ms(a.0, a.1).unwrap(), TimeInterval::from_ms(b.0, b.1).unwrap());
            prop_assert_eq!(iou(&a, &b), iou(&b, &a));
        }

        #[test]
        fn self_iou_is_one(a in interval_ms()) {
            let a = TimeInterval::from_ms(a.0, a.1).unwrap();
            prop_assert_eq!(iou(&a, &a), 1.0);
        }

        #[test]
        fn shrinking_never_raises_iou(a in interval_ms(), f1 in 0.0f64..1.0, f2 in 0.0f64..1.0, g1 in 0.0f64..1.0, g2 in 0.0f64..1.0) {
            let a = TimeInterval::from_ms(a.0, a.1).unwrap();
            let d = a.duration();
            let b = TimeInterval::new(a.start() + f1 * d / 2.0, a.end() - f2 * d / 2.0).unwrap();
            let db = b.duration();
            let c = TimeInterval::new(b.start() + g1 * db / 2.0, b.end() - g2 * db / 2.0).unwrap();
            prop_assert!(iou(&a, &c) <= iou(&a, &b) + 1e-12);
        }
    }
}
