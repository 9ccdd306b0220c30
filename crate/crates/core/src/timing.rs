//! Per-phase wall-clock accounting for a correction step.

use core::ops::{Add, AddAssign};

/// Seconds spent in each stage of a correction: raycasting and projection
/// (`simulation`), accumulation of cross-statistics (`reduction`) and the
/// closed-form solve (`svd`).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub simulation: f64,
    pub reduction: f64,
    pub svd: f64,
}

impl PhaseTimings {
    pub fn total(&self) -> f64 {
        self.simulation + self.reduction + self.svd
    }

    /// Fractions of the total per phase; all zero when nothing was timed.
    pub fn fractions(&self) -> PhaseTimings {
        let total = self.total();
        if total <= 0.0 {
            return PhaseTimings::default();
        }
        PhaseTimings {
            simulation: self.simulation / total,
            reduction: self.reduction / total,
            svd: self.svd / total,
        }
    }
}

impl Add for PhaseTimings {
    type Output = PhaseTimings;

    fn add(self, rhs: PhaseTimings) -> PhaseTimings {
        PhaseTimings {
            simulation: self.simulation + rhs.simulation,
            reduction: self.reduction + rhs.reduction,
            svd: self.svd + rhs.svd,
        }
    }
}

impl AddAssign for PhaseTimings {
    fn add_assign(&mut self, rhs: PhaseTimings) {
        *self = *self + rhs;
    }
}

/// Monotonic stopwatch. Reads zero without the `std` feature.
pub(crate) struct Stopwatch {
    #[cfg(feature = "std")]
    start: std::time::Instant,
}

impl Stopwatch {
    pub fn start() -> Self {
        Stopwatch {
            #[cfg(feature = "std")]
            start: std::time::Instant::now(),
        }
    }

    pub fn elapsed(&self) -> f64 {
        #[cfg(feature = "std")]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(not(feature = "std"))]
        {
            0.0
        }
    }
}
