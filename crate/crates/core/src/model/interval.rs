use serde::{Deserialize, Serialize};

/// Closed probability interval `[lo, hi]` attached to an existing transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub const fn point(p: f64) -> Self {
        Interval { lo: p, hi: p }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, p: f64, tol: f64) -> bool {
        p >= self.lo - tol && p <= self.hi + tol
    }

    /// Lower bounds must be strictly positive: an absent transition is
    /// encoded by absence, never by a zero lower bound.
    pub fn is_well_formed(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && 0.0 < self.lo && self.lo <= self.hi && self.hi <= 1.0
    }

    pub fn scale(&self, w: f64) -> Interval {
        Interval::new(self.lo * w, self.hi * w)
    }
}

impl std::ops::Add for Interval {
    type Output = Interval;

    fn add(self, rhs: Interval) -> Interval {
        Interval::new(self.lo + rhs.lo, self.hi + rhs.hi)
    }
}

impl std::ops::AddAssign for Interval {
    fn add_assign(&mut self, rhs: Interval) {
        self.lo += rhs.lo;
        self.hi += rhs.hi;
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// A transition weight: either an uncertainty interval or an exact probability.
pub trait Weight: Copy + std::fmt::Debug + PartialEq {
    fn lower(&self) -> f64;
    fn upper(&self) -> f64;
    fn certain(p: f64) -> Self;

    fn as_interval(&self) -> Interval {
        Interval::new(self.lower(), self.upper())
    }
}

impl Weight for Interval {
    fn lower(&self) -> f64 {
        self.lo
    }
    fn upper(&self) -> f64 {
        self.hi
    }
    fn certain(p: f64) -> Self {
        Interval::point(p)
    }
}

impl Weight for f64 {
    fn lower(&self) -> f64 {
        *self
    }
    fn upper(&self) -> f64 {
        *self
    }
    fn certain(p: f64) -> Self {
        p
    }
}
