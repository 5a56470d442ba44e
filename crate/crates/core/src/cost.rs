//! Extended non-negative costs.
//!
//! Values are finite non-negative reals or positive infinity. NaN and negative
//! values are rejected at construction, so ordering is total and `Ord` is safe.

use std::fmt;
use std::ops::{Add, AddAssign};

#[derive(Clone, Copy, PartialEq)]
#[repr(transparent)]
pub struct Cost(f64);

impl Cost {
    pub const ZERO: Cost = Cost(0.0);
    pub const INF: Cost = Cost(f64::INFINITY);

    /// Panics on NaN or negative input; use `try_new` where the value comes
    /// from external data.
    pub fn new(v: f64) -> Cost {
        Cost::try_new(v).expect("cost must be non-negative and not NaN")
    }

    pub fn try_new(v: f64) -> Result<Cost, InvalidCost> {
        if v.is_nan() || v < 0.0 {
            Err(InvalidCost(v))
        } else {
            Ok(Cost(v))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    pub fn min(self, other: Cost) -> Cost {
        if other.0 < self.0 {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: Cost) -> Cost {
        if other.0 > self.0 {
            other
        } else {
            self
        }
    }

    /// Bit-exact encoding used by the binary containers.
    pub fn to_bits(self) -> u64 {
        self.0.to_bits()
    }

    pub fn from_bits(bits: u64) -> Result<Cost, InvalidCost> {
        Cost::try_new(f64::from_bits(bits))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvalidCost(pub f64);

impl fmt::Display for InvalidCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid cost {}: must be non-negative and not NaN", self.0)
    }
}

impl std::error::Error for InvalidCost {}

impl Eq for Cost {}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Cost) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cost {
    fn cmp(&self, other: &Cost) -> std::cmp::Ordering {
        // No NaN by construction.
        self.0.partial_cmp(&other.0).unwrap()
    }
}

impl Add for Cost {
    type Output = Cost;
    fn add(self, rhs: Cost) -> Cost {
        // inf absorbs; finite + finite stays finite and non-negative.
        Cost(self.0 + rhs.0)
    }
}

impl AddAssign for Cost {
    fn add_assign(&mut self, rhs: Cost) {
        self.0 += rhs.0;
    }
}

impl fmt::Debug for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nan_and_negative() {
        assert!(Cost::try_new(f64::NAN).is_err());
        assert!(Cost::try_new(-0.5).is_err());
        assert!(Cost::try_new(0.0).is_ok());
        assert!(Cost::try_new(f64::INFINITY).is_ok());
    }

    #[test]
    fn infinity_absorbs_addition() {
        assert_eq!(Cost::INF + Cost::new(3.0), Cost::INF);
        assert_eq!(Cost::new(3.0) + Cost::INF, Cost::INF);
        assert_eq!(Cost::INF + Cost::INF, Cost::INF);
    }

    #[test]
    fn ordering_is_total() {
        let mut v = vec![Cost::INF, Cost::new(1.5), Cost::ZERO, Cost::new(2.0)];
        v.sort();
        assert_eq!(v, vec![Cost::ZERO, Cost::new(1.5), Cost::new(2.0), Cost::INF]);
        assert!(Cost::new(7.0) < Cost::INF);
    }

    #[test]
    fn bits_round_trip() {
        for c in [Cost::ZERO, Cost::new(0.5), Cost::new(31.78), Cost::INF] {
            assert_eq!(Cost::from_bits(c.to_bits()).unwrap(), c);
        }
    }
}
