//! Axis-aligned boxes, box unions, and planar segments.

use serde::{Deserialize, Serialize};

/// Closed axis-aligned box `[lo, hi]`, any dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperRect {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl HyperRect {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> HyperRect {
        assert_eq!(lo.len(), hi.len(), "box bounds must have equal dimension");
        for i in 0..lo.len() {
            assert!(lo[i] <= hi[i], "box bound lo[{}] > hi[{}]", i, i);
        }
        HyperRect { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .enumerate()
                .all(|(i, &v)| self.lo[i] <= v && v <= self.hi[i])
    }

    /// Closed containment: `other` entirely inside `self` (boundary touching ok).
    pub fn contains_rect(&self, other: &HyperRect) -> bool {
        other.dim() == self.dim()
            && (0..self.dim()).all(|i| self.lo[i] <= other.lo[i] && other.hi[i] <= self.hi[i])
    }

    /// Closed intersection test: boundary touching counts as intersecting.
    pub fn intersects(&self, other: &HyperRect) -> bool {
        other.dim() == self.dim()
            && (0..self.dim()).all(|i| self.lo[i] <= other.hi[i] && other.lo[i] <= self.hi[i])
    }

    pub fn center(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| 0.5 * (self.lo[i] + self.hi[i])).collect()
    }

    pub fn half_widths(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| 0.5 * (self.hi[i] - self.lo[i])).collect()
    }

    pub fn translate(&self, shift: &[f64]) -> HyperRect {
        assert_eq!(shift.len(), self.dim());
        HyperRect {
            lo: self.lo.iter().zip(shift).map(|(a, s)| a + s).collect(),
            hi: self.hi.iter().zip(shift).map(|(a, s)| a + s).collect(),
        }
    }
}

/// Finite union of closed boxes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Region(pub Vec<HyperRect>);

impl Region {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        self.0.iter().any(|r| r.contains_point(x))
    }

    /// True when some single member box contains `rect`. Conservative for
    /// unions: a box straddling two members counts as not covered.
    pub fn covers_rect(&self, rect: &HyperRect) -> bool {
        self.0.iter().any(|r| r.contains_rect(rect))
    }

    pub fn intersects_rect(&self, rect: &HyperRect) -> bool {
        self.0.iter().any(|r| r.intersects(rect))
    }
}

/// Planar line segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment2 {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

impl Segment2 {
    pub fn distance(&self, p: [f64; 2]) -> f64 {
        let dx = self.b[0] - self.a[0];
        let dy = self.b[1] - self.a[1];
        let len2 = dx * dx + dy * dy;
        let t = if len2 == 0.0 {
            0.0
        } else {
            (((p[0] - self.a[0]) * dx + (p[1] - self.a[1]) * dy) / len2).clamp(0.0, 1.0)
        };
        let qx = self.a[0] + t * dx;
        let qy = self.a[1] + t * dy;
        ((p[0] - qx).powi(2) + (p[1] - qy).powi(2)).sqrt()
    }

    /// Max distance from any point of a planar box to this segment. Distance
    /// to a segment is convex, so the max over a box sits at a corner.
    pub fn max_distance_over_box(&self, lo: [f64; 2], hi: [f64; 2]) -> f64 {
        let corners = [
            [lo[0], lo[1]],
            [lo[0], hi[1]],
            [hi[0], lo[1]],
            [hi[0], hi[1]],
        ];
        corners
            .iter()
            .map(|&c| self.distance(c))
            .fold(0.0_f64, f64::max)
    }
}

/// Min over segments of the point distance.
pub fn distance_to_segments(p: [f64; 2], segs: &[Segment2]) -> f64 {
    segs.iter()
        .map(|s| s.distance(p))
        .fold(f64::INFINITY, f64::min)
}

/// Upper bound on `sup_{p in box} min_seg d(p, seg)`: min over segments of the
/// per-segment corner max. Exact when one segment is nearest across the whole
/// box, an over-approximation otherwise, which is the safe direction.
pub fn distance_bound_over_box(lo: [f64; 2], hi: [f64; 2], segs: &[Segment2]) -> f64 {
    segs.iter()
        .map(|s| s.max_distance_over_box(lo, hi))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rect_predicates() {
        let big = HyperRect::new(vec![0.0, 0.0], vec![10.0, 10.0]);
        let small = HyperRect::new(vec![2.0, 2.0], vec![3.0, 3.0]);
        let edge = HyperRect::new(vec![10.0, 4.0], vec![12.0, 5.0]);
        assert!(big.contains_rect(&small));
        assert!(!small.contains_rect(&big));
        assert!(big.intersects(&edge), "boundary touching counts");
        assert!(!big.contains_rect(&edge));
        assert!(big.contains_point(&[10.0, 10.0]));
        assert!(!big.contains_point(&[10.1, 5.0]));
    }

    #[test]
    fn region_cover_is_per_member() {
        let region = Region(vec![
            HyperRect::new(vec![0.0], vec![1.0]),
            HyperRect::new(vec![1.0], vec![2.0]),
        ]);
        // Contained in the union but in no single member.
        let straddle = HyperRect::new(vec![0.5], vec![1.5]);
        assert!(!region.covers_rect(&straddle));
        assert!(region.contains_point(&[1.5]));
        assert!(!region.contains_point(&[2.5]));
    }

    #[test]
    fn segment_distance() {
        let s = Segment2 { a: [12.0, 2.0], b: [62.0, 2.0] };
        assert_relative_eq!(s.distance([12.0, 3.0]), 1.0);
        assert_relative_eq!(s.distance([40.0, 2.0]), 0.0);
        assert_relative_eq!(s.distance([10.0, 2.0]), 2.0); // clamped to endpoint
        assert_relative_eq!(s.distance([65.0, 6.0]), 5.0); // 3-4-5 from (62,2)
    }

    #[test]
    fn distance_bound_dominates_pointwise() {
        let segs = vec![
            Segment2 { a: [0.0, 0.0], b: [10.0, 0.0] },
            Segment2 { a: [5.0, -3.0], b: [5.0, 3.0] },
        ];
        let (lo, hi) = ([2.0, 1.0], [4.0, 2.5]);
        let bound = distance_bound_over_box(lo, hi, &segs);
        for i in 0..=10 {
            for j in 0..=10 {
                let p = [
                    lo[0] + (hi[0] - lo[0]) * i as f64 / 10.0,
                    lo[1] + (hi[1] - lo[1]) * j as f64 / 10.0,
                ];
                assert!(distance_to_segments(p, &segs) <= bound + 1e-12);
            }
        }
    }
}
