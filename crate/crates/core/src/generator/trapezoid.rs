//! Placement trapezoid annotated on each background.

use serde::ser::SerializeTuple;
use serde::{Deserialize, Serialize, Serializer};

use super::GeneratorError;

/// Serialized as `[x, y]`; whole-pixel coordinates are written as integers.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(from = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    fn lerp(a: Point, b: Point, t: f64) -> Point {
        Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
    }
}

impl From<[f64; 2]> for Point {
    fn from(a: [f64; 2]) -> Self {
        Point::new(a[0], a[1])
    }
}

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut t = s.serialize_tuple(2)?;
        for v in [self.x, self.y] {
            if v.fract() == 0.0 && v.abs() < 1e15 {
                t.serialize_element(&(v as i64))?;
            } else {
                t.serialize_element(&v)?;
            }
        }
        t.end()
    }
}

/// Valid car-placement region of a background. The near base is the bottom
/// edge (closest to the camera), the far base the top edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trapezoid {
    pub near_left: Point,
    pub near_right: Point,
    pub far_left: Point,
    pub far_right: Point,
    pub scale_near: f64,
    pub scale_far: f64,
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn segments_cross(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

impl Trapezoid {
    /// Returns every violated invariant; empty means valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let corners = [self.near_left, self.near_right, self.far_left, self.far_right];
        if corners.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            out.push("corner coordinates must be finite".to_string());
            return out;
        }
        if !(self.scale_near > 0.0 && self.scale_far > 0.0) {
            out.push("scales must be positive".to_string());
        }
        if self.scale_far >= self.scale_near {
            out.push(format!(
                "scale_far ({}) must be smaller than scale_near ({})",
                self.scale_far, self.scale_near
            ));
        }
        if self.far_left.y.max(self.far_right.y) >= self.near_left.y.min(self.near_right.y) {
            out.push("far edge must lie strictly above the near edge".to_string());
        }
        if self.near_left.x >= self.near_right.x || self.far_left.x >= self.far_right.x {
            out.push("left corners must lie left of right corners".to_string());
        }
        // polygon order NL -> NR -> FR -> FL; opposite edges must not cross
        if segments_cross(self.near_left, self.near_right, self.far_right, self.far_left)
            || segments_cross(self.near_right, self.far_right, self.far_left, self.near_left)
        {
            out.push("quadrilateral is self-intersecting".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<(), GeneratorError> {
        match self.violations().first() {
            None => Ok(()),
            Some(v) => Err(GeneratorError::InvalidTrapezoid(v.clone())),
        }
    }

    /// Bottom-centre anchor and sprite scale for unit coordinates
    /// `(u_x, u_z)`; `u_z = 0` is the near base.
    pub fn place(&self, u_x: f64, u_z: f64) -> (Point, f64) {
        let near = Point::lerp(self.near_left, self.near_right, u_x);
        let far = Point::lerp(self.far_left, self.far_right, u_x);
        let anchor = Point::new(
            (1.0 - u_z) * near.x + u_z * far.x,
            (1.0 - u_z) * near.y + u_z * far.y,
        );
        let scale = (1.0 - u_z) * self.scale_near + u_z * self.scale_far;
        (anchor, scale)
    }

    pub fn corners(&self) -> [Point; 4] {
        [self.near_left, self.near_right, self.far_left, self.far_right]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn sample() -> Trapezoid {
        Trapezoid {
            near_left: Point::new(10.0, 200.0),
            near_right: Point::new(300.0, 210.0),
            far_left: Point::new(120.0, 80.0),
            far_right: Point::new(190.0, 90.0),
            scale_near: 1.2,
            scale_far: 0.3,
        }
    }

    #[test]
    fn corner_placements() {
        let t = sample();
        assert_eq!(t.place(0.0, 0.0), (t.near_left, 1.2));
        assert_eq!(t.place(1.0, 1.0), (t.far_right, 0.3));
        assert_eq!(t.place(1.0, 0.0), (t.near_right, 1.2));
        assert_eq!(t.place(0.0, 1.0), (t.far_left, 0.3));
    }

    #[test]
    fn centre_is_corner_centroid() {
        let t = sample();
        let (p, s) = t.place(0.5, 0.5);
        let cx = t.corners().iter().map(|c| c.x).sum::<f64>() / 4.0;
        let cy = t.corners().iter().map(|c| c.y).sum::<f64>() / 4.0;
        assert!((p.x - cx).abs() < 1e-12 && (p.y - cy).abs() < 1e-12);
        assert!((s - 0.75).abs() < 1e-12);
    }

    #[test]
    fn invariant_breaches() {
        assert!(sample().violations().is_empty());
        let mut t = sample();
        t.near_left.y = 50.0;
        assert!(t.validate().is_err());
        let mut t = sample();
        t.scale_far = 1.2;
        assert!(t.violations().iter().any(|v| v.contains("scale_far")));
        let mut t = sample();
        std::mem::swap(&mut t.far_left, &mut t.far_right);
        assert!(!t.violations().is_empty());
        // heavily skewed is still simple
        let bow = Trapezoid {
            near_left: Point::new(0.0, 100.0),
            near_right: Point::new(100.0, 100.0),
            far_left: Point::new(150.0, 0.0),
            far_right: Point::new(160.0, 0.0),
            scale_near: 1.0,
            scale_far: 0.5,
        };
        assert!(bow.violations().is_empty(), "{:?}", bow.violations());
        let crossed = Trapezoid {
            far_left: Point::new(60.0, 50.0),
            far_right: Point::new(40.0, 50.0),
            ..bow
        };
        assert!(crossed.violations().iter().any(|v| v.contains("left corners")));
    }

    proptest! {
        #[test]
        fn place_matches_direct_bilinear(ux in 0.0f64..=1.0, uz in 0.0f64..=1.0) {
            let t = sample();
            let (p, s) = t.place(ux, uz);
            // direct weights of the four corners
            let w = [(1.0 - ux) * (1.0 - uz), ux * (1.0 - uz), (1.0 - ux) * uz, ux * uz];
            let c = t.corners();
            let x: f64 = c.iter().zip(w).map(|(c, w)| c.x * w).sum();
            let y: f64 = c.iter().zip(w).map(|(c, w)| c.y * w).sum();
            prop_assert!((p.x - x).abs() < 1e-9 && (p.y - y).abs() < 1e-9);
            prop_assert!((s - (1.2 - 0.9 * uz)).abs() < 1e-12);
        }

        #[test]
        fn place_is_affine_in_ux(uz in 0.0f64..=1.0, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let t = sample();
            let mid = t.place(0.5 * (a + b), uz).0;
            let pa = t.place(a, uz).0;
            let pb = t.place(b, uz).0;
            prop_assert!((mid.x - 0.5 * (pa.x + pb.x)).abs() < 1e-9);
            prop_assert!((mid.y - 0.5 * (pa.y + pb.y)).abs() < 1e-9);
        }
    }
}
