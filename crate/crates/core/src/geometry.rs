//! Geometric feature templates over aligned landmarks.
//!
//! All quantities are normalized by the inter-ocular distance so they do not
//! depend on the face scale or position in the image.

use crate::error::{Error, Result};
use crate::frame::{LandmarkFrame, LandmarkLayout, Point2};

/// Distance between the two configured eye landmarks. Coincident eyes make
/// the frame unusable for normalized features and are rejected.
pub fn inter_ocular_distance(landmarks: &[Point2], layout: &LandmarkLayout) -> Result<f64> {
    for index in [layout.left_eye, layout.right_eye] {
        if index >= landmarks.len() {
            return Err(Error::LandmarkIndex {
                index,
                count: landmarks.len(),
            });
        }
    }
    let d = landmarks[layout.left_eye].distance(landmarks[layout.right_eye]);
    if d > 0.0 && d.is_finite() {
        Ok(d)
    } else {
        Err(Error::DegenerateFrame {
            left: layout.left_eye,
            right: layout.right_eye,
        })
    }
}

/// Normalized distance between landmarks `a` and `b`.
#[inline]
pub fn phi1(frame: &LandmarkFrame, a: usize, b: usize) -> f64 {
    frame.point(a).distance(frame.point(b)) / frame.iod()
}

/// Cosine (`use_cos`) or sine of the signed angle at landmark `b` from ray
/// b->a to ray b->c. A zero-length ray yields 0.
#[inline]
pub fn phi2(frame: &LandmarkFrame, a: usize, b: usize, c: usize, use_cos: bool) -> f64 {
    angle_component(frame.point(a), frame.point(b), frame.point(c), use_cos)
}

#[inline]
pub fn angle_component(a: Point2, b: Point2, c: Point2, use_cos: bool) -> f64 {
    let (ux, uy) = (a.x - b.x, a.y - b.y);
    let (vx, vy) = (c.x - b.x, c.y - b.y);
    let norm = ux.hypot(uy) * vx.hypot(vy);
    if norm == 0.0 || !norm.is_finite() {
        return 0.0;
    }
    let value = if use_cos {
        (ux * vx + uy * vy) / norm
    } else {
        (ux * vy - uy * vx) / norm
    };
    value.clamp(-1.0, 1.0)
}

/// Temporal derivative of [`phi1`] between two frames.
#[inline]
pub fn phi4(prev: &LandmarkFrame, cur: &LandmarkFrame, a: usize, b: usize) -> f64 {
    phi1(cur, a, b) - phi1(prev, a, b)
}

/// Temporal derivative of [`phi2`] between two frames.
#[inline]
pub fn phi5(
    prev: &LandmarkFrame,
    cur: &LandmarkFrame,
    a: usize,
    b: usize,
    c: usize,
    use_cos: bool,
) -> f64 {
    phi2(cur, a, b, c, use_cos) - phi2(prev, a, b, c, use_cos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LAYOUT: LandmarkLayout = LandmarkLayout {
        count: 4,
        left_eye: 0,
        right_eye: 1,
    };

    fn frame(points: &[(f64, f64)]) -> LandmarkFrame {
        let landmarks = points.iter().map(|&(x, y)| Point2::new(x, y)).collect();
        LandmarkFrame::new(&LAYOUT, 0, 0, 0, landmarks).unwrap()
    }

    #[test]
    fn iod_of_345_triangle() {
        let pts = [Point2::new(0.0, 0.0), Point2::new(3.0, 4.0)];
        let layout = LandmarkLayout {
            count: 2,
            left_eye: 0,
            right_eye: 1,
        };
        assert_eq!(inter_ocular_distance(&pts, &layout).unwrap(), 5.0);
    }

    #[test]
    fn coincident_eyes_are_rejected() {
        let pts = [Point2::new(10.0, 10.0), Point2::new(10.0, 10.0)];
        let layout = LandmarkLayout {
            count: 2,
            left_eye: 0,
            right_eye: 1,
        };
        assert!(matches!(
            inter_ocular_distance(&pts, &layout),
            Err(Error::DegenerateFrame { .. })
        ));
        let layout4 = LAYOUT;
        let err = LandmarkFrame::new(&layout4, 0, 0, 0, vec![Point2::new(1.0, 1.0); 4]);
        assert!(err.is_err());
    }

    #[test]
    fn phi1_examples() {
        let f = frame(&[(0.0, 0.0), (3.0, 4.0), (3.0, 4.0), (7.0, 1.0)]);
        assert_eq!(phi1(&f, 0, 1), 1.0);
        assert_eq!(phi1(&f, 1, 2), 0.0);
    }

    #[test]
    fn phi2_examples() {
        // a=(1,0), b=(0,0), c=(0,1); eyes elsewhere.
        let f = frame(&[(5.0, 5.0), (9.0, 5.0), (1.0, 0.0), (0.0, 1.0)]);
        let g = frame(&[(0.0, 0.0), (9.0, 5.0), (1.0, 0.0), (0.0, 1.0)]);
        // Use index 0 as b in g: a = 2, b = 0, c = 3.
        assert!((phi2(&g, 2, 0, 3, true) - 0.0).abs() < 1e-15);
        assert!((phi2(&g, 2, 0, 3, false) - 1.0).abs() < 1e-15);
        let _ = f;
        // Collinear, b between a and c.
        let h = frame(&[(0.0, 0.0), (9.0, 5.0), (1.0, 0.0), (-2.0, 0.0)]);
        assert_eq!(phi2(&h, 2, 0, 3, true), -1.0);
    }

    #[test]
    fn degenerate_ray_gives_zero() {
        let f = frame(&[(0.0, 0.0), (4.0, 0.0), (0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(phi2(&f, 2, 0, 3, true), 0.0);
        assert_eq!(phi2(&f, 2, 0, 3, false), 0.0);
    }

    #[test]
    fn phi4_is_difference() {
        let prev = frame(&[(0.0, 0.0), (10.0, 0.0), (0.0, 0.0), (5.0, 0.0)]);
        let cur = frame(&[(0.0, 0.0), (10.0, 0.0), (0.0, 0.0), (8.0, 0.0)]);
        assert!((phi1(&cur, 2, 3) - 0.8).abs() < 1e-15);
        assert!((phi1(&prev, 2, 3) - 0.5).abs() < 1e-15);
        assert!((phi4(&prev, &cur, 2, 3) - 0.3).abs() < 1e-12);
        assert_eq!(phi4(&cur, &cur, 2, 3), 0.0);
        assert_eq!(phi5(&cur, &cur, 1, 2, 3, false), 0.0);
    }

    fn arb_points() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 4)
            .prop_filter("distinct eyes", |p| {
                (p[0].0 - p[1].0).hypot(p[0].1 - p[1].1) > 1e-3
            })
    }

    proptest! {
        #[test]
        fn scale_and_translation_invariance(
            pts in arb_points(),
            k in 0.01..100.0f64,
            dx in -1e3..1e3f64,
            dy in -1e3..1e3f64,
            use_cos in any::<bool>(),
        ) {
            let base = frame(&pts);
            let scaled: Vec<_> = pts.iter().map(|&(x, y)| (x * k, y * k)).collect();
            let moved: Vec<_> = pts.iter().map(|&(x, y)| (x + dx, y + dy)).collect();
            let scaled = frame(&scaled);
            let moved = frame(&moved);
            for (a, b, c) in [(0, 2, 3), (2, 3, 1), (3, 1, 0)] {
                prop_assert!((phi1(&base, a, b) - phi1(&scaled, a, b)).abs() < 1e-9);
                prop_assert!((phi1(&base, a, b) - phi1(&moved, a, b)).abs() < 1e-9);
                prop_assert!((phi2(&base, a, b, c, use_cos) - phi2(&scaled, a, b, c, use_cos)).abs() < 1e-9);
                prop_assert!((phi2(&base, a, b, c, use_cos) - phi2(&moved, a, b, c, use_cos)).abs() < 1e-9);
            }
        }

        #[test]
        fn angle_components_are_unit(pts in arb_points()) {
            let f = frame(&pts);
            let c = phi2(&f, 0, 2, 3, true);
            let s = phi2(&f, 0, 2, 3, false);
            prop_assert!((-1.0..=1.0).contains(&c));
            prop_assert!((-1.0..=1.0).contains(&s));
            let degenerate = f.point(0) == f.point(2) || f.point(3) == f.point(2);
            if !degenerate {
                prop_assert!((c * c + s * s - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn phi1_matches_naive(pts in arb_points()) {
            let f = frame(&pts);
            let iod = ((pts[0].0 - pts[1].0).powi(2) + (pts[0].1 - pts[1].1).powi(2)).sqrt();
            let naive = ((pts[2].0 - pts[3].0).powi(2) + (pts[2].1 - pts[3].1).powi(2)).sqrt() / iod;
            prop_assert!((phi1(&f, 2, 3) - naive).abs() < 1e-12);
        }

        #[test]
        fn phi4_matches_independent_calls(a in arb_points(), b in arb_points()) {
            let prev = frame(&a);
            let cur = frame(&b);
            prop_assert_eq!(phi4(&prev, &cur, 2, 3), phi1(&cur, 2, 3) - phi1(&prev, 2, 3));
            prop_assert_eq!(phi4(&prev, &prev, 2, 3), 0.0);
        }
    }
}
