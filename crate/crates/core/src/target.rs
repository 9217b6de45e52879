//! Geodesic target spaces.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TargetError {
    #[error("point is not in the space")]
    OutsideSpace,
    #[error("apex coincides with one of the other points")]
    DegenerateApex,
}

/// Angle opposite side `c` in the planar triangle with sides `a`, `b`, `c`.
/// The cosine is clamped so that slightly inconsistent lengths still give an
/// angle in `[0, pi]`.
pub fn angle_from_sides(a: f64, b: f64, c: f64) -> f64 {
    let cos = (a * a + b * b - c * c) / (2.0 * a * b);
    cos.clamp(-1.0, 1.0).acos()
}

pub trait TargetSpace {
    type Point: Clone;

    fn distance(&self, p: &Self::Point, q: &Self::Point) -> f64;

    /// Point at fraction `t` of a geodesic from `p` to `q`.
    fn geodesic_eval(&self, p: &Self::Point, q: &Self::Point, t: f64) -> Self::Point;

    fn contains(&self, p: &Self::Point) -> bool;

    fn checked_distance(&self, p: &Self::Point, q: &Self::Point) -> Result<f64, TargetError> {
        if !self.contains(p) || !self.contains(q) {
            return Err(TargetError::OutsideSpace);
        }
        Ok(self.distance(p, q))
    }

    /// Angle at `apex` of the comparison triangle of `apex`, `p`, `q`.
    fn comparison_angle(
        &self,
        apex: &Self::Point,
        p: &Self::Point,
        q: &Self::Point,
    ) -> Result<f64, TargetError> {
        let a = self.checked_distance(apex, p)?;
        let b = self.checked_distance(apex, q)?;
        if a <= 0.0 || b <= 0.0 {
            return Err(TargetError::DegenerateApex);
        }
        Ok(angle_from_sides(a, b, self.distance(p, q)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EuclideanSpace {
    pub dim: usize,
}

impl EuclideanSpace {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl TargetSpace for EuclideanSpace {
    type Point = Vec<f64>;

    fn distance(&self, p: &Vec<f64>, q: &Vec<f64>) -> f64 {
        crate::mesh::dist(p, q)
    }

    fn geodesic_eval(&self, p: &Vec<f64>, q: &Vec<f64>, t: f64) -> Vec<f64> {
        p.iter().zip(q).map(|(a, b)| a + t * (b - a)).collect()
    }

    fn contains(&self, p: &Vec<f64>) -> bool {
        p.len() == self.dim && p.iter().all(|x| x.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn euclidean_basics() {
        let e = EuclideanSpace::new(3);
        let o = vec![0.0; 3];
        assert_eq!(e.distance(&o, &vec![3.0, 4.0, 0.0]), 5.0);
        assert_eq!(e.distance(&o, &o), 0.0);
        assert_eq!(
            e.checked_distance(&o, &vec![1.0]),
            Err(TargetError::OutsideSpace)
        );
        let m = e.geodesic_eval(&o, &vec![2.0, 0.0, 4.0], 0.25);
        assert_eq!(m, vec![0.5, 0.0, 1.0]);
    }

    #[test]
    fn comparison_angles() {
        let e = EuclideanSpace::new(2);
        let o = vec![0.0, 0.0];
        let x = vec![1.0, 0.0];
        let y = vec![0.0, 2.0];
        assert!((e.comparison_angle(&o, &x, &y).unwrap() - PI / 2.0).abs() < 1e-15);
        let w = vec![-3.0, 0.0];
        assert!((e.comparison_angle(&o, &x, &w).unwrap() - PI).abs() < 1e-15);
        assert!((angle_from_sides(1.0, 1.0, 1.0) - PI / 3.0).abs() < 1e-15);
        assert_eq!(
            e.comparison_angle(&o, &o, &x),
            Err(TargetError::DegenerateApex)
        );
        // clamped for inconsistent lengths
        assert_eq!(angle_from_sides(1.0, 1.0, 2.5), PI);
    }
}
