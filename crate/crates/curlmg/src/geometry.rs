//! Minimal 3-vector and tetrahedron geometry kernels.
//!
//! Everything here is orientation-free: volumes are absolute values and
//! barycentric gradients come from the actual inverse Jacobian, so the
//! formulas stay valid for both vertex orderings produced by bisection.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use crate::error::Error;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

pub const fn v3(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3 { x, y, z }
}

impl Vec3 {
    pub const ZERO: Vec3 = v3(0.0, 0.0, 0.0);

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        v3(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn scale(self, s: f64) -> Vec3 {
        v3(self.x * s, self.y * s, self.z * s)
    }

    pub fn midpoint(self, o: Vec3) -> Vec3 {
        (self + o).scale(0.5)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        v3(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        v3(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        v3(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        self.scale(s)
    }
}

/// Signed volume times 6 of the tet (a, b, c, d).
pub fn signed_volume6(a: Vec3, b: Vec3, c: Vec3, d: Vec3) -> f64 {
    (b - a).cross(c - a).dot(d - a)
}

/// Precomputed affine geometry of one tetrahedron: barycentric gradients and
/// the (unsigned) volume.
#[derive(Debug, Clone, Copy)]
pub struct TetGeom {
    pub verts: [Vec3; 4],
    /// grad lambda_m for m = 0..4; constant on the element.
    pub grads: [Vec3; 4],
    pub volume: f64,
}

impl TetGeom {
    pub fn new(verts: [Vec3; 4]) -> Result<TetGeom> {
        let [a0, a1, a2, a3] = verts;
        let (d1, d2, d3) = (a1 - a0, a2 - a0, a3 - a0);
        let det = d1.cross(d2).dot(d3);
        let scale = d1.norm().max(d2.norm()).max(d3.norm());
        if det.abs() <= 1e-14 * scale.powi(3) {
            return Err(Error::InvalidElement(format!(
                "degenerate tetrahedron, 6*vol = {det:.3e}"
            )));
        }
        // Rows of the inverse Jacobian are the gradients of lambda_1..3;
        // cofactor form avoids forming the inverse explicitly.
        let g1 = d2.cross(d3).scale(1.0 / det);
        let g2 = d3.cross(d1).scale(1.0 / det);
        let g3 = d1.cross(d2).scale(1.0 / det);
        let g0 = -(g1 + g2 + g3);
        Ok(TetGeom {
            verts,
            grads: [g0, g1, g2, g3],
            volume: det.abs() / 6.0,
        })
    }

    /// Barycentric coordinates of an arbitrary point.
    pub fn barycentric(&self, x: Vec3) -> [f64; 4] {
        let mut lam = [0.0; 4];
        for m in 1..4 {
            lam[m] = self.grads[m].dot(x - self.verts[0]);
        }
        lam[0] = 1.0 - lam[1] - lam[2] - lam[3];
        lam
    }

    /// Physical point from barycentric coordinates.
    pub fn point(&self, lam: [f64; 4]) -> Vec3 {
        let mut p = Vec3::ZERO;
        for m in 0..4 {
            p += self.verts[m].scale(lam[m]);
        }
        p
    }

    pub fn centroid(&self) -> Vec3 {
        self.point([0.25; 4])
    }

    /// Longest edge length (element diameter for a tet).
    pub fn diameter(&self) -> f64 {
        let mut h: f64 = 0.0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                h = h.max((self.verts[i] - self.verts[j]).norm());
            }
        }
        h
    }

    /// Shape regularity measure diameter / inradius, where the inradius of a
    /// tet is 3 vol / surface area.
    pub fn shape_ratio(&self) -> f64 {
        let [a, b, c, d] = self.verts;
        let area = |p: Vec3, q: Vec3, r: Vec3| (q - p).cross(r - p).norm() / 2.0;
        let surface = area(b, c, d) + area(a, c, d) + area(a, b, d) + area(a, b, c);
        self.diameter() * surface / (3.0 * self.volume)
    }
}

/// Area of the triangle (a, b, c).
pub fn triangle_area(a: Vec3, b: Vec3, c: Vec3) -> f64 {
    (b - a).cross(c - a).norm() / 2.0
}

/// Unit normal of the triangle (a, b, c); orientation follows vertex order.
pub fn triangle_normal(a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let n = (b - a).cross(c - a);
    n.scale(1.0 / n.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference_tet() -> TetGeom {
        TetGeom::new([
            v3(0.0, 0.0, 0.0),
            v3(1.0, 0.0, 0.0),
            v3(0.0, 1.0, 0.0),
            v3(0.0, 0.0, 1.0),
        ])
        .unwrap()
    }

    #[test]
    fn reference_tet_geometry() {
        let g = reference_tet();
        assert_relative_eq!(g.volume, 1.0 / 6.0);
        assert_relative_eq!(g.grads[1].x, 1.0);
        assert_relative_eq!(g.grads[2].y, 1.0);
        assert_relative_eq!(g.grads[3].z, 1.0);
        let s = g.grads[0] + g.grads[1] + g.grads[2] + g.grads[3];
        assert!(s.norm() < 1e-15, "gradients must sum to zero");
    }

    #[test]
    fn gradients_are_dual_to_vertices() {
        // grad lambda_m . (a_k - a_0) should recover the Kronecker pattern.
        let g = TetGeom::new([
            v3(0.3, -0.2, 0.1),
            v3(1.1, 0.4, -0.3),
            v3(-0.2, 0.9, 0.5),
            v3(0.4, 0.1, 1.3),
        ])
        .unwrap();
        for m in 0..4 {
            for k in 0..4 {
                let expect = if m == k { 1.0 } else { 0.0 };
                let lam = g.barycentric(g.verts[k]);
                assert_relative_eq!(lam[m], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn volume_is_orientation_free() {
        let a = [
            v3(0.0, 0.0, 0.0),
            v3(1.0, 0.0, 0.0),
            v3(0.0, 1.0, 0.0),
            v3(0.0, 0.0, 1.0),
        ];
        let swapped = [a[1], a[0], a[2], a[3]];
        assert_relative_eq!(
            TetGeom::new(a).unwrap().volume,
            TetGeom::new(swapped).unwrap().volume
        );
    }

    #[test]
    fn degenerate_tet_rejected() {
        let r = TetGeom::new([
            v3(0.0, 0.0, 0.0),
            v3(1.0, 0.0, 0.0),
            v3(2.0, 0.0, 0.0),
            v3(3.0, 0.0, 0.0),
        ]);
        assert!(r.is_err());
    }

    #[test]
    fn regular_tet_shape_ratio() {
        // Regular tet: diameter / inradius = 2 sqrt(6).
        let g = TetGeom::new([
            v3(1.0, 1.0, 1.0),
            v3(1.0, -1.0, -1.0),
            v3(-1.0, 1.0, -1.0),
            v3(-1.0, -1.0, 1.0),
        ])
        .unwrap();
        assert_relative_eq!(g.shape_ratio(), 2.0 * 6.0_f64.sqrt(), epsilon = 1e-12);
    }
}
