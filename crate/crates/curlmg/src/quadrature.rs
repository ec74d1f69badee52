//! Fixed quadrature rules on segments, triangles and tetrahedra.
//!
//! All rules are stored in barycentric coordinates with weights normalized to
//! sum to one, so an integral is `measure * sum(w_q * f(x_q))`. The tests
//! validate every rule against the closed-form integral of barycentric
//! monomials over a simplex,
//!
//!   int_K la_0^a la_1^b la_2^c la_3^d dV = 6|K| a! b! c! d! / (a+b+c+d+3)!
//!
//! (and its 2D/1D analogues), which covers all polynomials up to the stated
//! degree.

use crate::geometry::{triangle_area, TetGeom, Vec3};

#[derive(Debug, Clone, Copy)]
pub struct TetPoint {
    pub lambda: [f64; 4],
    pub weight: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct TriPoint {
    pub lambda: [f64; 3],
    pub weight: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SegPoint {
    /// Position on [0, 1].
    pub t: f64,
    pub weight: f64,
}

/// Degree-5 rule on a tetrahedron, 14 points, all interior.
pub fn tet_deg5() -> &'static [TetPoint] {
    const B1: f64 = 0.310_885_919_263_300_5;
    const A1: f64 = 1.0 - 3.0 * B1;
    const W1: f64 = 0.112_687_925_718_015_85;
    const B2: f64 = 0.092_735_250_310_891_22;
    const A2: f64 = 1.0 - 3.0 * B2;
    const W2: f64 = 0.073_493_043_116_361_96;
    const C: f64 = 0.045_503_704_125_649_65;
    const D: f64 = 0.5 - C;
    const W3: f64 = 0.042_546_020_777_081_47;
    static PTS: [TetPoint; 14] = [
        TetPoint { lambda: [A1, B1, B1, B1], weight: W1 },
        TetPoint { lambda: [B1, A1, B1, B1], weight: W1 },
        TetPoint { lambda: [B1, B1, A1, B1], weight: W1 },
        TetPoint { lambda: [B1, B1, B1, A1], weight: W1 },
        TetPoint { lambda: [A2, B2, B2, B2], weight: W2 },
        TetPoint { lambda: [B2, A2, B2, B2], weight: W2 },
        TetPoint { lambda: [B2, B2, A2, B2], weight: W2 },
        TetPoint { lambda: [B2, B2, B2, A2], weight: W2 },
        TetPoint { lambda: [C, C, D, D], weight: W3 },
        TetPoint { lambda: [C, D, C, D], weight: W3 },
        TetPoint { lambda: [C, D, D, C], weight: W3 },
        TetPoint { lambda: [D, C, C, D], weight: W3 },
        TetPoint { lambda: [D, C, D, C], weight: W3 },
        TetPoint { lambda: [D, D, C, C], weight: W3 },
    ];
    &PTS
}

/// Degree-4 rule on a tetrahedron, 11 points (one negative weight).
pub fn tet_deg4() -> &'static [TetPoint] {
    const W1: f64 = -444.0 / 5625.0;
    const W2: f64 = 2058.0 / 45000.0;
    const W3: f64 = 336.0 / 2250.0;
    const A2: f64 = 11.0 / 14.0;
    const B2: f64 = 1.0 / 14.0;
    // (1 +- sqrt(5/14)) / 4
    const C: f64 = 0.399_403_576_166_799_22;
    const D: f64 = 0.100_596_423_833_200_79;
    static PTS: [TetPoint; 11] = [
        TetPoint { lambda: [0.25, 0.25, 0.25, 0.25], weight: W1 },
        TetPoint { lambda: [A2, B2, B2, B2], weight: W2 },
        TetPoint { lambda: [B2, A2, B2, B2], weight: W2 },
        TetPoint { lambda: [B2, B2, A2, B2], weight: W2 },
        TetPoint { lambda: [B2, B2, B2, A2], weight: W2 },
        TetPoint { lambda: [C, C, D, D], weight: W3 },
        TetPoint { lambda: [C, D, C, D], weight: W3 },
        TetPoint { lambda: [C, D, D, C], weight: W3 },
        TetPoint { lambda: [D, C, C, D], weight: W3 },
        TetPoint { lambda: [D, C, D, C], weight: W3 },
        TetPoint { lambda: [D, D, C, C], weight: W3 },
    ];
    &PTS
}

/// Degree-4 rule on a triangle, 6 points.
pub fn tri_deg4() -> &'static [TriPoint] {
    const A1: f64 = 0.816_847_572_980_459;
    const B1: f64 = 0.091_576_213_509_771;
    const W1: f64 = 0.109_951_743_655_322;
    const A2: f64 = 0.108_103_018_168_07;
    const B2: f64 = 0.445_948_490_915_965;
    const W2: f64 = 0.223_381_589_678_011;
    static PTS: [TriPoint; 6] = [
        TriPoint { lambda: [A1, B1, B1], weight: W1 },
        TriPoint { lambda: [B1, A1, B1], weight: W1 },
        TriPoint { lambda: [B1, B1, A1], weight: W1 },
        TriPoint { lambda: [A2, B2, B2], weight: W2 },
        TriPoint { lambda: [B2, A2, B2], weight: W2 },
        TriPoint { lambda: [B2, B2, A2], weight: W2 },
    ];
    &PTS
}

/// 5-point Gauss-Legendre rule mapped to [0, 1]; exact to degree 9.
pub fn seg_gauss5() -> &'static [SegPoint] {
    const X1: f64 = 0.906_179_845_938_664;
    const X2: f64 = 0.538_469_310_105_683_1;
    const W0: f64 = 0.568_888_888_888_888_9 / 2.0;
    const W1: f64 = 0.478_628_670_499_366_5 / 2.0;
    const W2: f64 = 0.236_926_885_056_189_1 / 2.0;
    static PTS: [SegPoint; 5] = [
        SegPoint { t: (1.0 - X1) / 2.0, weight: W2 },
        SegPoint { t: (1.0 - X2) / 2.0, weight: W1 },
        SegPoint { t: 0.5, weight: W0 },
        SegPoint { t: (1.0 + X2) / 2.0, weight: W1 },
        SegPoint { t: (1.0 + X1) / 2.0, weight: W2 },
    ];
    &PTS
}

/// Integrate a scalar function over a tet.
pub fn tet_integrate(geom: &TetGeom, rule: &[TetPoint], mut f: impl FnMut(Vec3, [f64; 4]) -> f64) -> f64 {
    let mut acc = 0.0;
    for q in rule {
        acc += q.weight * f(geom.point(q.lambda), q.lambda);
    }
    acc * geom.volume
}

/// Integrate a scalar function over the triangle (a, b, c).
pub fn tri_integrate(a: Vec3, b: Vec3, c: Vec3, rule: &[TriPoint], mut f: impl FnMut(Vec3) -> f64) -> f64 {
    let area = triangle_area(a, b, c);
    let mut acc = 0.0;
    for q in rule {
        let x = a.scale(q.lambda[0]) + b.scale(q.lambda[1]) + c.scale(q.lambda[2]);
        acc += q.weight * f(x);
    }
    acc * area
}

/// Path integral of the tangential component of a vector field along the
/// straight segment from `a` to `b`: int_a^b v . ds.
pub fn edge_path_integral(a: Vec3, b: Vec3, mut v: impl FnMut(Vec3) -> Vec3) -> f64 {
    let d = b - a;
    let mut acc = 0.0;
    for q in seg_gauss5() {
        acc += q.weight * v(a + d.scale(q.t)).dot(d);
    }
    acc
}
