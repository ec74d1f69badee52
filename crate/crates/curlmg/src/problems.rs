//! Benchmark problem presets.
//!
//! Every preset fixes a domain mesh, a load with known divergence, the exact
//! solution and its curl, and exact Dirichlet data. The two singular presets
//! share the gradient field of the wedge potential r^(1/2) sin(phi/2): curl
//! free, in H(curl) but not in H^1 near the reentrant edge (the z axis), so
//! adaptive refinement has something to chase. Because the field is a
//! gradient, boundary edge coefficients are exact potential differences; no
//! quadrature near the singular edge is ever needed. On the crack slit the
//! angle is double valued, so evaluation takes a witness point (any interior
//! point of the element at hand) to pick the branch.

use std::collections::HashMap;

use rand::Rng;
use rand::RngCore;

use crate::geometry::{v3, Vec3};
use crate::mesh::{crack_mesh, lshape_mesh, unit_cube_mesh, Mesh, VertId};
use crate::space::DofMap;
use crate::Result;

pub trait Problem {
    fn name(&self) -> &'static str;

    /// Initial mesh with Dirichlet marks in place.
    fn build_mesh(&self) -> Mesh;

    /// Right-hand side f of curl curl u + u = f. Loads are only evaluated at
    /// element-interior points, where the point itself resolves any branch.
    fn load(&self, x: Vec3) -> Vec3;

    /// Divergence of the load, needed by the error estimator.
    fn div_load(&self, _x: Vec3) -> f64 {
        0.0
    }

    /// Exact solution; `witness` is an interior point of the element the
    /// evaluation belongs to and selects the branch on cut planes.
    fn exact(&self, x: Vec3, witness: Vec3) -> Vec3;

    fn exact_curl(&self, x: Vec3, witness: Vec3) -> Vec3;

    /// Exact coefficients for every constrained edge of the dof map.
    fn dirichlet_lift(&self, m: &Mesh, dm: &DofMap) -> Result<HashMap<(VertId, VertId), f64>>;

    /// A random point strictly inside the domain, away from the boundary and
    /// from the singular edge, suitable for finite-difference spot checks.
    fn sample_interior(&self, rng: &mut dyn RngCore) -> Vec3;
}

/// Wedge angle about the z axis, continued to [0, 2 pi). On the positive x
/// half of the y = 0 plane the angle is ambiguous between 0 and 2 pi; the
/// witness decides.
fn wedge_angle(x: Vec3, witness: Vec3) -> f64 {
    if x.y == 0.0 && x.x > 0.0 {
        return if witness.y < 0.0 {
            2.0 * std::f64::consts::PI
        } else {
            0.0
        };
    }
    let phi = x.y.atan2(x.x);
    if phi < 0.0 {
        phi + 2.0 * std::f64::consts::PI
    } else {
        phi
    }
}

/// The wedge potential r^(1/2) sin(phi/2); zero on the z axis.
fn wedge_potential(x: Vec3, witness: Vec3) -> f64 {
    let r = x.x.hypot(x.y);
    let phi = wedge_angle(x, witness);
    r.sqrt() * (0.5 * phi).sin()
}

/// Gradient of the wedge potential: (-sin(phi/2), cos(phi/2), 0) / (2 sqrt r).
fn wedge_field(x: Vec3, witness: Vec3) -> Vec3 {
    let r = x.x.hypot(x.y);
    let phi = wedge_angle(x, witness);
    let s = 0.5 / r.sqrt();
    v3(-s * (0.5 * phi).sin(), s * (0.5 * phi).cos(), 0.0)
}

/// Potential-difference lift shared by the two singular presets: each
/// constrained edge gets psi(q) - psi(p), with the branch chosen by an
/// incident leaf centroid.
fn gradient_lift(m: &Mesh, dm: &DofMap) -> Result<HashMap<(VertId, VertId), f64>> {
    let mut lift = HashMap::new();
    for pos in 0..dm.n_edges() {
        if dm.edge_dof_at(pos).is_some() {
            continue;
        }
        let (p, q) = dm.edge_at(pos);
        let leaves = m.leaves_around_edge((p, q));
        let k = *leaves.first().ok_or_else(|| {
            crate::error::Error::InvalidMesh(format!("edge ({p}, {q}) has no incident leaf"))
        })?;
        let w = m.tet_geom(k)?.centroid();
        lift.insert(
            (p, q),
            wedge_potential(m.vert(q), w) - wedge_potential(m.vert(p), w),
        );
    }
    Ok(lift)
}

/// L-shaped domain, wedge of angle 3 pi / 2 around the z axis.
pub struct Lshape;

impl Problem for Lshape {
    fn name(&self) -> &'static str {
        "lshape"
    }

    fn build_mesh(&self) -> Mesh {
        lshape_mesh()
    }

    fn load(&self, x: Vec3) -> Vec3 {
        // curl u = 0, so f = u.
        wedge_field(x, x)
    }

    fn exact(&self, x: Vec3, witness: Vec3) -> Vec3 {
        wedge_field(x, witness)
    }

    fn exact_curl(&self, _x: Vec3, _witness: Vec3) -> Vec3 {
        Vec3::ZERO
    }

    fn dirichlet_lift(&self, m: &Mesh, dm: &DofMap) -> Result<HashMap<(VertId, VertId), f64>> {
        gradient_lift(m, dm)
    }

    fn sample_interior(&self, rng: &mut dyn RngCore) -> Vec3 {
        loop {
            let x: f64 = rng.gen_range(-0.9..0.9);
            let y: f64 = rng.gen_range(-0.9..0.9);
            let z: f64 = rng.gen_range(-0.9..0.9);
            let keeps_off_wedge = x <= -0.1 || y >= 0.1;
            if x.hypot(y) >= 0.3 && keeps_off_wedge {
                return v3(x, y, z);
            }
        }
    }
}

/// Cracked cube, full 2 pi wedge with a slit along {x > 0, y = 0}.
pub struct Crack;

impl Problem for Crack {
    fn name(&self) -> &'static str {
        "crack"
    }

    fn build_mesh(&self) -> Mesh {
        crack_mesh()
    }

    fn load(&self, x: Vec3) -> Vec3 {
        wedge_field(x, x)
    }

    fn exact(&self, x: Vec3, witness: Vec3) -> Vec3 {
        wedge_field(x, witness)
    }

    fn exact_curl(&self, _x: Vec3, _witness: Vec3) -> Vec3 {
        Vec3::ZERO
    }

    fn dirichlet_lift(&self, m: &Mesh, dm: &DofMap) -> Result<HashMap<(VertId, VertId), f64>> {
        gradient_lift(m, dm)
    }

    fn sample_interior(&self, rng: &mut dyn RngCore) -> Vec3 {
        loop {
            let x: f64 = rng.gen_range(-0.9..0.9);
            let y: f64 = rng.gen_range(-0.9..0.9);
            let z: f64 = rng.gen_range(-0.9..0.9);
            if x.hypot(y) >= 0.3 && y.abs() >= 0.1 {
                return v3(x, y, z);
            }
        }
    }
}

/// Smooth reference problem on the unit cube, u = (y^2, 0, 0).
pub struct SmoothCube;

impl Problem for SmoothCube {
    fn name(&self) -> &'static str {
        "cube"
    }

    fn build_mesh(&self) -> Mesh {
        let mut m = unit_cube_mesh();
        m.mark_dirichlet_all();
        m
    }

    fn load(&self, x: Vec3) -> Vec3 {
        v3(x.y * x.y - 2.0, 0.0, 0.0)
    }

    fn exact(&self, x: Vec3, _witness: Vec3) -> Vec3 {
        v3(x.y * x.y, 0.0, 0.0)
    }

    fn exact_curl(&self, x: Vec3, _witness: Vec3) -> Vec3 {
        v3(0.0, 0.0, -2.0 * x.y)
    }

    fn dirichlet_lift(&self, m: &Mesh, dm: &DofMap) -> Result<HashMap<(VertId, VertId), f64>> {
        // int_p^q y^2 dx along a straight edge has the closed form below.
        let mut lift = HashMap::new();
        for pos in 0..dm.n_edges() {
            if dm.edge_dof_at(pos).is_some() {
                continue;
            }
            let (p, q) = dm.edge_at(pos);
            let (a, b) = (m.vert(p), m.vert(q));
            let ym = (a.y * a.y + a.y * b.y + b.y * b.y) / 3.0;
            lift.insert((p, q), (b.x - a.x) * ym);
        }
        Ok(lift)
    }

    fn sample_interior(&self, rng: &mut dyn RngCore) -> Vec3 {
        v3(
            rng.gen_range(0.1..0.9),
            rng.gen_range(0.1..0.9),
            rng.gen_range(0.1..0.9),
        )
    }
}

pub fn registry() -> Vec<Box<dyn Problem>> {
    vec![Box::new(Lshape), Box::new(Crack), Box::new(SmoothCube)]
}

pub fn lookup(name: &str) -> Option<Box<dyn Problem>> {
    registry().into_iter().find(|p| p.name() == name)
}

pub fn names() -> Vec<&'static str> {
    registry().iter().map(|p| p.name()).collect()
}

/// Central-difference curl, second order in h.
pub fn fd_curl(f: &dyn Fn(Vec3) -> Vec3, x: Vec3, h: f64) -> Vec3 {
    let d = |dir: Vec3| {
        let (a, b) = (f(x + dir.scale(h)), f(x - dir.scale(h)));
        (a - b).scale(0.5 / h)
    };
    let dx = d(v3(1.0, 0.0, 0.0));
    let dy = d(v3(0.0, 1.0, 0.0));
    let dz = d(v3(0.0, 0.0, 1.0));
    v3(dy.z - dz.y, dz.x - dx.z, dx.y - dy.x)
}

/// Central-difference divergence, second order in h.
pub fn fd_div(f: &dyn Fn(Vec3) -> Vec3, x: Vec3, h: f64) -> f64 {
    let d = |dir: Vec3| {
        let (a, b) = (f(x + dir.scale(h)), f(x - dir.scale(h)));
        (a - b).scale(0.5 / h)
    };
    d(v3(1.0, 0.0, 0.0)).x + d(v3(0.0, 1.0, 0.0)).y + d(v3(0.0, 0.0, 1.0)).z
}
