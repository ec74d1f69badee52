//! Residual error estimator for the curl-curl-plus-identity system.
//!
//! Per element,
//!   eta_T^2 = h_T^2 (||f - u_h||_T^2 + ||div f||_T^2)
//!           + (h_T / 2) sum over interior faces of
//!             (||[u_h]||_F^2 + ||[curl u_h x n]||_F^2),
//! where the discrete field is divergence free on every element and its
//! element curls are constant, so the strong volume residual reduces to the
//! two terms above. Face jumps are taken between the two adjacent element
//! restrictions; tangential continuity of the space means the first jump
//! carries only the normal mismatch. Each element weights the shared face
//! integral with its own diameter.

use std::collections::{BTreeMap, HashMap};

use crate::error::Error;
use crate::geometry::{triangle_normal, Vec3};
use crate::mesh::{Mesh, TetId, VertId};
use crate::quadrature::{tet_deg4, tri_deg4, tet_integrate, tri_integrate};
use crate::space::{element_edge_coeffs, eval_edge_curl, eval_edge_function, DofMap};
use crate::Result;

#[derive(Debug, Clone)]
pub struct EstimatorReport {
    /// eta_T per element, aligned with the dof map's element order.
    pub eta: Vec<f64>,
    /// Global value, the root of the sum of squares.
    pub eta_h: f64,
    pub eta_max: f64,
}

/// Evaluate the estimator for the discrete field given by `coeffs` (plus an
/// optional boundary lift) under load `f`. The divergence of the load enters
/// the volume residual and must be supplied; pass `Some(&mut |_| 0.0)` for a
/// divergence-free load.
pub fn estimate(
    m: &Mesh,
    dm: &DofMap,
    coeffs: &[f64],
    lift: Option<&HashMap<(VertId, VertId), f64>>,
    mut f: impl FnMut(Vec3) -> Vec3,
    div_f: Option<&mut dyn FnMut(Vec3) -> f64>,
) -> Result<EstimatorReport> {
    let div_f = div_f.ok_or_else(|| {
        Error::Config("the volume residual needs div f; pass the load divergence".into())
    })?;
    if coeffs.len() != dm.n_edge_dofs() {
        return Err(Error::Dimension {
            what: "coefficient vector",
            expected: dm.n_edge_dofs(),
            got: coeffs.len(),
        });
    }

    let ne = dm.n_elems();
    let mut locals = Vec::with_capacity(ne);
    let mut geoms = Vec::with_capacity(ne);
    for e in 0..ne {
        locals.push(element_edge_coeffs(dm, e, coeffs, lift));
        geoms.push(m.tet_geom(dm.elems()[e])?);
    }

    let mut eta_sq = vec![0.0; ne];
    for e in 0..ne {
        let geom = &geoms[e];
        let local = &locals[e];
        let h = geom.diameter();
        let vol = tet_integrate(geom, tet_deg4(), |x, _| {
            let r = f(x) - eval_edge_function(geom, local, x);
            r.dot(r) + div_f(x).powi(2)
        });
        eta_sq[e] = h * h * vol;
    }

    // Pair interior faces through their sorted vertex triples. The ordered
    // map fixes the accumulation order, keeping results bitwise reproducible.
    let mut by_face: BTreeMap<[VertId; 3], Vec<usize>> = BTreeMap::new();
    for e in 0..ne {
        let t = m.tet(dm.elems()[e]);
        for fl in 0..4 {
            by_face.entry(t.face(fl)).or_default().push(e);
        }
    }
    for (face, elems) in &by_face {
        let [e1, e2] = match elems.as_slice() {
            [a, b] => [*a, *b],
            [_] => continue, // boundary face
            _ => {
                return Err(Error::InvalidMesh(format!(
                    "face {face:?} is shared by {} elements",
                    elems.len()
                )))
            }
        };
        let (a, b, c) = (m.vert(face[0]), m.vert(face[1]), m.vert(face[2]));
        let nu = triangle_normal(a, b, c);
        let (g1, l1) = (&geoms[e1], &locals[e1]);
        let (g2, l2) = (&geoms[e2], &locals[e2]);
        let jump_u = tri_integrate(a, b, c, tri_deg4(), |x| {
            let d = eval_edge_function(g1, l1, x) - eval_edge_function(g2, l2, x);
            d.dot(d)
        });
        let curl_jump = (eval_edge_curl(g1, l1) - eval_edge_curl(g2, l2)).cross(nu);
        let jump_c = tri_integrate(a, b, c, tri_deg4(), |_| curl_jump.dot(curl_jump));
        let face_sq = jump_u + jump_c;
        eta_sq[e1] += 0.5 * geoms[e1].diameter() * face_sq;
        eta_sq[e2] += 0.5 * geoms[e2].diameter() * face_sq;
    }

    let eta: Vec<f64> = eta_sq.iter().map(|s| s.max(0.0).sqrt()).collect();
    let eta_h = eta_sq.iter().sum::<f64>().max(0.0).sqrt();
    let eta_max = eta.iter().cloned().fold(0.0, f64::max);
    Ok(EstimatorReport { eta, eta_h, eta_max })
}

/// Maximum marking: select every element whose indicator reaches the fraction
/// `theta` of the largest one. The maximizer itself always qualifies, so the
/// selection is only empty when every indicator vanishes.
pub fn mark(dm: &DofMap, report: &EstimatorReport, theta: f64) -> Result<Vec<TetId>> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::Config(format!(
            "marking fraction must lie in [0, 1], got {theta}"
        )));
    }
    if report.eta.len() != dm.n_elems() {
        return Err(Error::Dimension {
            what: "estimator report",
            expected: dm.n_elems(),
            got: report.eta.len(),
        });
    }
    if report.eta_max == 0.0 {
        return Ok(vec![]);
    }
    let cut = theta * report.eta_max;
    Ok((0..dm.n_elems())
        .filter(|&e| report.eta[e] >= cut)
        .map(|e| dm.elems()[e])
        .collect())
}
