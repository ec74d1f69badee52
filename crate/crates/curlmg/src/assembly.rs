//! Global assembly of the energy form (curl u, curl v) + (u, v) on the edge
//! space, the load functional, and Dirichlet elimination.
//!
//! Element matrices are closed forms: both integrands are polynomials of
//! degree two in the barycentric coordinates, so their moments reduce to
//! int_K lambda_a lambda_b = |K| (1 + delta_ab) / 20. Dirichlet dofs are
//! never enumerated; inhomogeneous boundary data enters as a lift whose
//! element couplings move to the right-hand side.

use std::collections::HashMap;

use crate::error::Error;
use crate::geometry::TetGeom;
use crate::geometry::Vec3;
use crate::mesh::{Mesh, VertId, LOCAL_EDGES};
use crate::quadrature::tet_deg4;
use crate::space::DofMap;
use crate::sparse::CsrMatrix;
use crate::Result;

#[derive(Debug, Clone)]
pub struct AssembledSystem {
    /// Curl-curl part, positive semi-definite with the gradients in its kernel.
    pub a_curl: CsrMatrix,
    /// Mass part.
    pub mass: CsrMatrix,
    /// Full operator a_curl + mass, symmetric positive definite.
    pub a: CsrMatrix,
    /// Load vector, including any Dirichlet lift contributions.
    pub b: Vec<f64>,
    pub n_dofs: usize,
}

/// Closed-form (curl-curl, mass) element matrices in local edge order.
pub fn element_matrices(geom: &TetGeom) -> ([[f64; 6]; 6], [[f64; 6]; 6]) {
    let g = &geom.grads;
    let vol = geom.volume;
    // S[a][b] = int_K lambda_a lambda_b.
    let s = |a: usize, b: usize| vol * if a == b { 2.0 } else { 1.0 } / 20.0;
    let mut curl = [[0.0; 6]; 6];
    let mut mass = [[0.0; 6]; 6];
    for a in 0..6 {
        let (i, j) = LOCAL_EDGES[a];
        let ca = g[i].cross(g[j]);
        for b in 0..6 {
            let (k, l) = LOCAL_EDGES[b];
            curl[a][b] = 4.0 * vol * ca.dot(g[k].cross(g[l]));
            mass[a][b] = g[j].dot(g[l]) * s(i, k) - g[j].dot(g[k]) * s(i, l)
                - g[i].dot(g[l]) * s(j, k)
                + g[i].dot(g[k]) * s(j, l);
        }
    }
    (curl, mass)
}

/// Assemble the operator blocks and the load vector over the dof map's
/// element set. `lift` supplies edge coefficients of the boundary data on
/// Dirichlet edges (canonical orientation); their couplings are subtracted
/// from the load so the system stays on the active dofs only.
pub fn assemble(
    m: &Mesh,
    dm: &DofMap,
    mut f: impl FnMut(Vec3) -> Vec3,
    lift: Option<&HashMap<(VertId, VertId), f64>>,
) -> Result<AssembledSystem> {
    let n = dm.n_edge_dofs();
    let mut curl_trips = vec![];
    let mut mass_trips = vec![];
    let mut b = vec![0.0; n];
    let rule = tet_deg4();

    for e in 0..dm.n_elems() {
        let k = dm.elems()[e];
        let geom = m.tet_geom(k)?;
        let (ce, me) = element_matrices(&geom);

        let local: [(Option<usize>, f64); 6] = std::array::from_fn(|a| {
            let (pos, sign) = dm.elem_edge(e, a);
            (dm.edge_dof_at(pos), sign)
        });

        for a in 0..6 {
            let Some(ra) = local[a].0 else { continue };
            let sa = local[a].1;
            for c in 0..6 {
                let sac = sa * local[c].1;
                match local[c].0 {
                    Some(rc) => {
                        curl_trips.push((ra, rc, sac * ce[a][c]));
                        mass_trips.push((ra, rc, sac * me[a][c]));
                    }
                    None => {
                        if let Some(lift) = lift {
                            let (pos, _) = dm.elem_edge(e, c);
                            if let Some(&gc) = lift.get(&dm.edge_at(pos)) {
                                b[ra] -= sac * (ce[a][c] + me[a][c]) * gc;
                            }
                        }
                    }
                }
            }
        }

        // Load: degree-4 rule, one field evaluation per quadrature point.
        let mut load = [0.0; 6];
        for q in rule {
            let x = geom.point(q.lambda);
            let fx = f(x);
            if !(fx.x.is_finite() && fx.y.is_finite() && fx.z.is_finite()) {
                return Err(Error::Evaluation(format!(
                    "non-finite load sample at ({:.3}, {:.3}, {:.3})",
                    x.x, x.y, x.z
                )));
            }
            for a in 0..6 {
                let (i, j) = LOCAL_EDGES[a];
                let shape =
                    geom.grads[j].scale(q.lambda[i]) - geom.grads[i].scale(q.lambda[j]);
                load[a] += q.weight * fx.dot(shape);
            }
        }
        for a in 0..6 {
            if let Some(ra) = local[a].0 {
                b[ra] += geom.volume * local[a].1 * load[a];
            }
        }
    }

    let a_curl = CsrMatrix::from_triplets(n, n, &curl_trips)?;
    let mass = CsrMatrix::from_triplets(n, n, &mass_trips)?;
    curl_trips.extend_from_slice(&mass_trips);
    let a = CsrMatrix::from_triplets(n, n, &curl_trips)?;
    Ok(AssembledSystem {
        a_curl,
        mass,
        a,
        b,
        n_dofs: n,
    })
}

/// Nodal operator for the potential-space corrections: G^T A G. The
/// curl-curl block annihilates gradients, so this equals G^T M G.
pub fn assemble_nodal_laplacian(a: &CsrMatrix, g: &CsrMatrix) -> Result<CsrMatrix> {
    if a.ncols() != g.nrows() {
        return Err(Error::Dimension {
            what: "gradient map rows",
            expected: a.ncols(),
            got: g.nrows(),
        });
    }
    CsrMatrix::galerkin(a, g)
}
