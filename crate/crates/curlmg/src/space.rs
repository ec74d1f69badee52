//! Lowest-order edge elements and nodal hat functions.
//!
//! A `DofMap` enumerates the edges and vertices of an element set (the leaf
//! mesh or any virtual refinement level), assigns dense dof indices to the
//! non-Dirichlet ones and keeps per-element sign tables. Edges carry the
//! canonical orientation low id -> high id; the local shape on a tet follows
//! local vertex order, so the per-element sign is -1 exactly when the two
//! orders disagree. Edge dofs are path integrals of the tangential component,
//! nodal dofs are point values, and the discrete gradient maps the latter
//! into the former so that interpolation commutes with differentiation.

use std::collections::{BTreeSet, HashMap};

use crate::error::Error;
use crate::geometry::{TetGeom, Vec3};
use crate::mesh::{sorted_pair, Mesh, MeshHierarchy, TetId, VertId, LOCAL_EDGES};
use crate::quadrature::{edge_path_integral, tet_deg5, tet_integrate};
use crate::sparse::{CsrMatrix, DenseCholesky};
use crate::Result;

#[derive(Debug, Clone)]
pub struct DofMap {
    /// Element ids of the underlying (virtual) mesh, ascending.
    elems: Vec<TetId>,
    /// All edges of the element set as canonical pairs, ascending.
    edges: Vec<(VertId, VertId)>,
    /// Dense dof index per edge position, None on the Dirichlet boundary.
    edge_dofs: Vec<Option<usize>>,
    /// Edge position per dof, ascending.
    dof_edges: Vec<usize>,
    edge_pos: HashMap<(VertId, VertId), usize>,
    /// All vertices of the element set, ascending.
    verts: Vec<VertId>,
    vert_dofs: Vec<Option<usize>>,
    dof_verts: Vec<usize>,
    vert_pos: HashMap<VertId, usize>,
    /// Per element: (edge position, orientation sign) for the six local edges.
    elem_edges: Vec<[(usize, f64); 6]>,
    /// Per element: vertex positions of the four local vertices.
    elem_verts: Vec<[usize; 4]>,
}

impl DofMap {
    /// Dof numbering over an element set. Edges and vertices are enumerated
    /// in ascending order; dense dof indices skip the Dirichlet ones, which
    /// are never assembled.
    pub fn new(m: &Mesh, elems: &[TetId]) -> Result<DofMap> {
        if elems.is_empty() {
            return Err(Error::precondition("empty element set"));
        }
        let mut elems = elems.to_vec();
        elems.sort_unstable();
        elems.dedup();
        if *elems.last().unwrap() >= m.n_tets() {
            return Err(Error::precondition(format!(
                "element id {} out of range",
                elems.last().unwrap()
            )));
        }

        let mut edge_set = BTreeSet::new();
        let mut vert_set = BTreeSet::new();
        for &k in &elems {
            let t = m.tet(k);
            for e in t.edges() {
                edge_set.insert(e);
            }
            for &v in &t.verts {
                vert_set.insert(v);
            }
        }
        let edges: Vec<(VertId, VertId)> = edge_set.into_iter().collect();
        let verts: Vec<VertId> = vert_set.into_iter().collect();

        let mut edge_dofs = Vec::with_capacity(edges.len());
        let mut dof_edges = vec![];
        for (pos, &e) in edges.iter().enumerate() {
            if m.is_dirichlet_edge(e) {
                edge_dofs.push(None);
            } else {
                edge_dofs.push(Some(dof_edges.len()));
                dof_edges.push(pos);
            }
        }
        let mut vert_dofs = Vec::with_capacity(verts.len());
        let mut dof_verts = vec![];
        for (pos, &v) in verts.iter().enumerate() {
            if m.is_dirichlet_vert(v) {
                vert_dofs.push(None);
            } else {
                vert_dofs.push(Some(dof_verts.len()));
                dof_verts.push(pos);
            }
        }
        let edge_pos: HashMap<_, _> = edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let vert_pos: HashMap<_, _> = verts.iter().enumerate().map(|(i, &v)| (v, i)).collect();

        let mut elem_edges = Vec::with_capacity(elems.len());
        let mut elem_verts = Vec::with_capacity(elems.len());
        for &k in &elems {
            let t = m.tet(k);
            let mut table = [(0usize, 0.0f64); 6];
            for (a, &(i, j)) in LOCAL_EDGES.iter().enumerate() {
                let (p, q) = (t.verts[i], t.verts[j]);
                let sign = if p < q { 1.0 } else { -1.0 };
                table[a] = (edge_pos[&sorted_pair(p, q)], sign);
            }
            elem_edges.push(table);
            elem_verts.push(t.verts.map(|v| vert_pos[&v]));
        }

        Ok(DofMap {
            elems,
            edges,
            edge_dofs,
            dof_edges,
            edge_pos,
            verts,
            vert_dofs,
            dof_verts,
            vert_pos,
            elem_edges,
            elem_verts,
        })
    }

    pub fn for_leaves(m: &Mesh) -> Result<DofMap> {
        DofMap::new(m, &m.leaf_ids())
    }

    pub fn elems(&self) -> &[TetId] {
        &self.elems
    }

    pub fn n_elems(&self) -> usize {
        self.elems.len()
    }

    /// All edges including Dirichlet ones.
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_edge_dofs(&self) -> usize {
        self.dof_edges.len()
    }

    pub fn n_verts(&self) -> usize {
        self.verts.len()
    }

    pub fn n_vert_dofs(&self) -> usize {
        self.dof_verts.len()
    }

    pub fn edge_at(&self, pos: usize) -> (VertId, VertId) {
        self.edges[pos]
    }

    pub fn vert_at(&self, pos: usize) -> VertId {
        self.verts[pos]
    }

    pub fn edge_pos(&self, e: (VertId, VertId)) -> Option<usize> {
        self.edge_pos.get(&sorted_pair(e.0, e.1)).copied()
    }

    pub fn vert_pos(&self, v: VertId) -> Option<usize> {
        self.vert_pos.get(&v).copied()
    }

    pub fn edge_dof_at(&self, pos: usize) -> Option<usize> {
        self.edge_dofs[pos]
    }

    pub fn vert_dof_at(&self, pos: usize) -> Option<usize> {
        self.vert_dofs[pos]
    }

    pub fn edge_dof(&self, e: (VertId, VertId)) -> Option<usize> {
        self.edge_pos(e).and_then(|p| self.edge_dofs[p])
    }

    pub fn vert_dof(&self, v: VertId) -> Option<usize> {
        self.vert_pos(v).and_then(|p| self.vert_dofs[p])
    }

    /// Canonical endpoints of the edge behind a dof.
    pub fn dof_edge(&self, dof: usize) -> (VertId, VertId) {
        self.edges[self.dof_edges[dof]]
    }

    pub fn dof_vert(&self, dof: usize) -> VertId {
        self.verts[self.dof_verts[dof]]
    }

    /// (edge position, orientation sign) of local edge `a` on element
    /// position `e`.
    pub fn elem_edge(&self, e: usize, a: usize) -> (usize, f64) {
        self.elem_edges[e][a]
    }

    pub fn elem_vert_pos(&self, e: usize, c: usize) -> usize {
        self.elem_verts[e][c]
    }

    /// Element positions incident to each edge position.
    pub fn edge_incidence(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![vec![]; self.edges.len()];
        for (e, table) in self.elem_edges.iter().enumerate() {
            for &(pos, _) in table {
                inc[pos].push(e);
            }
        }
        inc
    }

    /// Element positions incident to each vertex position.
    pub fn vert_incidence(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![vec![]; self.verts.len()];
        for (e, vs) in self.elem_verts.iter().enumerate() {
            for &pos in vs {
                inc[pos].push(e);
            }
        }
        inc
    }
}

/// Local edge shape lambda_i grad lambda_j - lambda_j grad lambda_i for the
/// local edge (i, j) in the tet's own vertex order.
pub fn edge_shape(geom: &TetGeom, local_edge: usize, x: Vec3) -> Vec3 {
    let (i, j) = LOCAL_EDGES[local_edge];
    let lam = geom.barycentric(x);
    geom.grads[j].scale(lam[i]) - geom.grads[i].scale(lam[j])
}

/// Curl of the local edge shape, constant per element:
/// 2 grad lambda_i x grad lambda_j.
pub fn curl_edge_shape(geom: &TetGeom, local_edge: usize) -> Vec3 {
    let (i, j) = LOCAL_EDGES[local_edge];
    geom.grads[i].cross(geom.grads[j]).scale(2.0)
}

/// Edge interpolation: one path integral of the tangential component per
/// active edge, along the canonical orientation.
pub fn edge_interpolate(
    m: &Mesh,
    dm: &DofMap,
    mut v: impl FnMut(Vec3) -> Vec3,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; dm.n_edge_dofs()];
    for (dof, &pos) in dm.dof_edges.iter().enumerate() {
        let (p, q) = dm.edges[pos];
        let c = edge_path_integral(m.vert(p), m.vert(q), &mut v);
        if !c.is_finite() {
            return Err(Error::Evaluation(format!(
                "non-finite edge integral on edge ({p}, {q})"
            )));
        }
        out[dof] = c;
    }
    Ok(out)
}

/// Nodal interpolation: point value per active vertex; Dirichlet vertices
/// are implicitly zero.
pub fn nodal_interpolate(m: &Mesh, dm: &DofMap, mut u: impl FnMut(Vec3) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; dm.n_vert_dofs()];
    for (dof, &pos) in dm.dof_verts.iter().enumerate() {
        out[dof] = u(m.vert(dm.verts[pos]));
    }
    out
}

/// Discrete gradient on the active spaces: the row of edge (p, q) carries +1
/// in the column of q and -1 in the column of p. Dirichlet endpoints have no
/// column; their zero coefficient drops out.
pub fn build_gradient_map(dm: &DofMap) -> CsrMatrix {
    let mut trips = vec![];
    for (dof, &pos) in dm.dof_edges.iter().enumerate() {
        let (p, q) = dm.edges[pos];
        if let Some(c) = dm.vert_dof(p) {
            trips.push((dof, c, -1.0));
        }
        if let Some(c) = dm.vert_dof(q) {
            trips.push((dof, c, 1.0));
        }
    }
    CsrMatrix::from_triplets(dm.n_edge_dofs(), dm.n_vert_dofs(), &trips)
        .expect("triplet indices in range")
}

/// Per-level smoothing sets: on level l >= 1 a dof of T_l is listed exactly
/// when every element of T_l containing it has generation l, so the basis
/// support lies inside the refinement zone. Level 0 lists every dof.
#[derive(Debug, Clone)]
pub struct LevelDofSets {
    /// Per level: edge dof indices into that level's DofMap, ascending.
    pub edge_sets: Vec<Vec<usize>>,
    /// Per level: vertex dof indices, ascending.
    pub vert_sets: Vec<Vec<usize>>,
}

pub fn level_dof_sets(m: &Mesh, h: &MeshHierarchy, dms: &[DofMap]) -> Result<LevelDofSets> {
    if dms.len() != h.levels.len() {
        return Err(Error::Dimension {
            what: "per-level dof maps",
            expected: h.levels.len(),
            got: dms.len(),
        });
    }
    let mut edge_sets = Vec::with_capacity(dms.len());
    let mut vert_sets = Vec::with_capacity(dms.len());
    for (l, dm) in dms.iter().enumerate() {
        if l == 0 {
            edge_sets.push((0..dm.n_edge_dofs()).collect());
            vert_sets.push((0..dm.n_vert_dofs()).collect());
            continue;
        }
        let fine: Vec<bool> = dm
            .elems
            .iter()
            .map(|&k| m.tet(k).level as usize == l)
            .collect();
        let einc = dm.edge_incidence();
        edge_sets.push(
            dm.dof_edges
                .iter()
                .enumerate()
                .filter(|&(_, &pos)| einc[pos].iter().all(|&e| fine[e]))
                .map(|(dof, _)| dof)
                .collect(),
        );
        let vinc = dm.vert_incidence();
        vert_sets.push(
            dm.dof_verts
                .iter()
                .enumerate()
                .filter(|&(_, &pos)| vinc[pos].iter().all(|&e| fine[e]))
                .map(|(dof, _)| dof)
                .collect(),
        );
    }
    Ok(LevelDofSets {
        edge_sets,
        vert_sets,
    })
}

/// Coefficients, in the barycentric basis, of the four functions dual to the
/// barycentric coordinates in L2 of the element: row j holds psi_j with
/// int_K psi_j lambda_i = delta_ij. Solves the 4x4 Gram system with entries
/// |K| (1 + delta_ij) / 20.
pub fn dual_basis(geom: &TetGeom) -> Result<[[f64; 4]; 4]> {
    let mut trips = vec![];
    for i in 0..4 {
        for j in 0..4 {
            let v = geom.volume * if i == j { 2.0 } else { 1.0 } / 20.0;
            trips.push((i, j, v));
        }
    }
    let gram = CsrMatrix::from_triplets(4, 4, &trips)?;
    let chol = DenseCholesky::new(&gram)?;
    let mut out = [[0.0; 4]; 4];
    for (j, row) in out.iter_mut().enumerate() {
        let mut e = [0.0; 4];
        e[j] = 1.0;
        let a = chol.solve(&e);
        row.copy_from_slice(&a);
    }
    Ok(out)
}

/// Default vertex -> element assignment for quasi-interpolation: the
/// coarsest incident element, ties broken by the smaller element id.
pub fn coarsest_neighbor_assignment(m: &Mesh, dm: &DofMap) -> Vec<TetId> {
    let vinc = dm.vert_incidence();
    dm.dof_verts
        .iter()
        .map(|&pos| {
            vinc[pos]
                .iter()
                .map(|&e| dm.elems[e])
                .min_by_key(|&k| (m.tet(k).level, k))
                .expect("vertex with no incident element")
        })
        .collect()
}

/// Shared core of the quasi-interpolation variants: coefficient at vertex p
/// is the integral of psi_p times the input over the assigned element.
fn dual_weighted_integrals(
    m: &Mesh,
    dm: &DofMap,
    assignment: &[TetId],
    mut value: impl FnMut(usize, Vec3, [f64; 4]) -> f64,
) -> Result<Vec<f64>> {
    if assignment.len() != dm.n_vert_dofs() {
        return Err(Error::Dimension {
            what: "vertex assignment",
            expected: dm.n_vert_dofs(),
            got: assignment.len(),
        });
    }
    let rule = tet_deg5();
    let mut out = vec![0.0; dm.n_vert_dofs()];
    for (dof, &pos) in dm.dof_verts.iter().enumerate() {
        let v = dm.verts[pos];
        let k = assignment[dof];
        let epos = dm.elems.binary_search(&k).map_err(|_| {
            Error::precondition(format!("assigned element {k} is not in the dof map"))
        })?;
        let t = m.tet(k);
        let Some(local) = t.verts.iter().position(|&w| w == v) else {
            return Err(Error::precondition(format!(
                "vertex {v} assigned to non-incident element {k}"
            )));
        };
        let geom = m.tet_geom(k)?;
        let dual = dual_basis(&geom)?;
        out[dof] = tet_integrate(&geom, rule, |x, lam| {
            let psi: f64 = (0..4).map(|c| dual[local][c] * lam[c]).sum();
            psi * value(epos, x, lam)
        });
    }
    Ok(out)
}

/// Quasi-interpolation of a scalar callable.
pub fn quasi_interpolate(
    m: &Mesh,
    dm: &DofMap,
    assignment: &[TetId],
    mut u: impl FnMut(Vec3) -> f64,
) -> Result<Vec<f64>> {
    dual_weighted_integrals(m, dm, assignment, |_, x, _| u(x))
}

/// Quasi-interpolation of a nodal finite-element function given by its
/// active coefficients (Dirichlet vertices are zero). A projection: feeding
/// a member of the space back in reproduces its coefficients.
pub fn quasi_interpolate_fe(
    m: &Mesh,
    dm: &DofMap,
    assignment: &[TetId],
    coeffs: &[f64],
) -> Result<Vec<f64>> {
    if coeffs.len() != dm.n_vert_dofs() {
        return Err(Error::Dimension {
            what: "nodal coefficients",
            expected: dm.n_vert_dofs(),
            got: coeffs.len(),
        });
    }
    dual_weighted_integrals(m, dm, assignment, |epos, _, lam| {
        (0..4)
            .map(|c| match dm.vert_dofs[dm.elem_verts[epos][c]] {
                Some(d) => coeffs[d] * lam[c],
                None => 0.0,
            })
            .sum()
    })
}

/// Signed local coefficients of an edge function on element position `e`:
/// entry a multiplies the local shape of edge a. Dirichlet edges take their
/// value from `lift` (zero without one).
pub fn element_edge_coeffs(
    dm: &DofMap,
    e: usize,
    coeffs: &[f64],
    lift: Option<&HashMap<(VertId, VertId), f64>>,
) -> [f64; 6] {
    let mut c = [0.0; 6];
    for (a, slot) in c.iter_mut().enumerate() {
        let (pos, sign) = dm.elem_edges[e][a];
        *slot = match dm.edge_dofs[pos] {
            Some(d) => sign * coeffs[d],
            None => sign * lift.and_then(|l| l.get(&dm.edges[pos]).copied()).unwrap_or(0.0),
        };
    }
    c
}

/// Value of the edge function with the given signed local coefficients.
pub fn eval_edge_function(geom: &TetGeom, local: &[f64; 6], x: Vec3) -> Vec3 {
    let mut u = Vec3::ZERO;
    for (a, &c) in local.iter().enumerate() {
        u += edge_shape(geom, a, x).scale(c);
    }
    u
}

/// Elementwise-constant curl of the edge function.
pub fn eval_edge_curl(geom: &TetGeom, local: &[f64; 6]) -> Vec3 {
    let mut w = Vec3::ZERO;
    for (a, &c) in local.iter().enumerate() {
        w += curl_edge_shape(geom, a).scale(c);
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::v3;
    use crate::mesh::{unit_cube_mesh, virtual_hierarchy};
    use crate::sparse::norm;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_tet(rng: &mut ChaCha8Rng) -> TetGeom {
        loop {
            let mut vs = [Vec3::ZERO; 4];
            for v in &mut vs {
                *v = v3(
                    rng.gen::<f64>() * 2.0 - 1.0,
                    rng.gen::<f64>() * 2.0 - 1.0,
                    rng.gen::<f64>() * 2.0 - 1.0,
                );
            }
            if let Ok(g) = TetGeom::new(vs) {
                if g.volume > 0.02 {
                    return g;
                }
            }
        }
    }

    fn random_lambda(rng: &mut ChaCha8Rng) -> [f64; 4] {
        let mut lam = [0.0; 4];
        let mut sum = 0.0;
        for l in &mut lam {
            *l = rng.gen::<f64>() + 0.05;
            sum += *l;
        }
        lam.map(|l| l / sum)
    }

    fn single_tet_mesh() -> Mesh {
        Mesh::from_cells(
            vec![
                v3(0.2, 0.1, -0.3),
                v3(1.4, 0.2, 0.1),
                v3(0.3, 1.2, 0.2),
                v3(0.1, 0.4, 1.5),
            ],
            &[[0, 1, 2, 3]],
            &[0],
        )
        .unwrap()
    }

    #[test]
    fn local_shapes_dual_to_path_integrals() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let g = random_tet(&mut rng);
            for a in 0..6 {
                for b in 0..6 {
                    let (i, j) = LOCAL_EDGES[b];
                    let val =
                        edge_path_integral(g.verts[i], g.verts[j], |x| edge_shape(&g, a, x));
                    let expect = if a == b { 1.0 } else { 0.0 };
                    assert_relative_eq!(val, expect, epsilon = 1e-13);
                }
            }
        }
    }

    #[test]
    fn curl_matches_difference_quotient() {
        // The shapes are affine, so central differences are exact up to
        // roundoff and give an oracle independent of the cross-product form.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g = random_tet(&mut rng);
        let x = g.centroid();
        let h = 1e-5;
        for a in 0..6 {
            let f = |p: Vec3| edge_shape(&g, a, p);
            let d = |e: Vec3| (f(x + e.scale(h)) - f(x - e.scale(h))).scale(1.0 / (2.0 * h));
            let (dx, dy, dz) = (d(v3(1.0, 0.0, 0.0)), d(v3(0.0, 1.0, 0.0)), d(v3(0.0, 0.0, 1.0)));
            let fd = v3(dy.z - dz.y, dz.x - dx.z, dx.y - dy.x);
            let c = curl_edge_shape(&g, a);
            assert!((fd - c).norm() <= 1e-7 * (1.0 + c.norm()), "edge {a}");
        }
    }

    #[test]
    fn cube_dof_counts() {
        let m = unit_cube_mesh();
        let dm = DofMap::for_leaves(&m).unwrap();
        // 12 cube edges + 6 face diagonals + 1 space diagonal.
        assert_eq!(dm.n_verts(), 8);
        assert_eq!(dm.n_edges(), 19);
        assert_eq!(dm.n_edge_dofs(), 19);
        assert_eq!(dm.n_vert_dofs(), 8);

        let mut md = unit_cube_mesh();
        md.mark_dirichlet_all();
        let dmd = DofMap::for_leaves(&md).unwrap();
        // Only the space diagonal misses the boundary.
        assert_eq!(dmd.n_edge_dofs(), 1);
        assert_eq!(dmd.n_vert_dofs(), 0);
    }

    #[test]
    fn dof_map_validates_inputs() {
        let m = unit_cube_mesh();
        assert!(DofMap::new(&m, &[]).is_err());
        assert!(DofMap::new(&m, &[99]).is_err());
    }

    #[test]
    fn interpolation_reproduces_constants() {
        let m = unit_cube_mesh();
        let dm = DofMap::for_leaves(&m).unwrap();
        let c = v3(0.4, -1.1, 0.7);
        let coeffs = edge_interpolate(&m, &dm, |_| c).unwrap();
        for (dof, &pos) in dm.dof_edges.iter().enumerate() {
            let (p, q) = dm.edges[pos];
            assert_relative_eq!(coeffs[dof], c.dot(m.vert(q) - m.vert(p)), epsilon = 1e-13);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for e in 0..dm.n_elems() {
            let geom = m.tet_geom(dm.elems()[e]).unwrap();
            let local = element_edge_coeffs(&dm, e, &coeffs, None);
            let x = geom.point(random_lambda(&mut rng));
            assert!((eval_edge_function(&geom, &local, x) - c).norm() < 1e-12);
        }
    }

    #[test]
    fn edge_dofs_of_rotational_field() {
        // v = (-y, x, 0)/2 has constant tangential component along straight
        // segments, so the dof has the closed form (a_x b_y - a_y b_x)/2.
        let m = single_tet_mesh();
        let dm = DofMap::for_leaves(&m).unwrap();
        let coeffs = edge_interpolate(&m, &dm, |p| v3(-p.y, p.x, 0.0).scale(0.5)).unwrap();
        for (dof, &pos) in dm.dof_edges.iter().enumerate() {
            let (p, q) = dm.edges[pos];
            let (a, b) = (m.vert(p), m.vert(q));
            assert_relative_eq!(coeffs[dof], (a.x * b.y - a.y * b.x) / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn non_finite_field_rejected() {
        let m = unit_cube_mesh();
        let dm = DofMap::for_leaves(&m).unwrap();
        let r = edge_interpolate(&m, &dm, |_| v3(f64::NAN, 0.0, 0.0));
        assert!(matches!(r, Err(Error::Evaluation(_))));
    }

    #[test]
    fn nodal_interpolation_basics() {
        let m = unit_cube_mesh();
        let dm = DofMap::for_leaves(&m).unwrap();
        let ones = nodal_interpolate(&m, &dm, |_| 1.0);
        assert_eq!(ones.len(), 8);
        assert!(ones.iter().all(|&v| v == 1.0));

        // Linears are reproduced exactly at arbitrary points.
        let u = |p: Vec3| 0.3 * p.x - 1.2 * p.y + 0.7 * p.z + 0.4;
        let coeffs = nodal_interpolate(&m, &dm, u);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for e in 0..dm.n_elems() {
            let geom = m.tet_geom(dm.elems()[e]).unwrap();
            let lam = random_lambda(&mut rng);
            let x = geom.point(lam);
            let val: f64 = (0..4)
                .map(|c| coeffs[dm.vert_dofs[dm.elem_verts[e][c]].unwrap()] * lam[c])
                .sum();
            assert_relative_eq!(val, u(x), epsilon = 1e-13);
        }
    }

    #[test]
    fn gradient_map_single_tet() {
        let m = single_tet_mesh();
        let dm = DofMap::for_leaves(&m).unwrap();
        let g = build_gradient_map(&dm);
        assert_eq!((g.nrows(), g.ncols()), (6, 4));
        for r in 0..6 {
            let (cols, vals) = g.row(r);
            assert_eq!(cols.len(), 2);
            assert_eq!(vals.iter().sum::<f64>(), 0.0);
            assert!(vals.iter().all(|v| v.abs() == 1.0));
        }
    }

    #[test]
    fn gradient_map_skips_dirichlet_columns() {
        let mut m = unit_cube_mesh();
        m.mark_dirichlet_all();
        m.refine_all().unwrap();
        let dm = DofMap::for_leaves(&m).unwrap();
        // One interior vertex (the diagonal midpoint), eight interior edges
        // reaching it from the Dirichlet corners.
        assert_eq!(dm.n_vert_dofs(), 1);
        assert_eq!(dm.n_edge_dofs(), 8);
        let g = build_gradient_map(&dm);
        for r in 0..8 {
            let (cols, vals) = g.row(r);
            assert_eq!(cols, &[0]);
            assert_eq!(vals, &[1.0]);
        }
    }

    #[test]
    fn commuting_diagram_for_smooth_potential() {
        let mut m = unit_cube_mesh();
        m.refine_all().unwrap();
        let leaves = m.leaf_ids();
        m.refine(&[leaves[0]]).unwrap();
        let dm = DofMap::for_leaves(&m).unwrap();
        let g = build_gradient_map(&dm);
        let u = |p: Vec3| p.x * p.x + p.y * p.z;
        let grad_u = |p: Vec3| v3(2.0 * p.x, p.z, p.y);
        let lhs = edge_interpolate(&m, &dm, grad_u).unwrap();
        let rhs = g.matvec(&nodal_interpolate(&m, &dm, u));
        let mut diff = lhs.clone();
        for (d, r) in diff.iter_mut().zip(&rhs) {
            *d -= r;
        }
        assert!(norm(&diff) <= 1e-12 * norm(&lhs).max(1.0));
    }

    #[test]
    fn nodal_partition_of_unity() {
        let mut m = unit_cube_mesh();
        m.refine_all().unwrap();
        let dm = DofMap::for_leaves(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let e = rng.gen_range(0..dm.n_elems());
            let lam = random_lambda(&mut rng);
            let s: f64 = (0..4)
                .filter(|&c| dm.vert_dofs[dm.elem_verts[e][c]].is_some())
                .map(|c| lam[c])
                .sum();
            assert_relative_eq!(s, 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn level_sets_full_under_uniform_refinement() {
        let mut m = unit_cube_mesh();
        m.refine_all().unwrap();
        m.refine_all().unwrap();
        let h = virtual_hierarchy(&m).unwrap();
        let dms: Vec<DofMap> = h
            .levels
            .iter()
            .map(|lvl| DofMap::new(&m, lvl).unwrap())
            .collect();
        let sets = level_dof_sets(&m, &h, &dms).unwrap();
        for l in 0..dms.len() {
            assert_eq!(sets.edge_sets[l].len(), dms[l].n_edge_dofs());
            assert_eq!(sets.vert_sets[l].len(), dms[l].n_vert_dofs());
        }
    }

    #[test]
    fn level_sets_respect_support_inclusion() {
        // One uniform round, then a local patch: the top level keeps coarse
        // elements, so its sets must shrink below the full dof counts.
        let mut m = unit_cube_mesh();
        m.refine_all().unwrap();
        let leaves = m.leaf_ids();
        m.refine(&[leaves[0]]).unwrap();
        let h = virtual_hierarchy(&m).unwrap();
        let dms: Vec<DofMap> = h
            .levels
            .iter()
            .map(|lvl| DofMap::new(&m, lvl).unwrap())
            .collect();
        let sets = level_dof_sets(&m, &h, &dms).unwrap();
        let lmax = dms.len() - 1;
        assert!(lmax >= 2);
        assert!(sets.edge_sets[lmax].len() < dms[lmax].n_edge_dofs());
        assert!(sets.vert_sets[lmax].len() < dms[lmax].n_vert_dofs());
        for l in 1..dms.len() {
            let dm = &dms[l];
            // Brute-force support scan straight off the mesh: every element
            // of T_l touching a listed dof must be of generation l.
            for &dof in &sets.edge_sets[l] {
                let (p, q) = dm.dof_edge(dof);
                for &k in &h.levels[l] {
                    let t = m.tet(k);
                    if t.verts.contains(&p) && t.verts.contains(&q) {
                        assert_eq!(t.level as usize, l);
                    }
                }
            }
            for &dof in &sets.vert_sets[l] {
                let v = dm.dof_vert(dof);
                for &k in &h.levels[l] {
                    if m.tet(k).verts.contains(&v) {
                        assert_eq!(m.tet(k).level as usize, l);
                    }
                }
            }
            // Excluded dofs must have a coarse incident element.
            let listed: std::collections::HashSet<usize> =
                sets.edge_sets[l].iter().copied().collect();
            for dof in 0..dm.n_edge_dofs() {
                if listed.contains(&dof) {
                    continue;
                }
                let (p, q) = dm.dof_edge(dof);
                let coarse = h.levels[l].iter().any(|&k| {
                    let t = m.tet(k);
                    t.verts.contains(&p) && t.verts.contains(&q) && (t.level as usize) < l
                });
                assert!(coarse, "edge dof {dof} excluded without coarse neighbor");
            }
        }
    }

    #[test]
    fn dual_basis_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let g = random_tet(&mut rng);
            let d = dual_basis(&g).unwrap();
            for j in 0..4 {
                for k in 0..4 {
                    let expect = if j == k { 16.0 } else { -4.0 } / g.volume;
                    assert_relative_eq!(d[j][k], expect, max_relative = 1e-10);
                }
            }
            for j in 0..4 {
                let psi = |lam: [f64; 4]| (0..4).map(|c| d[j][c] * lam[c]).sum::<f64>();
                // Duality against every barycentric coordinate.
                for i in 0..4 {
                    let v = tet_integrate(&g, tet_deg5(), |_, lam| psi(lam) * lam[i]);
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert_relative_eq!(v, expect, epsilon = 1e-12);
                }
                // Unit mean and a scale-free L2 norm.
                let mass = tet_integrate(&g, tet_deg5(), |_, lam| psi(lam));
                assert_relative_eq!(mass, 1.0, epsilon = 1e-11);
                let nsq = tet_integrate(&g, tet_deg5(), |_, lam| psi(lam) * psi(lam));
                assert_relative_eq!(g.volume * nsq, 16.0, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn quasi_interpolation_is_a_projection() {
        let mut m = unit_cube_mesh();
        m.refine_all().unwrap();
        let leaves = m.leaf_ids();
        m.refine(&[leaves[0], leaves[5]]).unwrap();
        let dm = DofMap::for_leaves(&m).unwrap();
        let assign = coarsest_neighbor_assignment(&m, &dm);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let coeffs: Vec<f64> = (0..dm.n_vert_dofs()).map(|_| rng.gen::<f64>() - 0.5).collect();
        let q = quasi_interpolate_fe(&m, &dm, &assign, &coeffs).unwrap();
        for (qi, ci) in q.iter().zip(&coeffs) {
            assert_relative_eq!(qi, ci, epsilon = 1e-12, max_relative = 1e-10);
        }
    }

    #[test]
    fn quasi_interpolation_of_one() {
        let m = unit_cube_mesh();
        let dm = DofMap::for_leaves(&m).unwrap();
        let assign = coarsest_neighbor_assignment(&m, &dm);
        let q = quasi_interpolate(&m, &dm, &assign, |_| 1.0).unwrap();
        for qi in q {
            assert_relative_eq!(qi, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn quasi_interpolation_validates_assignment() {
        let m = unit_cube_mesh();
        let dm = DofMap::for_leaves(&m).unwrap();
        let mut assign = coarsest_neighbor_assignment(&m, &dm);
        // Some vertex has a non-incident element (the two diagonal corners
        // are in every Kuhn tet, the others are not).
        let (dof, bad) = (0..dm.n_vert_dofs())
            .find_map(|dof| {
                let v = dm.dof_vert(dof);
                (0..m.n_tets())
                    .find(|&k| !m.tet(k).verts.contains(&v))
                    .map(|k| (dof, k))
            })
            .unwrap();
        assign[dof] = bad;
        assert!(quasi_interpolate(&m, &dm, &assign, |_| 1.0).is_err());
    }

    #[test]
    fn assignment_prefers_coarsest_incident_element() {
        let mut m = unit_cube_mesh();
        let leaves = m.leaf_ids();
        m.refine(&[leaves[0]]).unwrap();
        let dm = DofMap::for_leaves(&m).unwrap();
        let assign = coarsest_neighbor_assignment(&m, &dm);
        for (dof, &k) in assign.iter().enumerate() {
            let v = dm.dof_vert(dof);
            assert!(m.tet(k).verts.contains(&v));
            let best = m
                .leaf_ids()
                .into_iter()
                .filter(|&t| m.tet(t).verts.contains(&v))
                .min_by_key(|&t| (m.tet(t).level, t))
                .unwrap();
            assert_eq!(k, best);
        }
    }

    #[test]
    fn quasi_interpolation_l2_stability() {
        let mut m = unit_cube_mesh();
        m.refine_all().unwrap();
        let leaves = m.leaf_ids();
        m.refine(&[leaves[0]]).unwrap();
        m.refine_all().unwrap();
        let dm = DofMap::for_leaves(&m).unwrap();
        let assign = coarsest_neighbor_assignment(&m, &dm);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            // Random piecewise quadratic in the barycentric monomials.
            let per_elem: Vec<[f64; 10]> = (0..dm.n_elems())
                .map(|_| std::array::from_fn(|_| rng.gen::<f64>() - 0.5))
                .collect();
            let value = |epos: usize, lam: [f64; 4]| {
                let c = &per_elem[epos];
                let mut idx = 0;
                let mut s = 0.0;
                for i in 0..4 {
                    for j in i..4 {
                        s += c[idx] * lam[i] * lam[j];
                        idx += 1;
                    }
                }
                s
            };
            let q = dual_weighted_integrals(&m, &dm, &assign, |e, _, lam| value(e, lam)).unwrap();
            let mut qnorm2 = 0.0;
            let mut unorm2 = 0.0;
            for (epos, &k) in dm.elems().iter().enumerate() {
                let geom = m.tet_geom(k).unwrap();
                qnorm2 += tet_integrate(&geom, tet_deg5(), |_, lam| {
                    let v: f64 = (0..4)
                        .map(|c| match dm.vert_dofs[dm.elem_verts[epos][c]] {
                            Some(d) => q[d] * lam[c],
                            None => 0.0,
                        })
                        .sum();
                    v * v
                });
                unorm2 += tet_integrate(&geom, tet_deg5(), |_, lam| {
                    let v = value(epos, lam);
                    v * v
                });
            }
            worst = worst.max((qnorm2 / unorm2).sqrt());
        }
        assert!(worst <= 10.0, "measured L2 stability constant {worst}");
    }
}
