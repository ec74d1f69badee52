//! Transfer operators between consecutive virtual refinement levels.
//!
//! The edge prolongation entry P[e, E] is the path integral of the coarse
//! shape b_E along the fine edge e. Shapes are affine per element, so the
//! midpoint rule evaluates the integral exactly on the coarse element that
//! contains e: the fine element itself when it survives to the coarse level,
//! otherwise its parent. A coarse edge that survives yields an identity row;
//! a bisected one spreads weight 1/2 onto each half. Coupling into Dirichlet
//! fine dofs is exactly zero (active coarse shapes have vanishing tangential
//! trace there), so restricting rows to active dofs loses nothing. The nodal
//! companion map interpolates coarse hat functions at fine vertices.

use crate::error::Error;
use crate::mesh::{Mesh, TetId};
use crate::space::{edge_shape, DofMap};
use crate::sparse::CsrMatrix;
use crate::Result;

#[derive(Debug, Clone)]
pub struct Prolongation {
    /// Edge-coefficient map between active edge dofs, fine rows.
    pub p: CsrMatrix,
    /// Companion nodal map between active vertex dofs.
    pub q: CsrMatrix,
}

/// Weights below this are exact zeros up to roundoff; genuine prolongation
/// weights are 1/4 or larger.
const DROP: f64 = 1e-12;

fn host_in_coarse(m: &Mesh, coarse: &DofMap, k: TetId) -> Result<usize> {
    if let Ok(pos) = coarse.elems().binary_search(&k) {
        return Ok(pos);
    }
    if let Some(parent) = m.tet(k).parent {
        if let Ok(pos) = coarse.elems().binary_search(&parent) {
            return Ok(pos);
        }
    }
    Err(Error::InvalidMesh(format!(
        "element {k} has no host on the coarse level (hierarchy corruption)"
    )))
}

pub fn build_prolongation(m: &Mesh, coarse: &DofMap, fine: &DofMap) -> Result<Prolongation> {
    let edge_inc = fine.edge_incidence();
    let vert_inc = fine.vert_incidence();

    let mut p_trips = vec![];
    for dof in 0..fine.n_edge_dofs() {
        let (a, b) = fine.dof_edge(dof);
        let pos = fine.edge_pos((a, b)).expect("dof edge is indexed");
        let ef = *edge_inc[pos].first().ok_or_else(|| {
            Error::InvalidMesh(format!("edge ({a}, {b}) has no incident element"))
        })?;
        let host = host_in_coarse(m, coarse, fine.elems()[ef])?;
        let geom = m.tet_geom(coarse.elems()[host])?;
        let mid = m.vert(a).midpoint(m.vert(b));
        let dir = m.vert(b) - m.vert(a);
        for c in 0..6 {
            let (cpos, csign) = coarse.elem_edge(host, c);
            if let Some(cdof) = coarse.edge_dof_at(cpos) {
                let w = csign * edge_shape(&geom, c, mid).dot(dir);
                if w.abs() > DROP {
                    p_trips.push((dof, cdof, w));
                }
            }
        }
    }
    let p = CsrMatrix::from_triplets(fine.n_edge_dofs(), coarse.n_edge_dofs(), &p_trips)?;

    let mut q_trips = vec![];
    for dof in 0..fine.n_vert_dofs() {
        let v = fine.dof_vert(dof);
        let pos = fine.vert_pos(v).expect("dof vertex is indexed");
        let ef = *vert_inc[pos].first().ok_or_else(|| {
            Error::InvalidMesh(format!("vertex {v} has no incident element"))
        })?;
        let host = host_in_coarse(m, coarse, fine.elems()[ef])?;
        let geom = m.tet_geom(coarse.elems()[host])?;
        let lam = geom.barycentric(m.vert(v));
        for c in 0..4 {
            if let Some(cdof) = coarse.vert_dof_at(coarse.elem_vert_pos(host, c)) {
                if lam[c].abs() > DROP {
                    q_trips.push((dof, cdof, lam[c]));
                }
            }
        }
    }
    let q = CsrMatrix::from_triplets(fine.n_vert_dofs(), coarse.n_vert_dofs(), &q_trips)?;

    Ok(Prolongation { p, q })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble;
    use crate::geometry::{v3, Vec3};
    use crate::mesh::{lshape_mesh, unit_cube_mesh, virtual_hierarchy};
    use crate::space::{
        build_gradient_map, element_edge_coeffs, eval_edge_function, DofMap,
    };
    use crate::sparse::dot;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Locally refined L-shape with dof maps for the two finest virtual levels.
    fn two_level_setup() -> (Mesh, DofMap, DofMap) {
        let mut m = lshape_mesh();
        let leaves = m.leaf_ids();
        m.refine(&[leaves[0], leaves[7]]).unwrap();
        let h = virtual_hierarchy(&m).unwrap();
        let lmax = h.levels.len() - 1;
        let coarse = DofMap::new(&m, &h.levels[lmax - 1]).unwrap();
        let fine = DofMap::new(&m, &h.levels[lmax]).unwrap();
        (m, coarse, fine)
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

    #[test]
    fn surviving_edges_get_identity_rows() {
        let (m, coarse, fine) = two_level_setup();
        let pr = build_prolongation(&m, &coarse, &fine).unwrap();
        let mut checked = 0;
        for dof in 0..fine.n_edge_dofs() {
            let e = fine.dof_edge(dof);
            if let Some(cdof) = coarse.edge_dof(e) {
                let (cols, vals) = pr.p.row(dof);
                assert_eq!(cols, &[cdof], "surviving edge {e:?}");
                assert_relative_eq!(vals[0], 1.0, epsilon = 1e-12);
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn bisected_edges_split_into_halves() {
        let (m, coarse, fine) = two_level_setup();
        let pr = build_prolongation(&m, &coarse, &fine).unwrap();
        let mut checked = 0;
        for cdof in 0..coarse.n_edge_dofs() {
            let (p, q) = coarse.dof_edge(cdof);
            if fine.edge_pos((p, q)).is_some() {
                continue; // not bisected
            }
            // Find the midpoint vertex by coordinates.
            let mid = m.vert(p).midpoint(m.vert(q));
            let mut half_rows = 0;
            for dof in 0..fine.n_edge_dofs() {
                let (a, b) = fine.dof_edge(dof);
                let is_half = (a == p || a == q || b == p || b == q)
                    && ((m.vert(a) - mid).norm() < 1e-12 || (m.vert(b) - mid).norm() < 1e-12);
                if is_half {
                    let w = pr.p.get(dof, cdof);
                    assert_relative_eq!(w.abs(), 0.5, epsilon = 1e-12);
                    half_rows += 1;
                }
            }
            assert_eq!(half_rows, 2, "coarse edge ({p}, {q})");
            checked += 1;
        }
        assert!(checked > 0);
    }

    #[test]
    fn prolongated_function_matches_pointwise() {
        let (m, coarse, fine) = two_level_setup();
        let pr = build_prolongation(&m, &coarse, &fine).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let vc: Vec<f64> = (0..coarse.n_edge_dofs()).map(|_| rng.gen::<f64>() - 0.5).collect();
        let vf = pr.p.matvec(&vc);
        let coarse_set: std::collections::HashSet<TetId> =
            coarse.elems().iter().copied().collect();
        for _ in 0..30 {
            let ef = rng.gen_range(0..fine.n_elems());
            let kf = fine.elems()[ef];
            let mut host = kf;
            while !coarse_set.contains(&host) {
                host = m.tet(host).parent.expect("ancestor on coarse level");
            }
            let ec = coarse.elems().binary_search(&host).unwrap();
            let gf = m.tet_geom(kf).unwrap();
            let gc = m.tet_geom(host).unwrap();
            let x = gf.point(random_lambda(&mut rng));
            let uf = eval_edge_function(&gf, &element_edge_coeffs(&fine, ef, &vf, None), x);
            let uc = eval_edge_function(&gc, &element_edge_coeffs(&coarse, ec, &vc, None), x);
            assert!((uf - uc).norm() <= 1e-12 * (1.0 + uc.norm()));
        }
    }

    #[test]
    fn nodal_map_matches_pointwise() {
        let (m, coarse, fine) = two_level_setup();
        let pr = build_prolongation(&m, &coarse, &fine).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let vc: Vec<f64> = (0..coarse.n_vert_dofs()).map(|_| rng.gen::<f64>() - 0.5).collect();
        let vf = pr.q.matvec(&vc);
        let coarse_set: std::collections::HashSet<TetId> =
            coarse.elems().iter().copied().collect();
        let eval = |dm: &DofMap, e: usize, coeffs: &[f64], lam: [f64; 4]| -> f64 {
            (0..4)
                .map(|c| match dm.vert_dof_at(dm.elem_vert_pos(e, c)) {
                    Some(d) => coeffs[d] * lam[c],
                    None => 0.0,
                })
                .sum()
        };
        for _ in 0..30 {
            let ef = rng.gen_range(0..fine.n_elems());
            let kf = fine.elems()[ef];
            let mut host = kf;
            while !coarse_set.contains(&host) {
                host = m.tet(host).parent.expect("ancestor on coarse level");
            }
            let ec = coarse.elems().binary_search(&host).unwrap();
            let gf = m.tet_geom(kf).unwrap();
            let gc = m.tet_geom(host).unwrap();
            let lam_f = random_lambda(&mut rng);
            let x = gf.point(lam_f);
            let uf = eval(&fine, ef, &vf, lam_f);
            let uc = eval(&coarse, ec, &vc, gc.barycentric(x));
            assert_relative_eq!(uf, uc, epsilon = 1e-12, max_relative = 1e-11);
        }
    }

    #[test]
    fn transfer_commutes_with_gradient() {
        // P G_coarse = G_fine Q: prolongating a gradient gives the gradient
        // of the prolongated potential.
        let (m, coarse, fine) = two_level_setup();
        let pr = build_prolongation(&m, &coarse, &fine).unwrap();
        let gc = build_gradient_map(&coarse);
        let gf = build_gradient_map(&fine);
        let lhs = pr.p.matmul(&gc).unwrap();
        let rhs = gf.matmul(&pr.q).unwrap();
        assert!(lhs.frobenius_diff(&rhs) <= 1e-12 * (lhs.nnz() as f64).sqrt());
    }

    #[test]
    fn energy_identity_under_prolongation() {
        let (m, coarse, fine) = two_level_setup();
        let pr = build_prolongation(&m, &coarse, &fine).unwrap();
        let zero = |_: Vec3| v3(0.0, 0.0, 0.0);
        let sys_c = assemble(&m, &coarse, zero, None).unwrap();
        let sys_f = assemble(&m, &fine, zero, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..5 {
            let vc: Vec<f64> = (0..coarse.n_edge_dofs()).map(|_| rng.gen::<f64>() - 0.5).collect();
            let vf = pr.p.matvec(&vc);
            let ec = dot(&vc, &sys_c.a.matvec(&vc));
            let ef = dot(&vf, &sys_f.a.matvec(&vf));
            assert_relative_eq!(ec, ef, max_relative = 1e-12);
        }
    }

    #[test]
    fn missing_host_is_hierarchy_corruption() {
        let mut m = unit_cube_mesh();
        m.refine_all().unwrap();
        let fine = DofMap::for_leaves(&m).unwrap();
        // A "coarse" map holding a single original tet cannot host the fine
        // edges of the other five.
        let coarse = DofMap::new(&m, &[0]).unwrap();
        assert!(build_prolongation(&m, &coarse, &fine).is_err());
    }
}
