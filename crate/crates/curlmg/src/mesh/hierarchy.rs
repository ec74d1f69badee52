//! Virtual refinement hierarchy.
//!
//! The forest induces, for every l, the virtual mesh
//!   T_l = { K : ell(K) <= l and K has no strict descendant of level <= l },
//! which concretely is "interior nodes of level exactly l plus leaves of
//! level at most l". These meshes are conforming and nested, and T_L equals
//! the current leaf set. The refinement zone omega_l collects the finest
//! leaves of level >= l; smoothing on level l is confined to it.

use crate::error::Error;
use crate::Result;

use super::{Mesh, TetId};

pub type VirtualLevel = Vec<TetId>;

#[derive(Debug, Clone)]
pub struct MeshHierarchy {
    /// levels[l] = element ids of the virtual mesh T_l, ascending.
    pub levels: Vec<VirtualLevel>,
    /// zones[l] = finest-mesh leaves K with ell(K) >= l, ascending.
    pub zones: Vec<Vec<TetId>>,
    /// Geometric-mean decay of the per-level meshwidth, h_{l+1} ~ theta_hat h_l.
    pub theta_hat: f64,
}

impl MeshHierarchy {
    pub fn max_level(&self) -> usize {
        self.levels.len() - 1
    }
}

/// Extract the virtual hierarchy from the refinement forest. Each level is
/// checked for conformity before it is returned.
pub fn virtual_hierarchy(m: &Mesh) -> Result<MeshHierarchy> {
    let max_level = m.max_leaf_level() as usize;
    let mut levels = Vec::with_capacity(max_level + 1);
    for l in 0..=max_level {
        let lvl: Vec<TetId> = (0..m.n_tets())
            .filter(|&k| {
                let t = m.tet(k);
                if t.is_leaf() {
                    (t.level as usize) <= l
                } else {
                    (t.level as usize) == l
                }
            })
            .collect();
        m.check_conformity_of(&lvl)?;
        levels.push(lvl);
    }

    let leaves = m.leaf_ids();
    debug_assert_eq!(levels[max_level], leaves);

    let mut zones = Vec::with_capacity(max_level + 1);
    for l in 0..=max_level {
        zones.push(
            leaves
                .iter()
                .copied()
                .filter(|&k| (m.tet(k).level as usize) >= l)
                .collect(),
        );
    }

    // Meshwidth per generation, over all forest tets of that level; the
    // ratio estimates the quasi-uniform decay factor (2^(-1/3) for exact
    // halving every third bisection).
    let mut h = vec![0.0f64; max_level + 1];
    for k in 0..m.n_tets() {
        let lvl = m.tet(k).level as usize;
        if lvl <= max_level {
            let g = m.tet_geom(k)?;
            h[lvl] = h[lvl].max(g.diameter());
        }
    }
    let theta_hat = if max_level == 0 {
        1.0
    } else {
        let mean_log: f64 = (0..max_level)
            .map(|l| (h[l + 1] / h[l]).ln())
            .sum::<f64>()
            / max_level as f64;
        mean_log.exp()
    };

    Ok(MeshHierarchy {
        levels,
        zones,
        theta_hat,
    })
}

/// The refinement zone of level l as a set of finest-mesh leaves.
pub fn refinement_zone<'a>(h: &'a MeshHierarchy, l: usize) -> Result<&'a [TetId]> {
    h.zones
        .get(l)
        .map(|z| z.as_slice())
        .ok_or_else(|| Error::precondition(format!("level {l} > max level {}", h.max_level())))
}

/// Nesting check: every element of T_{l+1} must be the element itself or a
/// descendant of an element of T_l.
pub fn check_nesting(m: &Mesh, h: &MeshHierarchy) -> Result<()> {
    use std::collections::HashSet;
    for l in 0..h.max_level() {
        let coarse: HashSet<TetId> = h.levels[l].iter().copied().collect();
        for &k in &h.levels[l + 1] {
            let mut cur = Some(k);
            let mut found = false;
            while let Some(c) = cur {
                if coarse.contains(&c) {
                    found = true;
                    break;
                }
                cur = m.tet(c).parent;
            }
            if !found {
                return Err(Error::InvalidMesh(format!(
                    "element {k} of level {} has no ancestor in level {}",
                    l + 1,
                    l
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{lshape_mesh, unit_cube_mesh};

    #[test]
    fn uniform_refinement_two_levels() {
        let mut m = unit_cube_mesh();
        m.refine_all().unwrap();
        let h = virtual_hierarchy(&m).unwrap();
        assert_eq!(h.levels.len(), 2);
        assert_eq!(h.levels[0].len(), 6);
        assert_eq!(h.levels[1], m.leaf_ids());
        assert_eq!(h.zones[0].len(), m.n_leaves());
        assert_eq!(h.zones[1].len(), m.n_leaves());
        check_nesting(&m, &h).unwrap();
    }

    #[test]
    fn max_level_matches_leaves() {
        let mut m = lshape_mesh();
        m.refine_all().unwrap();
        let leaves = m.leaf_ids();
        m.refine(&[leaves[0]]).unwrap();
        let h = virtual_hierarchy(&m).unwrap();
        assert_eq!(h.max_level(), m.max_leaf_level() as usize);
    }

    #[test]
    fn local_refinement_keeps_coarse_region() {
        // Refine around a single leaf; away from it the virtual level 1 must
        // consist of level-0 elements (the original ones).
        let mut m = lshape_mesh();
        let leaves = m.leaf_ids();
        m.refine(&[leaves[0]]).unwrap();
        let h = virtual_hierarchy(&m).unwrap();
        // T_1 = leaves here (max level is 1). Every element of T_1 that is
        // not level 1 must be one of the original level-0 tets.
        for &k in &h.levels[1] {
            let t = m.tet(k);
            assert!(t.level <= 1);
            if t.level == 0 {
                assert!(k < 36, "level-0 members must be original tets");
            }
        }
        // Zone 1 = exactly the leaves that were created by refinement.
        for &k in &h.zones[1] {
            assert_eq!(m.tet(k).level, 1);
        }
        assert!(h.zones[1].len() < h.zones[0].len());
        check_nesting(&m, &h).unwrap();
    }

    #[test]
    fn zones_are_nested() {
        let mut m = lshape_mesh();
        for _ in 0..4 {
            let leaves = m.leaf_ids();
            m.refine(&[leaves[0], leaves[1]]).unwrap();
        }
        let h = virtual_hierarchy(&m).unwrap();
        for l in 0..h.max_level() {
            let finer: std::collections::HashSet<_> = h.zones[l + 1].iter().collect();
            let coarser: std::collections::HashSet<_> = h.zones[l].iter().collect();
            assert!(finer.is_subset(&coarser));
        }
        assert_eq!(h.zones[0], m.leaf_ids());
    }

    #[test]
    fn level_membership_bound() {
        let mut m = unit_cube_mesh();
        for _ in 0..2 {
            m.refine_all().unwrap();
        }
        let leaves = m.leaf_ids();
        m.refine(&[leaves[0]]).unwrap();
        let h = virtual_hierarchy(&m).unwrap();
        for (l, lvl) in h.levels.iter().enumerate() {
            for &k in lvl {
                assert!((m.tet(k).level as usize) <= l);
            }
            m.check_level_relations(lvl).unwrap();
        }
    }

    #[test]
    fn refinement_zone_bounds_checked() {
        let m = unit_cube_mesh();
        let h = virtual_hierarchy(&m).unwrap();
        assert!(refinement_zone(&h, 0).is_ok());
        assert!(refinement_zone(&h, 1).is_err());
    }

    #[test]
    fn theta_hat_near_bisection_rate() {
        let mut m = unit_cube_mesh();
        for _ in 0..6 {
            m.refine_all().unwrap();
        }
        let h = virtual_hierarchy(&m).unwrap();
        // Halving the meshwidth every 3 bisection generations gives a mean
        // decay of 2^(-1/3) ~ 0.794 in the geometric mean.
        assert!(h.theta_hat > 0.6 && h.theta_hat < 0.95, "theta_hat = {}", h.theta_hat);
    }
}
