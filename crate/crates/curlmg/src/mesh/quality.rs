//! Shape regularity statistics. Bisection with the typed renumbering only
//! produces finitely many tet shapes up to scaling, so the maximum of
//! rho_K = diam(K) / inradius(K) stays bounded no matter how deep the
//! refinement goes; `similarity_classes` measures the shape census.

use std::collections::BTreeSet;

use crate::Result;

use super::{Mesh, TetId};

#[derive(Debug, Clone)]
pub struct QualityReport {
    pub max_ratio: f64,
    pub min_ratio: f64,
    pub h_max: f64,
    pub h_min: f64,
    /// (leaf id, diameter h_K, shape ratio rho_K)
    pub per_leaf: Vec<(TetId, f64, f64)>,
}

pub fn mesh_quality(m: &Mesh) -> Result<QualityReport> {
    let mut per_leaf = vec![];
    let (mut max_ratio, mut min_ratio) = (0.0f64, f64::INFINITY);
    let (mut h_max, mut h_min) = (0.0f64, f64::INFINITY);
    for k in m.leaf_ids() {
        let g = m.tet_geom(k)?;
        let h = g.diameter();
        let rho = g.shape_ratio();
        max_ratio = max_ratio.max(rho);
        min_ratio = min_ratio.min(rho);
        h_max = h_max.max(h);
        h_min = h_min.min(h);
        per_leaf.push((k, h, rho));
    }
    Ok(QualityReport {
        max_ratio,
        min_ratio,
        h_max,
        h_min,
        per_leaf,
    })
}

/// Number of distinct leaf shapes up to scaling (and congruence), measured
/// by a rounded fingerprint of normalized edge lengths, face areas and
/// volume.
pub fn similarity_classes(m: &Mesh) -> Result<usize> {
    let mut classes: BTreeSet<Vec<i64>> = BTreeSet::new();
    for k in m.leaf_ids() {
        let g = m.tet_geom(k)?;
        let d = g.diameter();
        let mut edges: Vec<f64> = (0..4)
            .flat_map(|i| ((i + 1)..4).map(move |j| (i, j)))
            .map(|(i, j)| (g.verts[i] - g.verts[j]).norm() / d)
            .collect();
        edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut areas: Vec<f64> = (0..4)
            .map(|f| {
                let idx: Vec<usize> = (0..4).filter(|&i| i != f).collect();
                crate::geometry::triangle_area(g.verts[idx[0]], g.verts[idx[1]], g.verts[idx[2]])
                    / (d * d)
            })
            .collect();
        areas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut key: Vec<i64> = edges.iter().map(|&x| (x * 1e9).round() as i64).collect();
        key.extend(areas.iter().map(|&x| (x * 1e9).round() as i64));
        key.push((g.volume / d.powi(3) * 1e9).round() as i64);
        classes.insert(key);
    }
    Ok(classes.len())
}
