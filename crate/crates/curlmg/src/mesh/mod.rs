//! Tetrahedral bisection forest.
//!
//! Refinement follows the recursive bisection scheme with typed tets: the
//! refinement edge is always the edge between local vertices 0 and 1, the
//! midpoint becomes local vertex 3 of both children, and child types cycle
//! through (type + 1) mod 3. An edge is only ever bisected when it is the
//! refinement edge of every leaf sharing it; `refine` enforces this by
//! recursively refining incompatible patch members first. The full forest is
//! kept so virtual refinement levels can be reconstructed afterwards.

mod cube;
mod hierarchy;
mod io;
mod quality;

pub use cube::{crack_mesh, cube_complex, lshape_mesh, unit_cube_mesh};
pub use hierarchy::{check_nesting, refinement_zone, virtual_hierarchy, MeshHierarchy, VirtualLevel};
pub use io::{read_ascii, write_ascii};
pub use quality::{mesh_quality, similarity_classes, QualityReport};

use std::collections::{HashMap, HashSet};

use crate::error::Error;
use crate::geometry::{signed_volume6, TetGeom, Vec3};
use crate::Result;

pub type VertId = usize;
pub type TetId = usize;

/// Local edges of a tet in the fixed enumeration order used everywhere.
pub const LOCAL_EDGES: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Local face f is the face opposite local vertex f.
pub const LOCAL_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

pub fn sorted_pair(a: VertId, b: VertId) -> (VertId, VertId) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

pub fn sorted_tri(mut t: [VertId; 3]) -> [VertId; 3] {
    t.sort_unstable();
    t
}

#[derive(Debug, Clone)]
pub struct Tet {
    /// Vertex ids in local order; the refinement edge is (verts[0], verts[1]).
    pub verts: [VertId; 4],
    /// Bisection type in {0, 1, 2}.
    pub kind: u8,
    /// Generation counter ell(K); children are one level finer.
    pub level: u32,
    pub parent: Option<TetId>,
    pub children: Option<[TetId; 2]>,
}

impl Tet {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    /// Refinement edge as a canonically ordered vertex pair.
    pub fn refinement_edge(&self) -> (VertId, VertId) {
        sorted_pair(self.verts[0], self.verts[1])
    }

    /// The six edges in local enumeration order, canonically ordered pairs.
    pub fn edges(&self) -> [(VertId, VertId); 6] {
        LOCAL_EDGES.map(|(i, j)| sorted_pair(self.verts[i], self.verts[j]))
    }

    pub fn face(&self, f: usize) -> [VertId; 3] {
        sorted_tri(LOCAL_FACES[f].map(|i| self.verts[i]))
    }

    pub fn has_edge(&self, e: (VertId, VertId)) -> bool {
        self.verts.contains(&e.0) && self.verts.contains(&e.1)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RefineReport {
    pub bisections: usize,
    pub new_vertices: usize,
    pub new_tets: usize,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    verts: Vec<Vec3>,
    tets: Vec<Tet>,
    /// Boundary faces of the current leaf mesh, keyed by sorted vertex
    /// triple; the value marks membership in the Dirichlet part.
    boundary: HashMap<[VertId; 3], bool>,
    /// Every triple that was ever a boundary face of some intermediate mesh.
    /// Grow-only; virtual (coarser) levels check their one-owner faces here.
    boundary_ever: HashSet<[VertId; 3]>,
    /// Edges contained in the Dirichlet boundary. Grow-only: once an edge is
    /// known to lie in Gamma_D it stays recorded even after being bisected,
    /// so coarser virtual meshes can query it.
    dir_edges: HashSet<(VertId, VertId)>,
    /// Vertices on the Dirichlet boundary, grow-only as well.
    dir_verts: HashSet<VertId>,
    /// Midpoint vertex created for each bisected edge.
    edge_midpoints: HashMap<(VertId, VertId), VertId>,
    /// Leaf tets incident to each vertex.
    vert_leaves: Vec<Vec<TetId>>,
    initial_volume: f64,
}

impl Mesh {
    /// Build an initial (level 0) mesh. Cells must be positively oriented;
    /// boundary faces are detected automatically and start out non-Dirichlet.
    pub fn from_cells(verts: Vec<Vec3>, cells: &[[VertId; 4]], kinds: &[u8]) -> Result<Mesh> {
        if cells.len() != kinds.len() {
            return Err(Error::Dimension {
                what: "cell type list",
                expected: cells.len(),
                got: kinds.len(),
            });
        }
        for v in &verts {
            if !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()) {
                return Err(Error::InvalidMesh("non-finite vertex coordinates".into()));
            }
        }
        let mut tets = Vec::with_capacity(cells.len());
        let mut volume = 0.0;
        for (i, (&vs, &kind)) in cells.iter().zip(kinds).enumerate() {
            if kind > 2 {
                return Err(Error::InvalidMesh(format!("tet {i}: type {kind} not in 0..3")));
            }
            for &v in &vs {
                if v >= verts.len() {
                    return Err(Error::InvalidMesh(format!("tet {i}: vertex id {v} out of range")));
                }
            }
            if vs[0] == vs[1] || vs[0] == vs[2] || vs[0] == vs[3] || vs[1] == vs[2]
                || vs[1] == vs[3] || vs[2] == vs[3]
            {
                return Err(Error::InvalidMesh(format!("tet {i}: repeated vertex ids")));
            }
            let v6 = signed_volume6(verts[vs[0]], verts[vs[1]], verts[vs[2]], verts[vs[3]]);
            // Vertex order encodes the bisection combinatorics, not the
            // orientation; the canonical cube splitting uses both signs.
            if v6 == 0.0 || !v6.is_finite() {
                return Err(Error::InvalidMesh(format!(
                    "tet {i}: degenerate (6*vol = {v6:.3e})"
                )));
            }
            volume += v6.abs() / 6.0;
            tets.push(Tet {
                verts: vs,
                kind,
                level: 0,
                parent: None,
                children: None,
            });
        }

        let mut face_owners: HashMap<[VertId; 3], usize> = HashMap::new();
        for t in &tets {
            for f in 0..4 {
                *face_owners.entry(t.face(f)).or_insert(0) += 1;
            }
        }
        let mut boundary = HashMap::new();
        for (tri, count) in face_owners {
            match count {
                1 => {
                    boundary.insert(tri, false);
                }
                2 => {}
                n => {
                    return Err(Error::InvalidMesh(format!(
                        "face {tri:?} shared by {n} tets"
                    )))
                }
            }
        }

        let mut vert_leaves = vec![vec![]; verts.len()];
        for (k, t) in tets.iter().enumerate() {
            for &v in &t.verts {
                vert_leaves[v].push(k);
            }
        }

        let boundary_ever = boundary.keys().copied().collect();
        Ok(Mesh {
            verts,
            tets,
            boundary,
            boundary_ever,
            dir_edges: HashSet::new(),
            dir_verts: HashSet::new(),
            edge_midpoints: HashMap::new(),
            vert_leaves,
            initial_volume: volume,
        })
    }

    /// Declare the whole boundary as Dirichlet.
    pub fn mark_dirichlet_all(&mut self) {
        let tris: Vec<[VertId; 3]> = self.boundary.keys().copied().collect();
        for tri in tris {
            self.mark_dirichlet_tri(tri).expect("boundary face");
        }
    }

    /// Declare one boundary face (by sorted vertex triple) as Dirichlet.
    pub fn mark_dirichlet_tri(&mut self, tri: [VertId; 3]) -> Result<()> {
        let tri = sorted_tri(tri);
        match self.boundary.get_mut(&tri) {
            Some(flag) => *flag = true,
            None => {
                return Err(Error::precondition(format!(
                    "face {tri:?} is not a boundary face"
                )))
            }
        }
        self.dir_edges.insert(sorted_pair(tri[0], tri[1]));
        self.dir_edges.insert(sorted_pair(tri[0], tri[2]));
        self.dir_edges.insert(sorted_pair(tri[1], tri[2]));
        for v in tri {
            self.dir_verts.insert(v);
        }
        Ok(())
    }

    pub fn n_verts(&self) -> usize {
        self.verts.len()
    }

    /// Size of the whole forest, including interior (bisected) tets.
    pub fn n_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn vert(&self, v: VertId) -> Vec3 {
        self.verts[v]
    }

    pub fn tet(&self, k: TetId) -> &Tet {
        &self.tets[k]
    }

    pub fn is_leaf(&self, k: TetId) -> bool {
        self.tets[k].is_leaf()
    }

    pub fn leaf_ids(&self) -> Vec<TetId> {
        (0..self.tets.len()).filter(|&k| self.tets[k].is_leaf()).collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.tets.iter().filter(|t| t.is_leaf()).count()
    }

    pub fn max_leaf_level(&self) -> u32 {
        self.tets
            .iter()
            .filter(|t| t.is_leaf())
            .map(|t| t.level)
            .max()
            .unwrap_or(0)
    }

    pub fn tet_geom(&self, k: TetId) -> Result<TetGeom> {
        TetGeom::new(self.tets[k].verts.map(|v| self.verts[v]))
    }

    pub fn initial_volume(&self) -> f64 {
        self.initial_volume
    }

    pub fn is_dirichlet_edge(&self, e: (VertId, VertId)) -> bool {
        self.dir_edges.contains(&sorted_pair(e.0, e.1))
    }

    pub fn is_dirichlet_vert(&self, v: VertId) -> bool {
        self.dir_verts.contains(&v)
    }

    /// Dirichlet flag of a current boundary face, None for interior faces.
    pub fn boundary_face_flag(&self, tri: [VertId; 3]) -> Option<bool> {
        self.boundary.get(&sorted_tri(tri)).copied()
    }

    /// Current-leaf boundary faces as (sorted triple, dirichlet) pairs,
    /// sorted for deterministic iteration.
    pub fn boundary_faces(&self) -> Vec<([VertId; 3], bool)> {
        let mut out: Vec<_> = self.boundary.iter().map(|(t, d)| (*t, *d)).collect();
        out.sort_unstable();
        out
    }

    /// Leaves that contain the given edge (both endpoints), ascending ids.
    pub fn leaves_around_edge(&self, e: (VertId, VertId)) -> Vec<TetId> {
        let mut out: Vec<TetId> = self.vert_leaves[e.0]
            .iter()
            .copied()
            .filter(|&k| self.tets[k].verts.contains(&e.1))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Bisect one leaf. The midpoint vertex is shared across all bisections
    /// of the same edge, so bisecting a whole refinement patch member by
    /// member keeps the mesh conforming.
    pub fn bisect(&mut self, k: TetId) -> Result<(TetId, TetId)> {
        if k >= self.tets.len() {
            return Err(Error::precondition(format!("tet id {k} out of range")));
        }
        if !self.tets[k].is_leaf() {
            return Err(Error::precondition(format!("tet {k} is not a leaf")));
        }
        let [v0, v1, v2, v3] = self.tets[k].verts;
        let kind = self.tets[k].kind;
        let level = self.tets[k].level;
        let e = sorted_pair(v0, v1);
        let edge_dir = self.dir_edges.contains(&e);

        let m = match self.edge_midpoints.get(&e) {
            Some(&m) => m,
            None => {
                let m = self.verts.len();
                self.verts.push(self.verts[v0].midpoint(self.verts[v1]));
                self.vert_leaves.push(vec![]);
                self.edge_midpoints.insert(e, m);
                if edge_dir {
                    self.dir_verts.insert(m);
                }
                m
            }
        };
        if edge_dir {
            self.dir_edges.insert(sorted_pair(v0, m));
            self.dir_edges.insert(sorted_pair(m, v1));
        }

        // The two faces containing the refinement edge get split; if such a
        // face is on the boundary its halves inherit the Dirichlet flag and
        // the cut edge (m, w) lies in the boundary face.
        for w in [v2, v3] {
            let tri = sorted_tri([v0, v1, w]);
            if let Some(&dir) = self.boundary.get(&tri) {
                self.boundary.remove(&tri);
                let half0 = sorted_tri([v0, m, w]);
                let half1 = sorted_tri([m, v1, w]);
                self.boundary.insert(half0, dir);
                self.boundary.insert(half1, dir);
                self.boundary_ever.insert(half0);
                self.boundary_ever.insert(half1);
                if dir {
                    self.dir_edges.insert(sorted_pair(m, w));
                }
            }
        }
        // The two faces not containing the refinement edge pass unchanged to
        // the children, so the boundary registry needs no update for them.

        let c0 = self.tets.len();
        let c1 = c0 + 1;
        let child_kind = (kind + 1) % 3;
        self.tets.push(Tet {
            verts: [v0, v2, v3, m],
            kind: child_kind,
            level: level + 1,
            parent: Some(k),
            children: None,
        });
        let c1_verts = if kind == 0 {
            [v1, v3, v2, m]
        } else {
            [v1, v2, v3, m]
        };
        self.tets.push(Tet {
            verts: c1_verts,
            kind: child_kind,
            level: level + 1,
            parent: Some(k),
            children: None,
        });
        self.tets[k].children = Some([c0, c1]);

        for &v in &[v0, v1, v2, v3] {
            self.vert_leaves[v].retain(|&t| t != k);
        }
        for c in [c0, c1] {
            for &v in &self.tets[c].verts {
                self.vert_leaves[v].push(c);
            }
        }
        Ok((c0, c1))
    }

    /// Refine all marked leaves, recursively refining refinement patches
    /// until every bisected edge is the refinement edge of all its leaves.
    pub fn refine(&mut self, marked: &[TetId]) -> Result<RefineReport> {
        for &k in marked {
            if k >= self.tets.len() || !self.tets[k].is_leaf() {
                return Err(Error::precondition(format!("marked tet {k} is not a leaf")));
            }
        }
        let depth_bound = 3 * (self.max_leaf_level() as usize + 4);
        let verts_before = self.verts.len();
        let tets_before = self.tets.len();
        let mut bisections = 0usize;

        for &k in marked {
            if !self.tets[k].is_leaf() {
                continue; // already handled by an earlier closure step
            }
            let mut stack = vec![k];
            while let Some(&t) = stack.last() {
                if !self.tets[t].is_leaf() {
                    stack.pop();
                    continue;
                }
                let e = self.tets[t].refinement_edge();
                let patch = self.leaves_around_edge(e);
                let incompatible: Vec<TetId> = patch
                    .iter()
                    .copied()
                    .filter(|&p| self.tets[p].refinement_edge() != e)
                    .collect();
                if incompatible.is_empty() {
                    for p in patch {
                        self.bisect(p)?;
                        bisections += 1;
                    }
                    stack.pop();
                } else {
                    if stack.len() >= depth_bound {
                        return Err(Error::ClosureDepth { bound: depth_bound });
                    }
                    stack.extend(incompatible);
                }
            }
        }
        Ok(RefineReport {
            bisections,
            new_vertices: self.verts.len() - verts_before,
            new_tets: self.tets.len() - tets_before,
        })
    }

    /// One round of refining every current leaf (a "uniform" bisection step).
    pub fn refine_all(&mut self) -> Result<RefineReport> {
        let leaves = self.leaf_ids();
        self.refine(&leaves)
    }

    pub fn total_leaf_volume(&self) -> f64 {
        self.tets
            .iter()
            .enumerate()
            .filter(|(_, t)| t.is_leaf())
            .map(|(k, _)| {
                let t = &self.tets[k];
                signed_volume6(
                    self.verts[t.verts[0]],
                    self.verts[t.verts[1]],
                    self.verts[t.verts[2]],
                    self.verts[t.verts[3]],
                )
                .abs()
                    / 6.0
            })
            .sum()
    }

    /// Structural conformity check on a set of elements forming a mesh:
    /// every face belongs to at most two elements, faces with one owner must
    /// lie on the domain boundary, and the elements must tile the domain
    /// (volume sum). A hanging face would surface as a one-owner face that
    /// never was a boundary face.
    pub fn check_conformity_of(&self, elems: &[TetId]) -> Result<()> {
        let mut faces: HashMap<[VertId; 3], usize> = HashMap::new();
        let mut vol = 0.0;
        for &k in elems {
            for f in 0..4 {
                *faces.entry(self.tets[k].face(f)).or_insert(0) += 1;
            }
            let t = &self.tets[k];
            vol += signed_volume6(
                self.verts[t.verts[0]],
                self.verts[t.verts[1]],
                self.verts[t.verts[2]],
                self.verts[t.verts[3]],
            )
            .abs()
                / 6.0;
        }
        for (tri, count) in &faces {
            match count {
                1 => {
                    if !self.boundary_ever.contains(tri) {
                        return Err(Error::InvalidMesh(format!(
                            "face {tri:?} has one owner but is not a boundary face (hanging node?)"
                        )));
                    }
                }
                2 => {}
                n => {
                    return Err(Error::InvalidMesh(format!(
                        "face {tri:?} shared by {n} elements"
                    )))
                }
            }
        }
        let rel = (vol - self.initial_volume).abs() / self.initial_volume;
        if rel > 1e-12 {
            return Err(Error::InvalidMesh(format!(
                "element set volume {vol:.15e} deviates from domain volume {:.15e} (rel {rel:.2e})",
                self.initial_volume
            )));
        }
        Ok(())
    }

    /// Conformity of the current leaf mesh; additionally requires the
    /// boundary registry to coincide with the observed one-owner faces.
    pub fn check_conformity(&self) -> Result<()> {
        let leaves = self.leaf_ids();
        self.check_conformity_of(&leaves)?;
        let mut faces: HashMap<[VertId; 3], usize> = HashMap::new();
        for &k in &leaves {
            for f in 0..4 {
                *faces.entry(self.tets[k].face(f)).or_insert(0) += 1;
            }
        }
        let observed: HashSet<[VertId; 3]> = faces
            .iter()
            .filter(|(_, &c)| c == 1)
            .map(|(t, _)| *t)
            .collect();
        let registered: HashSet<[VertId; 3]> = self.boundary.keys().copied().collect();
        if observed != registered {
            return Err(Error::InvalidMesh(
                "boundary registry out of sync with one-owner faces".into(),
            ));
        }
        Ok(())
    }

    /// Face-level compatibility of a conforming element set: for each
    /// interior face F shared by K and K', exactly one of
    ///   - both refinement edges lie in F: then they coincide and levels match,
    ///   - only K's refinement edge lies in F: then ell(K) = ell(K') + 1,
    ///   - neither lies in F: then levels match.
    pub fn check_level_relations(&self, elems: &[TetId]) -> Result<()> {
        let mut faces: HashMap<[VertId; 3], Vec<TetId>> = HashMap::new();
        for &k in elems {
            for f in 0..4 {
                faces.entry(self.tets[k].face(f)).or_default().push(k);
            }
        }
        for (tri, owners) in &faces {
            if owners.len() != 2 {
                continue;
            }
            let (a, b) = (owners[0], owners[1]);
            let (ta, tb) = (&self.tets[a], &self.tets[b]);
            let in_face = |e: (VertId, VertId)| tri.contains(&e.0) && tri.contains(&e.1);
            let (ra, rb) = (ta.refinement_edge(), tb.refinement_edge());
            let ok = match (in_face(ra), in_face(rb)) {
                (true, true) => ra == rb && ta.level == tb.level,
                (true, false) => ta.level == tb.level + 1,
                (false, true) => tb.level == ta.level + 1,
                (false, false) => ta.level == tb.level,
            };
            if !ok {
                return Err(Error::InvalidMesh(format!(
                    "face {:?}: levels {}/{} with refinement edges {:?}/{:?} violate the \
                     bisection level relation",
                    tri, ta.level, tb.level, ra, rb
                )));
            }
        }
        Ok(())
    }
}
