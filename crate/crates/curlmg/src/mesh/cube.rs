//! Initial meshes built from axis-aligned unit cubes, each split into six
//! tetrahedra along the main diagonal (Kuhn splitting). All tets get type 0
//! and the vertex order (origin, opposite corner, first intermediate, second
//! intermediate), so the refinement edge is the cube diagonal. This lattice
//! is compatible for recursive bisection: uniform refinement never triggers
//! closure and the similarity classes stay bounded.

use std::collections::BTreeMap;

use crate::geometry::{v3, Vec3};
use crate::Result;

use super::Mesh;

/// The six permutations of (x, y, z), fixed order.
const PERMS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Build a mesh from unit cubes given by their integer min-corners. The
/// `branch` function may assign distinct copies to geometrically coincident
/// lattice corners (used to cut slits); branch 0 everywhere gives the plain
/// complex.
pub fn cube_complex(
    cubes: &[[i64; 3]],
    branch: impl Fn([i64; 3], [i64; 3]) -> u8,
) -> Result<Mesh> {
    // Collect all (corner, branch) keys first so vertex ids are assigned in
    // sorted key order, independent of cube order.
    let mut keys: BTreeMap<([i64; 3], u8), usize> = BTreeMap::new();
    for &cube in cubes {
        for dx in 0..2i64 {
            for dy in 0..2i64 {
                for dz in 0..2i64 {
                    let corner = [cube[0] + dx, cube[1] + dy, cube[2] + dz];
                    keys.entry((corner, branch(cube, corner))).or_insert(0);
                }
            }
        }
    }
    for (i, (_, id)) in keys.iter_mut().enumerate() {
        *id = i;
    }
    let verts: Vec<Vec3> = keys
        .keys()
        .map(|&(c, _)| v3(c[0] as f64, c[1] as f64, c[2] as f64))
        .collect();

    let vid = |cube: [i64; 3], offset: [i64; 3]| -> usize {
        let corner = [
            cube[0] + offset[0],
            cube[1] + offset[1],
            cube[2] + offset[2],
        ];
        keys[&(corner, branch(cube, corner))]
    };

    let mut cells = Vec::with_capacity(cubes.len() * 6);
    for &cube in cubes {
        for perm in PERMS {
            let mut step1 = [0i64; 3];
            step1[perm[0]] = 1;
            let mut step2 = step1;
            step2[perm[1]] = 1;
            // Refinement edge = main diagonal; listing the two-step corner
            // before the one-step corner makes the children's refinement
            // edges the face diagonals, then the cube edges, which is the
            // compatible ordering for the whole lattice.
            cells.push([
                vid(cube, [0, 0, 0]),
                vid(cube, [1, 1, 1]),
                vid(cube, step2),
                vid(cube, step1),
            ]);
        }
    }
    let kinds = vec![0u8; cells.len()];
    Mesh::from_cells(verts, &cells, &kinds)
}

/// Single unit cube (0,1)^3; boundary faces detected but not marked
/// Dirichlet, so callers choose the boundary conditions.
pub fn unit_cube_mesh() -> Mesh {
    cube_complex(&[[0, 0, 0]], |_, _| 0).expect("static mesh")
}

/// L-shaped domain (-1,1)^3 minus the quarter prism (0,1) x (-1,0) x (-1,1),
/// six cubes, whole boundary Dirichlet.
pub fn lshape_mesh() -> Mesh {
    let mut cubes = vec![];
    for x in [-1i64, 0] {
        for y in [-1i64, 0] {
            for z in [-1i64, 0] {
                if x == 0 && y == -1 {
                    continue;
                }
                cubes.push([x, y, z]);
            }
        }
    }
    let mut m = cube_complex(&cubes, |_, _| 0).expect("static mesh");
    m.mark_dirichlet_all();
    m
}

/// Crack domain (-1,1)^3 minus the slit {(x, 0, z) : 0 <= x < 1}. The slit
/// is cut by duplicating the lattice corners (1, 0, z): cubes above the slit
/// see one copy, cubes below the other. The slit-tip corners (0, 0, z) stay
/// single, so the mesh closes up at the singular edge. Whole boundary
/// (including both slit sides) Dirichlet.
pub fn crack_mesh() -> Mesh {
    let mut cubes = vec![];
    for x in [-1i64, 0] {
        for y in [-1i64, 0] {
            for z in [-1i64, 0] {
                cubes.push([x, y, z]);
            }
        }
    }
    let branch = |cube: [i64; 3], corner: [i64; 3]| -> u8 {
        if corner[0] == 1 && corner[1] == 0 {
            if cube[1] >= 0 {
                1
            } else {
                2
            }
        } else {
            0
        }
    };
    let mut m = cube_complex(&cubes, branch).expect("static mesh");
    m.mark_dirichlet_all();
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_cube_tiles() {
        let m = unit_cube_mesh();
        assert_eq!(m.n_leaves(), 6);
        assert_eq!(m.n_verts(), 8);
        assert!((m.initial_volume() - 1.0).abs() < 1e-14);
        m.check_conformity().unwrap();
    }

    #[test]
    fn lshape_tiles() {
        let m = lshape_mesh();
        assert_eq!(m.n_leaves(), 36);
        assert!((m.initial_volume() - 6.0).abs() < 1e-13);
        m.check_conformity().unwrap();
        // Whole boundary Dirichlet: 6 cubes, each boundary quad = 2 faces.
        for (_, dir) in m.boundary_faces() {
            assert!(dir);
        }
    }

    #[test]
    fn crack_has_duplicated_slit_corners() {
        let m = crack_mesh();
        assert_eq!(m.n_leaves(), 48);
        // 27 lattice corners + 3 duplicated (1,0,z) copies.
        assert_eq!(m.n_verts(), 30);
        assert!((m.initial_volume() - 8.0).abs() < 1e-13);
        m.check_conformity().unwrap();
    }

    #[test]
    fn crack_slit_faces_are_boundary() {
        let m = crack_mesh();
        // The slit {0 <= x <= 1, y = 0} contributes 2 quads per side per z
        // slab: total boundary area must be the cube surface 24 plus twice
        // the slit area 2.
        let mut area = 0.0;
        for (tri, dir) in m.boundary_faces() {
            assert!(dir);
            let (a, b, c) = (m.vert(tri[0]), m.vert(tri[1]), m.vert(tri[2]));
            area += crate::geometry::triangle_area(a, b, c);
        }
        assert!((area - 28.0).abs() < 1e-12, "boundary area {area}");
    }

    #[test]
    fn crack_refinement_keeps_slit_open() {
        let mut m = crack_mesh();
        for _ in 0..4 {
            m.refine_all().unwrap();
            m.check_conformity().unwrap();
        }
        // Slit stays open: boundary area is conserved under refinement.
        let mut area = 0.0;
        for (tri, _) in m.boundary_faces() {
            let (a, b, c) = (m.vert(tri[0]), m.vert(tri[1]), m.vert(tri[2]));
            area += crate::geometry::triangle_area(a, b, c);
        }
        assert!((area - 28.0).abs() < 1e-11, "boundary area {area}");
    }

    #[test]
    fn uniform_refinement_needs_no_closure() {
        // Compatible Kuhn lattice: refining all leaves bisects each exactly
        // once per round.
        let mut m = unit_cube_mesh();
        let mut expected = 6;
        for _ in 0..6 {
            let report = m.refine_all().unwrap();
            assert_eq!(report.bisections, expected);
            expected *= 2;
            assert_eq!(m.n_leaves(), expected);
        }
        m.check_conformity().unwrap();
    }
}
