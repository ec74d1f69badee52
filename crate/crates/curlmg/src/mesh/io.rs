//! Plain-text mesh exchange format.
//!
//! ```text
//! vertices N
//! x y z            (N lines, 17 significant digits)
//! tets M
//! v0 v1 v2 v3 type (M lines, the current leaves)
//! dirichlet F
//! tet localface    (F lines; local face f is opposite local vertex f)
//! ```
//!
//! The writer serializes the current leaf mesh (refinement history is not
//! part of the format); numbers use 17 significant digits so a
//! write-read-write cycle is byte-identical.

use std::io::{BufRead, Write};

use crate::error::Error;
use crate::geometry::{v3, Vec3};
use crate::Result;

use super::{Mesh, VertId};

pub fn write_ascii(m: &Mesh, w: &mut impl Write) -> Result<()> {
    writeln!(w, "vertices {}", m.n_verts())?;
    for v in 0..m.n_verts() {
        let p = m.vert(v);
        writeln!(w, "{:.16e} {:.16e} {:.16e}", p.x, p.y, p.z)?;
    }
    let leaves = m.leaf_ids();
    writeln!(w, "tets {}", leaves.len())?;
    for &k in &leaves {
        let t = m.tet(k);
        writeln!(
            w,
            "{} {} {} {} {}",
            t.verts[0], t.verts[1], t.verts[2], t.verts[3], t.kind
        )?;
    }
    let mut dir_lines = vec![];
    for (idx, &k) in leaves.iter().enumerate() {
        for f in 0..4 {
            if m.boundary_face_flag(m.tet(k).face(f)) == Some(true) {
                dir_lines.push((idx, f));
            }
        }
    }
    writeln!(w, "dirichlet {}", dir_lines.len())?;
    for (idx, f) in dir_lines {
        writeln!(w, "{idx} {f}")?;
    }
    Ok(())
}

pub fn read_ascii(r: &mut impl BufRead) -> Result<Mesh> {
    let mut lines = r.lines().enumerate();
    let mut next_line = || -> Result<(usize, String)> {
        loop {
            match lines.next() {
                Some((n, Ok(s))) => {
                    if !s.trim().is_empty() {
                        return Ok((n + 1, s));
                    }
                }
                Some((n, Err(e))) => {
                    return Err(Error::Parse {
                        line: n + 1,
                        msg: e.to_string(),
                    })
                }
                None => {
                    return Err(Error::Parse {
                        line: 0,
                        msg: "unexpected end of file".into(),
                    })
                }
            }
        }
    };

    let expect_count = |line: (usize, String), keyword: &str| -> Result<usize> {
        let (n, s) = line;
        let mut it = s.split_whitespace();
        match (it.next(), it.next(), it.next()) {
            (Some(k), Some(c), None) if k == keyword => c.parse().map_err(|_| Error::Parse {
                line: n,
                msg: format!("bad count '{c}'"),
            }),
            _ => Err(Error::Parse {
                line: n,
                msg: format!("expected '{keyword} N'"),
            }),
        }
    };

    let nv = expect_count(next_line()?, "vertices")?;
    let mut verts: Vec<Vec3> = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (n, s) = next_line()?;
        let nums: Vec<f64> = s
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: n,
                msg: e.to_string(),
            })?;
        if nums.len() != 3 {
            return Err(Error::Parse {
                line: n,
                msg: format!("expected 3 coordinates, got {}", nums.len()),
            });
        }
        verts.push(v3(nums[0], nums[1], nums[2]));
    }

    let nt = expect_count(next_line()?, "tets")?;
    let mut cells: Vec<[VertId; 4]> = Vec::with_capacity(nt);
    let mut kinds: Vec<u8> = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (n, s) = next_line()?;
        let nums: Vec<usize> = s
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: n,
                msg: e.to_string(),
            })?;
        if nums.len() != 5 {
            return Err(Error::Parse {
                line: n,
                msg: format!("expected 'v0 v1 v2 v3 type', got {} fields", nums.len()),
            });
        }
        if nums[4] > 2 {
            return Err(Error::Parse {
                line: n,
                msg: format!("tet type {} not in 0..3", nums[4]),
            });
        }
        cells.push([nums[0], nums[1], nums[2], nums[3]]);
        kinds.push(nums[4] as u8);
    }

    let nd = expect_count(next_line()?, "dirichlet")?;
    let mut mesh = Mesh::from_cells(verts, &cells, &kinds)?;
    for _ in 0..nd {
        let (n, s) = next_line()?;
        let nums: Vec<usize> = s
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: n,
                msg: e.to_string(),
            })?;
        if nums.len() != 2 || nums[0] >= nt || nums[1] >= 4 {
            return Err(Error::Parse {
                line: n,
                msg: "expected 'tet localface' within range".into(),
            });
        }
        let tri = mesh.tet(nums[0]).face(nums[1]);
        mesh.mark_dirichlet_tri(tri).map_err(|e| Error::Parse {
            line: n,
            msg: e.to_string(),
        })?;
    }
    Ok(mesh)
}
