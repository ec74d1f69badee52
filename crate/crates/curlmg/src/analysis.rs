//! Measurement harness for the theory-side quantities that are observable at
//! desk scale: subspace coloring, cross-level energy-cosine decay, and
//! contraction uniformity across refinement stages.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adaptive::AdaptiveConfig;
use crate::assembly::assemble;
use crate::error::Error;
use crate::estimator::{estimate, mark};
use crate::mesh::{sorted_pair, Mesh, LOCAL_EDGES};
use crate::problems::Problem;
use crate::solver::{MgHierarchy, SmootherKind, SolverConfig};
use crate::space::DofMap;
use crate::sparse::{dot, DenseCholesky};
use crate::Result;

/// Colors for the smoothed dofs of one virtual level, parallel to the
/// level's edge and vertex dof sets.
#[derive(Clone, Debug)]
pub struct LevelColoring {
    pub edge_colors: Vec<usize>,
    pub vert_colors: Vec<usize>,
    pub n_edge_classes: usize,
    pub n_vert_classes: usize,
}

/// Per-level partition of the smoothed dofs into classes such that no two
/// same-class members meet in a common level element. Adjacency runs over all
/// elements of the virtual level, a superset of the refinement zone, so the
/// partition is valid there a fortiori.
#[derive(Clone, Debug)]
pub struct ColoringPartition {
    pub levels: Vec<LevelColoring>,
}

/// First-fit over ascending item index; two items conflict when they appear
/// in a common member list.
fn greedy_first_fit(n_items: usize, tet_members: &[Vec<usize>]) -> Vec<usize> {
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n_items];
    for (t, members) in tet_members.iter().enumerate() {
        for &i in members {
            incident[i].push(t);
        }
    }
    let mut colors = vec![usize::MAX; n_items];
    for i in 0..n_items {
        let mut taken: Vec<usize> = incident[i]
            .iter()
            .flat_map(|&t| tet_members[t].iter().copied())
            .filter(|&j| j < i)
            .map(|j| colors[j])
            .collect();
        taken.sort_unstable();
        taken.dedup();
        let mut c = 0;
        for &tc in &taken {
            if tc == c {
                c += 1;
            } else if tc > c {
                break;
            }
        }
        colors[i] = c;
    }
    colors
}

fn class_count(colors: &[usize]) -> usize {
    colors.iter().max().map_or(0, |&c| c + 1)
}

impl ColoringPartition {
    /// `hier` must have been built from `m`.
    pub fn build(m: &Mesh, hier: &MgHierarchy) -> Result<ColoringPartition> {
        let mut levels = Vec::with_capacity(hier.n_levels());
        for l in 0..hier.n_levels() {
            let dm = &hier.dms[l];
            let eset = &hier.sets.edge_sets[l];
            let vset = &hier.sets.vert_sets[l];
            let mut epos = vec![usize::MAX; dm.n_edge_dofs()];
            for (i, &d) in eset.iter().enumerate() {
                epos[d] = i;
            }
            let mut vpos = vec![usize::MAX; dm.n_vert_dofs()];
            for (i, &d) in vset.iter().enumerate() {
                vpos[d] = i;
            }
            let tets = &hier.mesh_levels.levels[l];
            let mut edge_members = Vec::with_capacity(tets.len());
            let mut vert_members = Vec::with_capacity(tets.len());
            for &tid in tets {
                let t = m.tet(tid);
                let mut em = Vec::new();
                for &(i, j) in &LOCAL_EDGES {
                    if let Some(d) = dm.edge_dof(sorted_pair(t.verts[i], t.verts[j])) {
                        if epos[d] != usize::MAX {
                            em.push(epos[d]);
                        }
                    }
                }
                let mut vm = Vec::new();
                for &v in &t.verts {
                    if let Some(d) = dm.vert_dof(v) {
                        if vpos[d] != usize::MAX {
                            vm.push(vpos[d]);
                        }
                    }
                }
                edge_members.push(em);
                vert_members.push(vm);
            }
            let edge_colors = greedy_first_fit(eset.len(), &edge_members);
            let vert_colors = greedy_first_fit(vset.len(), &vert_members);
            levels.push(LevelColoring {
                n_edge_classes: class_count(&edge_colors),
                n_vert_classes: class_count(&vert_colors),
                edge_colors,
                vert_colors,
            });
        }
        Ok(ColoringPartition { levels })
    }

    pub fn max_classes(&self) -> usize {
        self.levels
            .iter()
            .map(|lc| lc.n_edge_classes.max(lc.n_vert_classes))
            .max()
            .unwrap_or(0)
    }
}

/// Edge dof indices of one level grouped by color class.
pub fn edge_class_members(lc: &LevelColoring, edge_set: &[usize]) -> Vec<Vec<usize>> {
    let mut classes = vec![Vec::new(); lc.n_edge_classes];
    for (i, &d) in edge_set.iter().enumerate() {
        classes[lc.edge_colors[i]].push(d);
    }
    classes
}

/// Carry a level-l coefficient vector through the transfer chain into the
/// finest space.
pub fn prolong_to_fine(hier: &MgHierarchy, from: usize, mut v: Vec<f64>) -> Vec<f64> {
    for k in from..hier.n_levels() - 1 {
        v = hier.transfers[k].p.matvec(&v);
    }
    v
}

/// |a(u_l, v_m)| / (a(u_l,u_l) a(v_m,v_m))^{1/2} where both arguments are
/// level coefficient vectors read as members of the finest space.
pub fn energy_cosine(
    hier: &MgHierarchy,
    l: usize,
    u: &[f64],
    m: usize,
    v: &[f64],
) -> Result<f64> {
    for (lvl, x) in [(l, u), (m, v)] {
        if lvl >= hier.n_levels() {
            return Err(Error::Config(format!(
                "level {lvl} out of range, hierarchy has {}",
                hier.n_levels()
            )));
        }
        if x.len() != hier.dms[lvl].n_edge_dofs() {
            return Err(Error::Dimension {
                what: "level coefficient vector",
                expected: hier.dms[lvl].n_edge_dofs(),
                got: x.len(),
            });
        }
    }
    let a = hier.fine_mat();
    let uf = prolong_to_fine(hier, l, u.to_vec());
    let vf = prolong_to_fine(hier, m, v.to_vec());
    let au = a.matvec(&uf);
    let nu = dot(&uf, &au).max(0.0).sqrt();
    let nv = dot(&vf, &a.matvec(&vf)).max(0.0).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Evaluation(
            "energy cosine of a zero-energy vector".into(),
        ));
    }
    Ok((dot(&au, &vf).abs() / (nu * nv)).min(1.0))
}

#[derive(Clone, Copy, Debug)]
pub struct ScsSample {
    pub l: usize,
    pub m: usize,
    /// Largest energy cosine over the sampled class-subspace pairs.
    pub cosine: f64,
}

#[derive(Clone, Debug)]
pub struct ScsReport {
    pub seed: u64,
    pub samples: Vec<ScsSample>,
    /// per_distance[d] = max cosine over level pairs with |l - m| = d.
    pub per_distance: Vec<f64>,
    /// Fit cosine <= c_fit * q_hat^d by least squares in log space.
    pub c_fit: f64,
    pub q_hat: f64,
}

fn log_linear_fit(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::Evaluation(
            "decay fit needs at least two nonzero distances".into(),
        ));
    }
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-30 {
        return Err(Error::Evaluation("degenerate abscissae in decay fit".into()));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    Ok((intercept, slope))
}

/// Sample random coefficient vectors on color-class subspaces of every level
/// pair and record the worst energy cosine per level distance, then fit the
/// geometric decay rate.
pub fn measure_scs(
    m: &Mesh,
    hier: &MgHierarchy,
    samples: usize,
    seed: u64,
) -> Result<ScsReport> {
    let nl = hier.n_levels();
    if nl < 3 {
        return Err(Error::precondition(
            "cross-level decay needs at least three levels",
        ));
    }
    if samples == 0 {
        return Err(Error::Config("sample count must be positive".into()));
    }
    let coloring = ColoringPartition::build(m, hier)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = hier.fine_mat();

    // Per level: sampled class vectors in the fine space with their products.
    let mut pool: Vec<Vec<(Vec<f64>, Vec<f64>, f64)>> = Vec::with_capacity(nl);
    for l in 0..nl {
        let classes = edge_class_members(&coloring.levels[l], &hier.sets.edge_sets[l]);
        let nonempty: Vec<&Vec<usize>> = classes.iter().filter(|c| !c.is_empty()).collect();
        let mut per = Vec::new();
        if !nonempty.is_empty() {
            for _ in 0..samples {
                let cls = nonempty[rng.gen_range(0..nonempty.len())];
                let mut v = vec![0.0; hier.dms[l].n_edge_dofs()];
                for &d in cls {
                    v[d] = rng.gen_range(-1.0..1.0);
                }
                let vf = prolong_to_fine(hier, l, v);
                let av = a.matvec(&vf);
                let na = dot(&vf, &av).max(0.0).sqrt();
                if na > 0.0 {
                    per.push((vf, av, na));
                }
            }
        }
        pool.push(per);
    }

    let mut out = Vec::new();
    let mut per_distance = vec![0.0_f64; nl];
    for l in 0..nl {
        for mm in l..nl {
            if pool[l].is_empty() || pool[mm].is_empty() {
                continue;
            }
            let mut best = 0.0_f64;
            for (i, (uf, au, nu)) in pool[l].iter().enumerate() {
                for (j, (vf, _, nv)) in pool[mm].iter().enumerate() {
                    // Same level, same draw: identical vectors, cosine 1.
                    let cos = if l == mm && i == j {
                        1.0
                    } else {
                        let _ = uf;
                        (dot(au, vf).abs() / (nu * nv)).min(1.0)
                    };
                    best = best.max(cos);
                }
            }
            out.push(ScsSample {
                l,
                m: mm,
                cosine: best,
            });
            let d = mm - l;
            per_distance[d] = per_distance[d].max(best);
        }
    }

    let points: Vec<(f64, f64)> = per_distance
        .iter()
        .enumerate()
        .filter(|(_, &y)| y > 0.0)
        .map(|(d, &y)| (d as f64, y.ln()))
        .collect();
    let (intercept, slope) = log_linear_fit(&points)?;
    Ok(ScsReport {
        seed,
        samples: out,
        per_distance,
        c_fit: intercept.exp(),
        q_hat: slope.exp(),
    })
}

#[derive(Clone, Copy, Debug)]
pub struct UniformityRow {
    pub stage: usize,
    pub n_el: usize,
    /// Refinement depth of the stage hierarchy: virtual levels minus one.
    pub l: usize,
    pub contraction: f64,
    /// Same estimate with the gradient sweeps removed from the smoother.
    pub contraction_edge_only: f64,
}

/// Run the adaptive loop and record the contraction estimate of every stage
/// together with the edge-only ablation, until the hierarchy depth reaches
/// `max_levels` or the element budget runs out.
pub fn uniformity_study(
    p: &dyn Problem,
    max_levels: usize,
    cfg: &AdaptiveConfig,
) -> Result<Vec<UniformityRow>> {
    let mut m = p.build_mesh();
    let mut rows = Vec::new();
    for stage in 0.. {
        let dm = DofMap::for_leaves(&m)?;
        let lift = p.dirichlet_lift(&m, &dm)?;
        let sys = assemble(&m, &dm, |x| p.load(x), Some(&lift))?;
        let hier = MgHierarchy::build(&m, &sys.a)?;
        let depth = hier.n_levels() - 1;
        let ablated = SolverConfig {
            smoother: SmootherKind::EdgeOnly,
            ..cfg.solver
        };
        rows.push(UniformityRow {
            stage,
            n_el: m.n_leaves(),
            l: depth,
            contraction: hier.estimate_contraction(&cfg.solver, cfg.contraction_steps, cfg.seed),
            contraction_edge_only: hier.estimate_contraction(
                &ablated,
                cfg.contraction_steps,
                cfg.seed,
            ),
        });
        if depth >= max_levels || m.n_leaves() >= cfg.max_elems {
            break;
        }
        let (x, rep) = hier.solve(&sys.b, &cfg.solver)?;
        let x = if rep.converged {
            x
        } else {
            DenseCholesky::new(&sys.a)?.solve(&sys.b)
        };
        let mut divf = |y| p.div_load(y);
        let est = estimate(&m, &dm, &x, Some(&lift), |y| p.load(y), Some(&mut divf))?;
        if est.eta_max == 0.0 {
            break;
        }
        m.refine(&mark(&dm, &est, cfg.theta)?)?;
    }
    Ok(rows)
}

pub fn write_uniformity_csv<W: Write>(
    rows: &[UniformityRow],
    seed: u64,
    out: &mut W,
) -> io::Result<()> {
    writeln!(out, "# seed = {seed}")?;
    writeln!(out, "stage,n_el,l,contraction,contraction_edge_only")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.6e},{:.6e}",
            r.stage, r.n_el, r.l, r.contraction, r.contraction_edge_only
        )?;
    }
    Ok(())
}
