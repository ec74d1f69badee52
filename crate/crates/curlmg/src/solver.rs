//! Multilevel solver with local hybrid smoothing.
//!
//! One step corrects the error subspace by subspace: an exact solve on the
//! coarsest edge space, then per ascending level one Gauss-Seidel sweep over
//! the gradient subspace (vertex dofs, driven through the discrete gradient)
//! followed by one over the edge dofs. Smoothing on level l only visits dofs
//! whose basis support lies inside the refinement zone, so the work per cycle
//! stays proportional to the number of fine dofs even under deep local
//! refinement. Level operators below the top are Galerkin products of the
//! assembled fine matrix, which keeps every subspace correction exact with
//! respect to the fine energy.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::mesh::{virtual_hierarchy, Mesh, MeshHierarchy};
use crate::space::{build_gradient_map, level_dof_sets, DofMap, LevelDofSets};
use crate::sparse::{axpy, dot, norm, CsrMatrix, DenseCholesky};
use crate::transfer::{build_prolongation, Prolongation};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmootherKind {
    /// Gradient-subspace sweep followed by an edge sweep.
    Hybrid,
    /// Edge sweep only; kept for ablation runs, not convergent-in-h.
    EdgeOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMode {
    /// Plain subspace-correction iteration.
    Iteration,
    /// Conjugate gradients preconditioned by the symmetrized cycle.
    Pcg,
}

#[derive(Clone, Copy, Debug)]
pub struct SolverConfig {
    /// Stop when the Euclidean residual drops below reduction * ||b||.
    pub reduction: f64,
    pub max_iters: usize,
    pub mode: SolveMode,
    /// Smoothing sweeps per level while descending.
    pub pre: usize,
    /// Smoothing sweeps per level while ascending.
    pub post: usize,
    pub smoother: SmootherKind,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            reduction: 1e-8,
            max_iters: 200,
            mode: SolveMode::Iteration,
            pre: 0,
            post: 1,
            smoother: SmootherKind::Hybrid,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    /// Euclidean residual norms; entry 0 is ||b||, one entry per iteration after.
    pub residuals: Vec<f64>,
    /// Total subspace corrections applied over all cycles.
    pub work_units: u64,
}

pub struct MgHierarchy {
    pub mesh_levels: MeshHierarchy,
    /// One dof map per virtual level; the last one is the finest space.
    pub dms: Vec<DofMap>,
    /// transfers[l] maps level l into level l + 1.
    pub transfers: Vec<Prolongation>,
    /// Level operators; mats[top] is the assembled fine matrix, the rest are
    /// Galerkin products through the transfers.
    pub mats: Vec<CsrMatrix>,
    /// Discrete gradients per level.
    pub grads: Vec<CsrMatrix>,
    pub sets: LevelDofSets,
    grads_t: Vec<CsrMatrix>,
    nodal_diag: Vec<Vec<f64>>,
    edge_diag: Vec<Vec<f64>>,
    coarse: DenseCholesky,
}

impl MgHierarchy {
    /// Build the full level structure for the current leaf mesh. `fine_a`
    /// must be the matrix assembled on the leaf dof map.
    pub fn build(m: &Mesh, fine_a: &CsrMatrix) -> Result<MgHierarchy> {
        let mesh_levels = virtual_hierarchy(m)?;
        let nl = mesh_levels.levels.len();
        let mut dms = Vec::with_capacity(nl);
        for lvl in &mesh_levels.levels {
            dms.push(DofMap::new(m, lvl)?);
        }
        let n_fine = dms[nl - 1].n_edge_dofs();
        if fine_a.nrows() != n_fine || fine_a.ncols() != n_fine {
            return Err(Error::Dimension {
                what: "fine operator",
                expected: n_fine,
                got: fine_a.nrows(),
            });
        }

        let mut transfers = Vec::with_capacity(nl.saturating_sub(1));
        for l in 0..nl - 1 {
            transfers.push(build_prolongation(m, &dms[l], &dms[l + 1])?);
        }

        let mut mats = vec![fine_a.clone()];
        for l in (0..nl - 1).rev() {
            let coarser = CsrMatrix::galerkin(&mats[mats.len() - 1], &transfers[l].p)?;
            mats.push(coarser);
        }
        mats.reverse();

        let grads: Vec<CsrMatrix> = dms.iter().map(build_gradient_map).collect();
        let grads_t: Vec<CsrMatrix> = grads.iter().map(|g| g.transpose()).collect();
        let edge_diag: Vec<Vec<f64>> = mats.iter().map(|a| a.diagonal()).collect();

        // Only the diagonal of G^T A G is needed for the gradient sweep.
        let mut nodal_diag = Vec::with_capacity(nl);
        for l in 0..nl {
            let mut d = vec![0.0; dms[l].n_vert_dofs()];
            for (p, dp) in d.iter_mut().enumerate() {
                let (cols, vals) = grads_t[l].row(p);
                let mut acc = 0.0;
                for (i, &ci) in cols.iter().enumerate() {
                    for (j, &cj) in cols.iter().enumerate() {
                        acc += vals[i] * vals[j] * mats[l].get(ci, cj);
                    }
                }
                *dp = acc;
            }
            nodal_diag.push(d);
        }

        let sets = level_dof_sets(m, &mesh_levels, &dms)?;
        let coarse = DenseCholesky::new(&mats[0])?;

        Ok(MgHierarchy {
            mesh_levels,
            dms,
            transfers,
            mats,
            grads,
            sets,
            grads_t,
            nodal_diag,
            edge_diag,
            coarse,
        })
    }

    pub fn n_levels(&self) -> usize {
        self.dms.len()
    }

    pub fn fine_dm(&self) -> &DofMap {
        self.dms.last().expect("at least one level")
    }

    pub fn fine_mat(&self) -> &CsrMatrix {
        self.mats.last().expect("at least one level")
    }

    pub fn n_fine_dofs(&self) -> usize {
        self.fine_dm().n_edge_dofs()
    }

    pub fn a_norm(&self, x: &[f64]) -> f64 {
        dot(x, &self.fine_mat().matvec(x)).max(0.0).sqrt()
    }

    /// Subspace corrections one forward cycle performs, counted analytically.
    pub fn work_per_cycle(&self, cfg: &SolverConfig) -> u64 {
        let mut w = self.sets.edge_sets[0].len() as u64;
        for l in 1..self.n_levels() {
            let mut per = self.sets.edge_sets[l].len() as u64;
            if cfg.smoother == SmootherKind::Hybrid {
                per += self.sets.vert_sets[l].len() as u64;
            }
            w += (cfg.pre + cfg.post) as u64 * per;
        }
        w
    }

    fn vert_correction(&self, l: usize, p: usize, e: &mut [f64], r: &mut [f64]) {
        let (cols, vals) = self.grads_t[l].row(p);
        let d = self.nodal_diag[l][p];
        if d <= 0.0 {
            return;
        }
        let mut num = 0.0;
        for (c, v) in cols.iter().zip(vals) {
            num += v * r[*c];
        }
        let alpha = num / d;
        for (c, v) in cols.iter().zip(vals) {
            e[*c] += alpha * v;
            let (ac, av) = self.mats[l].row(*c);
            for (j, a) in ac.iter().zip(av) {
                r[*j] -= alpha * v * a;
            }
        }
    }

    fn edge_correction(&self, l: usize, j: usize, e: &mut [f64], r: &mut [f64]) {
        let d = self.edge_diag[l][j];
        if d <= 0.0 {
            return;
        }
        let alpha = r[j] / d;
        e[j] += alpha;
        let (cols, vals) = self.mats[l].row(j);
        for (c, v) in cols.iter().zip(vals) {
            r[*c] -= alpha * v;
        }
    }

    /// One Gauss-Seidel sweep over the level-l smoothing sets. The reverse
    /// flag flips both the subspace order and the dof order, giving the
    /// adjoint sweep.
    fn smooth(
        &self,
        l: usize,
        cfg: &SolverConfig,
        reverse: bool,
        e: &mut [f64],
        r: &mut [f64],
        work: &mut u64,
    ) {
        let edges = &self.sets.edge_sets[l];
        let verts = &self.sets.vert_sets[l];
        let hybrid = cfg.smoother == SmootherKind::Hybrid;
        if reverse {
            for &j in edges.iter().rev() {
                self.edge_correction(l, j, e, r);
            }
            *work += edges.len() as u64;
            if hybrid {
                for &p in verts.iter().rev() {
                    self.vert_correction(l, p, e, r);
                }
                *work += verts.len() as u64;
            }
        } else {
            if hybrid {
                for &p in verts.iter() {
                    self.vert_correction(l, p, e, r);
                }
                *work += verts.len() as u64;
            }
            for &j in edges.iter() {
                self.edge_correction(l, j, e, r);
            }
            *work += edges.len() as u64;
        }
    }

    /// Apply one multilevel cycle to a fine-level residual, returning the
    /// correction. The reverse cycle is the adjoint, so forward followed by
    /// reverse yields a symmetric preconditioner.
    fn cycle(&self, r_fine: &[f64], cfg: &SolverConfig, reverse: bool, work: &mut u64) -> Vec<f64> {
        let top = self.n_levels() - 1;
        let (down, up) = if reverse {
            (cfg.post, cfg.pre)
        } else {
            (cfg.pre, cfg.post)
        };

        let mut rl: Vec<Vec<f64>> = vec![Vec::new(); top + 1];
        let mut es: Vec<Vec<f64>> = Vec::with_capacity(top + 1);
        for dm in &self.dms {
            es.push(vec![0.0; dm.n_edge_dofs()]);
        }

        rl[top] = r_fine.to_vec();
        for l in (1..=top).rev() {
            for _ in 0..down {
                let (e, r) = (es[l].as_mut_slice(), rl[l].as_mut_slice());
                self.smooth(l, cfg, true, e, r, work);
            }
            rl[l - 1] = self.transfers[l - 1].p.matvec_transpose(&rl[l]);
        }

        es[0] = self.coarse.solve(&rl[0]);
        *work += self.sets.edge_sets[0].len() as u64;

        for l in 1..=top {
            let carried = self.transfers[l - 1].p.matvec(&es[l - 1]);
            self.mats[l].matvec_add(&carried, -1.0, &mut rl[l]);
            axpy(1.0, &carried, &mut es[l]);
            for _ in 0..up {
                let (e, r) = (es[l].as_mut_slice(), rl[l].as_mut_slice());
                self.smooth(l, cfg, false, e, r, work);
            }
        }

        es.pop().expect("top level correction")
    }

    /// One forward subspace-correction step x <- x + B(b - Ax). Returns the
    /// subspace corrections spent.
    pub fn ssc_step(&self, x: &mut [f64], b: &[f64], cfg: &SolverConfig) -> u64 {
        let mut work = 0;
        let mut r = b.to_vec();
        self.fine_mat().matvec_add(x, -1.0, &mut r);
        let c = self.cycle(&r, cfg, false, &mut work);
        axpy(1.0, &c, x);
        work
    }

    /// Symmetrized cycle: forward pass, then the adjoint pass on the updated
    /// residual. Used as the conjugate-gradient preconditioner.
    fn apply_symmetrized(&self, r: &[f64], cfg: &SolverConfig, work: &mut u64) -> Vec<f64> {
        let mut z = self.cycle(r, cfg, false, work);
        let mut r1 = r.to_vec();
        self.fine_mat().matvec_add(&z, -1.0, &mut r1);
        let c2 = self.cycle(&r1, cfg, true, work);
        axpy(1.0, &c2, &mut z);
        z
    }

    pub fn solve(&self, b: &[f64], cfg: &SolverConfig) -> Result<(Vec<f64>, SolveReport)> {
        if !(cfg.reduction > 0.0 && cfg.reduction < 1.0) {
            return Err(Error::Config(format!(
                "residual reduction must lie in (0, 1), got {}",
                cfg.reduction
            )));
        }
        let n = self.n_fine_dofs();
        if b.len() != n {
            return Err(Error::Dimension {
                what: "right-hand side",
                expected: n,
                got: b.len(),
            });
        }

        let a = self.fine_mat();
        let b_norm = norm(b);
        let mut x = vec![0.0; n];
        let mut residuals = vec![b_norm];
        if b_norm == 0.0 {
            return Ok((
                x,
                SolveReport {
                    iterations: 0,
                    converged: true,
                    residuals,
                    work_units: 0,
                },
            ));
        }
        let tol = cfg.reduction * b_norm;
        let mut work = 0;
        let mut converged = false;
        let mut iterations = 0;

        match cfg.mode {
            SolveMode::Iteration => {
                while iterations < cfg.max_iters {
                    let mut r = b.to_vec();
                    a.matvec_add(&x, -1.0, &mut r);
                    let c = self.cycle(&r, cfg, false, &mut work);
                    axpy(1.0, &c, &mut x);
                    let mut rn = b.to_vec();
                    a.matvec_add(&x, -1.0, &mut rn);
                    let res = norm(&rn);
                    residuals.push(res);
                    iterations += 1;
                    if res <= tol {
                        converged = true;
                        break;
                    }
                }
            }
            SolveMode::Pcg => {
                let mut r = b.to_vec();
                let mut z = self.apply_symmetrized(&r, cfg, &mut work);
                let mut p = z.clone();
                let mut rz = dot(&r, &z);
                while iterations < cfg.max_iters {
                    let ap = a.matvec(&p);
                    let pap = dot(&p, &ap);
                    if pap <= 0.0 {
                        return Err(Error::Breakdown(format!(
                            "conjugate gradients met curvature {pap:.3e}; operator is not positive definite"
                        )));
                    }
                    let alpha = rz / pap;
                    axpy(alpha, &p, &mut x);
                    axpy(-alpha, &ap, &mut r);
                    let mut rt = b.to_vec();
                    a.matvec_add(&x, -1.0, &mut rt);
                    let res = norm(&rt);
                    residuals.push(res);
                    iterations += 1;
                    if res <= tol {
                        converged = true;
                        break;
                    }
                    z = self.apply_symmetrized(&r, cfg, &mut work);
                    let rz_next = dot(&r, &z);
                    let beta = rz_next / rz;
                    rz = rz_next;
                    for (pi, zi) in p.iter_mut().zip(&z) {
                        *pi = zi + beta * *pi;
                    }
                }
            }
        }

        Ok((
            x,
            SolveReport {
                iterations,
                converged,
                residuals,
                work_units: work,
            },
        ))
    }

    /// Estimate the A-norm contraction factor of the forward iteration by
    /// power iteration on the error propagation operator. A single-level
    /// hierarchy solves exactly and reports (numerically) zero.
    pub fn estimate_contraction(&self, cfg: &SolverConfig, steps: usize, seed: u64) -> f64 {
        let n = self.n_fine_dofs();
        if n == 0 {
            return 0.0;
        }
        let a = self.fine_mat();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut e: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        let an = self.a_norm(&e);
        for v in &mut e {
            *v /= an;
        }
        let mut rho = 0.0;
        let mut work = 0;
        for _ in 0..steps.max(1) {
            let mut r = vec![0.0; n];
            a.matvec_add(&e, -1.0, &mut r);
            let c = self.cycle(&r, cfg, false, &mut work);
            axpy(1.0, &c, &mut e);
            let an = self.a_norm(&e);
            if an <= 1e-12 {
                return an;
            }
            rho = an;
            for v in &mut e {
                *v /= an;
            }
        }
        rho
    }
}
