//! Named verification suites behind a common interface, so the command line
//! can run any subset and report one pass/fail line per check. Each suite
//! re-derives its expectations from scratch and never consults solver
//! internals beyond the public API.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adaptive::AdaptiveConfig;
use crate::analysis::{measure_scs, ColoringPartition};
use crate::assembly::assemble;
use crate::error::Error;
use crate::estimator::{estimate, mark, EstimatorReport};
use crate::geometry::{v3, Vec3};
use crate::mesh::{lshape_mesh, sorted_pair, unit_cube_mesh, Mesh, LOCAL_EDGES};
use crate::problems;
use crate::solver::{MgHierarchy, SolverConfig};
use crate::space::{
    build_gradient_map, coarsest_neighbor_assignment, edge_interpolate, element_edge_coeffs,
    eval_edge_curl, eval_edge_function, nodal_interpolate, quasi_interpolate_fe, DofMap,
};
use crate::sparse::{dot, norm, CsrMatrix};
use crate::Result;

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed,
        detail,
    }
}

#[derive(Clone, Debug)]
pub struct VerifyParams {
    pub seed: u64,
    pub problem: String,
    pub levels: usize,
}

impl Default for VerifyParams {
    fn default() -> Self {
        VerifyParams {
            seed: 42,
            problem: "lshape".into(),
            levels: 5,
        }
    }
}

pub trait VerifySuite {
    fn name(&self) -> &'static str;
    fn run(&self, params: &VerifyParams) -> Result<Vec<CheckResult>>;
}

pub fn registry() -> Vec<Box<dyn VerifySuite>> {
    vec![
        Box::new(CdpSuite),
        Box::new(ProlongationSuite),
        Box::new(KernelSuite),
        Box::new(ScsSuite),
        Box::new(ColoringSuite),
        Box::new(ContractionSuite),
        Box::new(EstimatorSuite),
    ]
}

pub fn names() -> Vec<&'static str> {
    registry().iter().map(|s| s.name()).collect()
}

pub fn lookup(name: &str) -> Option<Box<dyn VerifySuite>> {
    registry().into_iter().find(|s| s.name() == name)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn frobenius(a: &CsrMatrix) -> f64 {
    let zero = CsrMatrix::from_triplets(a.nrows(), a.ncols(), &[]).expect("empty matrix");
    a.frobenius_diff(&zero)
}

/// Commuting-diagram and quasi-interpolation identities.
pub struct CdpSuite;

impl VerifySuite for CdpSuite {
    fn name(&self) -> &'static str {
        "cdp"
    }

    fn run(&self, params: &VerifyParams) -> Result<Vec<CheckResult>> {
        let mut out = Vec::new();

        // Cubic potential: its gradient integrates exactly under the edge
        // quadrature, so the identity must hold to rounding.
        let mut m = unit_cube_mesh();
        m.refine_all()?;
        m.refine_all()?;
        let dm = DofMap::for_leaves(&m)?;
        let u = |x: Vec3| x.x * x.x * x.y - 3.0 * x.z * x.z + x.x * x.y * x.z + 0.5 * x.x;
        let grad_u = |x: Vec3| {
            v3(
                2.0 * x.x * x.y + x.y * x.z + 0.5,
                x.x * x.x + x.x * x.z,
                -6.0 * x.z + x.x * x.y,
            )
        };
        let by_path = edge_interpolate(&m, &dm, grad_u)?;
        let through_g = build_gradient_map(&dm).matvec(&nodal_interpolate(&m, &dm, u));
        let scale = 1.0 + by_path.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
        let dev = max_abs_diff(&by_path, &through_g) / scale;
        out.push(check(
            "edge-interpolated-gradient-matches-gradient-map",
            dev <= 1e-12,
            format!("max relative deviation {dev:.2e}, bound 1e-12"),
        ));

        let mut m = lshape_mesh();
        m.refine_all()?;
        m.refine_all()?;
        let dm = DofMap::for_leaves(&m)?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let coeffs: Vec<f64> = (0..dm.n_vert_dofs())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let assignment = coarsest_neighbor_assignment(&m, &dm);
        let back = quasi_interpolate_fe(&m, &dm, &assignment, &coeffs)?;
        let dev = max_abs_diff(&coeffs, &back);
        out.push(check(
            "quasi-interpolation-projects-members-onto-themselves",
            dev <= 1e-12,
            format!("max coefficient deviation {dev:.2e}, bound 1e-12"),
        ));
        Ok(out)
    }
}

/// Exactness of the coarse-to-fine transfer.
pub struct ProlongationSuite;

impl VerifySuite for ProlongationSuite {
    fn name(&self) -> &'static str {
        "prolongation"
    }

    fn run(&self, params: &VerifyParams) -> Result<Vec<CheckResult>> {
        let mut out = Vec::new();
        let mut m = lshape_mesh();
        let leaves = m.leaf_ids();
        m.refine(&[leaves[0], leaves[7]])?;
        let dm = DofMap::for_leaves(&m)?;
        let sys = assemble(&m, &dm, |_| Vec3::ZERO, None)?;
        let hier = MgHierarchy::build(&m, &sys.a)?;
        let top = hier.n_levels() - 1;
        let p = &hier.transfers[top - 1].p;
        let dm_c = &hier.dms[top - 1];
        let dm_f = &hier.dms[top];

        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let v: Vec<f64> = (0..dm_c.n_edge_dofs())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let pv = p.matvec(&v);

        // A coarse function and its fine representative agree everywhere.
        let coarse_elems: HashSet<_> = dm_c.elems().iter().copied().collect();
        let mut worst = 0.0_f64;
        for epos in 0..dm_f.n_elems() {
            let tid = dm_f.elems()[epos];
            let mut anc = tid;
            while !coarse_elems.contains(&anc) {
                anc = m
                    .tet(anc)
                    .parent
                    .ok_or_else(|| Error::InvalidMesh("fine element without coarse host".into()))?;
            }
            let cpos = dm_c
                .elems()
                .binary_search(&anc)
                .map_err(|_| Error::InvalidMesh("host missing from coarse map".into()))?;
            let gf = m.tet_geom(tid)?;
            let gc = m.tet_geom(anc)?;
            let lf = element_edge_coeffs(dm_f, epos, &pv, None);
            let lc = element_edge_coeffs(dm_c, cpos, &v, None);
            for _ in 0..3 {
                let mut lam = [0.0; 4];
                let mut s = 0.0;
                for l in &mut lam {
                    *l = rng.gen_range(0.05..1.0);
                    s += *l;
                }
                for l in &mut lam {
                    *l /= s;
                }
                let x = gf.point(lam);
                let d = (eval_edge_function(&gf, &lf, x) - eval_edge_function(&gc, &lc, x)).norm();
                worst = worst.max(d);
            }
        }
        out.push(check(
            "coarse-functions-reproduce-pointwise",
            worst <= 1e-12,
            format!("max pointwise deviation {worst:.2e}, bound 1e-12"),
        ));

        let a_c = &hier.mats[top - 1];
        let a_f = &hier.mats[top];
        let e_c = dot(&v, &a_c.matvec(&v));
        let e_f = dot(&pv, &a_f.matvec(&pv));
        let dev = (e_c - e_f).abs() / e_c.max(1e-300);
        out.push(check(
            "transfer-preserves-energy",
            dev <= 1e-12,
            format!("relative energy mismatch {dev:.2e}, bound 1e-12"),
        ));

        let q = &hier.transfers[top - 1].q;
        let lhs = p.matmul(&hier.grads[top - 1])?;
        let rhs = hier.grads[top].matmul(q)?;
        let dev = lhs.frobenius_diff(&rhs) / (1.0 + frobenius(&lhs));
        out.push(check(
            "transfer-commutes-with-discrete-gradient",
            dev <= 1e-12,
            format!("relative Frobenius gap {dev:.2e}, bound 1e-12"),
        ));
        Ok(out)
    }
}

/// The curl part must annihilate every discrete gradient.
pub struct KernelSuite;

impl VerifySuite for KernelSuite {
    fn name(&self) -> &'static str {
        "kernel"
    }

    fn run(&self, params: &VerifyParams) -> Result<Vec<CheckResult>> {
        let mut out = Vec::new();
        let mut m = lshape_mesh();
        m.refine_all()?;
        let dm = DofMap::for_leaves(&m)?;
        let sys = assemble(&m, &dm, |_| Vec3::ZERO, None)?;
        let g = build_gradient_map(&dm);
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let z: Vec<f64> = (0..dm.n_vert_dofs())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let gz = g.matvec(&z);
        let r = sys.a_curl.matvec(&gz);
        let dev = norm(&r) / (frobenius(&sys.a_curl) * norm(&gz)).max(1e-300);
        out.push(check(
            "curl-energy-annihilates-gradients",
            dev <= 1e-12,
            format!("relative residual {dev:.2e}, bound 1e-12"),
        ));

        let scale = 1.0 + gz.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
        let mut worst = 0.0_f64;
        for e in 0..dm.n_elems() {
            let geom = m.tet_geom(dm.elems()[e])?;
            let local = element_edge_coeffs(&dm, e, &gz, None);
            worst = worst.max(eval_edge_curl(&geom, &local).norm());
        }
        let dev = worst / scale;
        out.push(check(
            "interpolated-gradients-are-curl-free",
            dev <= 1e-12,
            format!("max elementwise curl {dev:.2e}, bound 1e-12"),
        ));
        Ok(out)
    }
}

/// Cross-level energy coupling decays geometrically.
pub struct ScsSuite;

impl VerifySuite for ScsSuite {
    fn name(&self) -> &'static str {
        "scs"
    }

    fn run(&self, params: &VerifyParams) -> Result<Vec<CheckResult>> {
        let mut out = Vec::new();
        let mut m = lshape_mesh();
        for _ in 0..4 {
            m.refine_all()?;
        }
        let dm = DofMap::for_leaves(&m)?;
        let sys = assemble(&m, &dm, |_| Vec3::ZERO, None)?;
        let hier = MgHierarchy::build(&m, &sys.a)?;
        let rep = measure_scs(&m, &hier, 12, params.seed)?;

        let in_range = rep
            .samples
            .iter()
            .all(|s| s.cosine >= 0.0 && s.cosine <= 1.0);
        out.push(check(
            "cosines-stay-normalized",
            in_range && (rep.per_distance[0] - 1.0).abs() <= 1e-12,
            format!(
                "all cosines in [0,1]: {in_range}, same-subspace cosine {:.12}",
                rep.per_distance[0]
            ),
        ));
        out.push(check(
            "fitted-decay-rate-below-bound",
            rep.q_hat <= 0.95,
            format!("q_hat {:.4}, bound 0.95", rep.q_hat),
        ));

        // Single basis functions with separated stars never couple.
        let top = hier.n_levels() - 1;
        let dmf = &hier.dms[top];
        let inc = dmf.edge_incidence();
        let star = |d: usize| {
            let mut s = inc[dmf.edge_pos(dmf.dof_edge(d)).expect("dof has an edge")].clone();
            s.sort_unstable();
            s
        };
        let sa = star(0);
        let mut pair = None;
        for b in (1..dmf.n_edge_dofs()).rev() {
            let sb = star(b);
            if sa.iter().all(|e| sb.binary_search(e).is_err()) {
                pair = Some(b);
                break;
            }
        }
        let b = pair.ok_or_else(|| Error::precondition("no separated edge pair found"))?;
        let mut u = vec![0.0; dmf.n_edge_dofs()];
        let mut v = u.clone();
        u[0] = 1.0;
        v[b] = 1.0;
        let c = crate::analysis::energy_cosine(&hier, top, &u, top, &v)?;
        out.push(check(
            "disjoint-supports-decouple",
            c <= 1e-12,
            format!("cosine {c:.2e}, bound 1e-12"),
        ));
        Ok(out)
    }
}

/// Class partitions for parallel smoothing stay valid and small.
pub struct ColoringSuite;

fn first_color_clash(m: &Mesh, hier: &MgHierarchy, part: &ColoringPartition) -> Option<String> {
    for l in 0..hier.n_levels() {
        let dm = &hier.dms[l];
        let lc = &part.levels[l];
        let mut epos = vec![usize::MAX; dm.n_edge_dofs()];
        for (i, &d) in hier.sets.edge_sets[l].iter().enumerate() {
            epos[d] = i;
        }
        let mut vpos = vec![usize::MAX; dm.n_vert_dofs()];
        for (i, &d) in hier.sets.vert_sets[l].iter().enumerate() {
            vpos[d] = i;
        }
        for &tid in &hier.mesh_levels.levels[l] {
            let t = m.tet(tid);
            let mut ec: Vec<usize> = LOCAL_EDGES
                .iter()
                .filter_map(|&(i, j)| dm.edge_dof(sorted_pair(t.verts[i], t.verts[j])))
                .filter(|&d| epos[d] != usize::MAX)
                .map(|d| lc.edge_colors[epos[d]])
                .collect();
            let n = ec.len();
            ec.sort_unstable();
            ec.dedup();
            if ec.len() != n {
                return Some(format!("edge color clash in level {l} tet {tid}"));
            }
            let mut vc: Vec<usize> = t
                .verts
                .iter()
                .filter_map(|&v| dm.vert_dof(v))
                .filter(|&d| vpos[d] != usize::MAX)
                .map(|d| lc.vert_colors[vpos[d]])
                .collect();
            let n = vc.len();
            vc.sort_unstable();
            vc.dedup();
            if vc.len() != n {
                return Some(format!("vertex color clash in level {l} tet {tid}"));
            }
        }
    }
    None
}

impl VerifySuite for ColoringSuite {
    fn name(&self) -> &'static str {
        "coloring"
    }

    fn run(&self, _params: &VerifyParams) -> Result<Vec<CheckResult>> {
        let mut out = Vec::new();

        let verts = vec![
            v3(0.0, 0.0, 0.0),
            v3(1.0, 0.0, 0.0),
            v3(0.0, 1.0, 0.0),
            v3(0.0, 0.0, 1.0),
        ];
        let m = Mesh::from_cells(verts, &[[0, 1, 2, 3]], &[0])?;
        let dm = DofMap::for_leaves(&m)?;
        let sys = assemble(&m, &dm, |_| Vec3::ZERO, None)?;
        let hier = MgHierarchy::build(&m, &sys.a)?;
        let part = ColoringPartition::build(&m, &hier)?;
        let lc = &part.levels[0];
        out.push(check(
            "single-tet-needs-the-full-palette",
            lc.n_vert_classes == 4 && lc.n_edge_classes == 6,
            format!(
                "vertex classes {}, edge classes {} (want 4 and 6)",
                lc.n_vert_classes, lc.n_edge_classes
            ),
        ));

        let mut m = lshape_mesh();
        m.refine_all()?;
        m.refine_all()?;
        let dm = DofMap::for_leaves(&m)?;
        let sys = assemble(&m, &dm, |_| Vec3::ZERO, None)?;
        let hier = MgHierarchy::build(&m, &sys.a)?;
        let part = ColoringPartition::build(&m, &hier)?;
        let clash = first_color_clash(&m, &hier, &part);
        out.push(check(
            "partition-valid-inside-every-level-element",
            clash.is_none(),
            clash.unwrap_or_else(|| "no same-class pair meets in an element".into()),
        ));
        out.push(check(
            "class-count-bounded",
            part.max_classes() <= 64,
            format!("max classes {}, bound 64", part.max_classes()),
        ));
        Ok(out)
    }
}

/// Solver contraction stays bounded away from one.
pub struct ContractionSuite;

impl VerifySuite for ContractionSuite {
    fn name(&self) -> &'static str {
        "contraction"
    }

    fn run(&self, params: &VerifyParams) -> Result<Vec<CheckResult>> {
        let mut out = Vec::new();

        // With a single space the step is the exact solve.
        let m = lshape_mesh();
        let dm = DofMap::for_leaves(&m)?;
        let sys = assemble(&m, &dm, |_| Vec3::ZERO, None)?;
        let hier = MgHierarchy::build(&m, &sys.a)?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let b: Vec<f64> = (0..dm.n_edge_dofs())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let mut x = vec![0.0; b.len()];
        let cfg = SolverConfig::default();
        hier.ssc_step(&mut x, &b, &cfg);
        let mut r = b.clone();
        sys.a.matvec_add(&x, -1.0, &mut r);
        let dev = norm(&r) / norm(&b).max(1e-300);
        out.push(check(
            "single-space-step-solves-exactly",
            dev <= 1e-12,
            format!("relative residual {dev:.2e}, bound 1e-12"),
        ));

        let p = problems::lookup(&params.problem)
            .ok_or_else(|| Error::Config(format!("unknown problem preset '{}'", params.problem)))?;
        let acfg = AdaptiveConfig {
            max_elems: 20_000,
            seed: params.seed,
            ..AdaptiveConfig::default()
        };
        let rows = crate::analysis::uniformity_study(p.as_ref(), params.levels, &acfg)?;
        let worst = rows.iter().map(|r| r.contraction).fold(0.0, f64::max);
        out.push(check(
            "estimates-below-bound-at-every-depth",
            worst < 0.95,
            format!(
                "max contraction {worst:.4} over {} stages (depth up to {}), bound 0.95",
                rows.len(),
                rows.last().map_or(0, |r| r.l)
            ),
        ));

        let mut m = lshape_mesh();
        m.refine_all()?;
        m.refine_all()?;
        let dm = DofMap::for_leaves(&m)?;
        let sys = assemble(&m, &dm, |_| Vec3::ZERO, None)?;
        let hier = MgHierarchy::build(&m, &sys.a)?;
        let c1 = hier.estimate_contraction(&cfg, 15, params.seed);
        let c2 = hier.estimate_contraction(&cfg, 15, params.seed.wrapping_add(101));
        out.push(check(
            "estimate-reproducible-across-seeds",
            (c1 - c2).abs() <= 0.05,
            format!("estimates {c1:.4} and {c2:.4}, allowed gap 0.05"),
        ));
        Ok(out)
    }
}

/// Residual estimator against hand-computed and structural oracles.
pub struct EstimatorSuite;

impl VerifySuite for EstimatorSuite {
    fn name(&self) -> &'static str {
        "estimator"
    }

    fn run(&self, _params: &VerifyParams) -> Result<Vec<CheckResult>> {
        let mut out = Vec::new();

        let mut m = unit_cube_mesh();
        m.refine_all()?;
        let dm = DofMap::for_leaves(&m)?;
        let c = v3(0.3, -1.1, 0.7);
        let coeffs = edge_interpolate(&m, &dm, |_| c)?;
        let mut div = |_| 0.0;
        let rep = estimate(&m, &dm, &coeffs, None, |_| c, Some(&mut div))?;
        out.push(check(
            "exactly-represented-field-scores-zero",
            rep.eta_h <= 1e-12,
            format!("eta {:.2e}, bound 1e-12", rep.eta_h),
        ));

        // One basis function on a two-tet mesh; face terms have closed forms.
        let verts = vec![
            v3(0.0, 0.0, 0.0),
            v3(1.0, 0.0, 0.0),
            v3(0.0, 1.0, 0.0),
            v3(0.0, 0.0, 1.0),
            v3(1.0, 1.0, 2.0),
        ];
        let m = Mesh::from_cells(verts, &[[0, 1, 2, 3], [1, 2, 3, 4]], &[0, 0])?;
        let dm = DofMap::for_leaves(&m)?;
        let mut coeffs = vec![0.0; dm.n_edge_dofs()];
        coeffs[dm
            .edge_dof((0, 1))
            .ok_or_else(|| Error::precondition("edge (0,1) inactive"))?] = 1.0;
        let g1 = m.tet_geom(0)?;
        let local1 = element_edge_coeffs(&dm, 0, &coeffs, None);
        let load = move |x: Vec3| {
            if g1.barycentric(x).iter().all(|&l| l >= -1e-12) {
                eval_edge_function(&g1, &local1, x)
            } else {
                Vec3::ZERO
            }
        };
        let mut div = |_| 0.0;
        let rep = estimate(&m, &dm, &coeffs, None, load, Some(&mut div))?;
        let face_sq = 3.0_f64.sqrt() / 4.0 + 4.0 * 3.0_f64.sqrt();
        let want = [
            0.5 * 2.0_f64.sqrt() * face_sq,
            0.5 * m.tet_geom(1)?.diameter() * face_sq,
        ];
        let dev = (0..2)
            .map(|i| (rep.eta[i].powi(2) - want[i]).abs() / want[i])
            .fold(0.0, f64::max);
        out.push(check(
            "face-terms-match-hand-integrals",
            dev <= 1e-10,
            format!("max relative deviation {dev:.2e}, bound 1e-10"),
        ));

        let eta = vec![0.1, 3.0, 0.2, 2.9, 0.4, 0.1];
        let dm = DofMap::for_leaves(&unit_cube_mesh())?;
        let synth = EstimatorReport {
            eta_h: eta.iter().map(|e| e * e).sum::<f64>().sqrt(),
            eta_max: 3.0,
            eta,
        };
        let marked = mark(&dm, &synth, 0.9)?;
        out.push(check(
            "marking-always-includes-the-largest-indicator",
            marked.contains(&dm.elems()[1]) && !marked.contains(&dm.elems()[0]),
            format!("marked {} of {} elements at theta 0.9", marked.len(), 6),
        ));
        Ok(out)
    }
}
