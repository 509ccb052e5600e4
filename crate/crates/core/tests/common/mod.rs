//! Checks shared by the integration tests and the acceptance harness. Each
//! returns a one-line detail string, as `Err` when the check fails.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen, Vector2};
use poromix::assembly::pointwise::row_residuals_at;
use poromix::assembly::{
    assemble_at, assemble_b, assemble_b_transpose, assemble_d, assemble_elastic, assemble_k, assemble_mass, assemble_s,
    assemble_s_transpose, recover_filtration_velocity, recover_fluid_velocity, BWeight, Discretization, DragWeight,
    Formulation, MixedState, Model, NoSources, PointSources, SourceSamples, SourceTerms, TimeCoupling,
};
use poromix::linsolve::{bilinear, matvec, to_dense, SparseMatrix};
use poromix::mechanics::{kinematics_at, piola_stress, Mat2, MaterialParams, NeoHookean};
use poromix::mesh::{build_uniform_square_mesh, Side, TagRule};
use poromix::timeloop::{TimeIntegrator, TimeIntegratorConfig};
use poromix::verification::{
    consistency_residual, energy_decay, interpolated_state, level_problem, DecayConfig, ManufacturedSolution,
    MmsSources, StudyParams,
};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

pub const FORMS: [Formulation; 2] = [Formulation::FluidVelocity, Formulation::FiltrationVelocity];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn disc(n: usize, kv: usize, kp: usize, rule: TagRule) -> Discretization {
    let mesh = Arc::new(build_uniform_square_mesh(1.0, n, &rule).unwrap());
    Discretization::new(mesh, kv, kp).unwrap()
}

fn random_vec(r: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Admissible state: smooth displacement of size `amp` with random phases,
/// order-one random velocities, pressure and multiplier.
pub fn random_state(d: &Discretization, form: Formulation, amp: f64, r: &mut impl Rng) -> MixedState {
    let mut s = MixedState::zeros(d, form);
    let ph: Vec<f64> = (0..4).map(|_| r.random_range(0.0..2.0 * PI)).collect();
    let nn = d.velocity.n_nodes();
    for (node, &[x, y]) in d.velocity.node_coords().iter().enumerate() {
        s.u_s.coefficients[node] = amp * (2.0 * PI * x + ph[0]).sin() * (PI * y + ph[1]).cos();
        s.u_s.coefficients[nn + node] = amp * (PI * x + ph[2]).cos() * (2.0 * PI * y + ph[3]).sin();
    }
    s.v_s.coefficients = random_vec(r, s.v_s.coefficients.len());
    s.w.coefficients = random_vec(r, s.w.coefficients.len());
    s.p.coefficients = random_vec(r, s.p.coefficients.len());
    s.multiplier = r.random_range(-1.0..1.0);
    s
}

fn symmetric_eigenvalues(a: &SparseMatrix) -> Vec<f64> {
    let d = to_dense(a);
    let m = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (d[(i, j)] + d[(j, i)]));
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn max_asymmetry(a: &SparseMatrix) -> f64 {
    let d = to_dense(a);
    let mut m = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            m = m.max((d[(i, j)] - d[(j, i)]).abs());
        }
    }
    m
}

fn max_abs(a: &SparseMatrix) -> f64 {
    a.val().iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Largest `|<A x, y> - <x, A^T y>| / (|A| |x| |y|)` over random pairs.
fn adjoint_defect(a: &SparseMatrix, at: &SparseMatrix, r: &mut impl Rng) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let x = random_vec(r, a.ncols());
        let y = random_vec(r, a.nrows());
        let lhs = bilinear(a, &y, &x);
        let rhs = bilinear(at, &x, &y);
        let scale = max_abs(a).max(1e-300) * norm(&x) * norm(&y);
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    worst
}

/// Adjoint pairs of the coupling, drag and boundary operators.
pub fn check_adjoint_pairs() -> Check {
    let mut r = rng(11);
    let params = MaterialParams::unit(0.5);
    let d = disc(4, 2, 2, TagRule::NeumannSides(vec![Side::Right, Side::Top]));
    let u = random_state(&d, Formulation::FluidVelocity, 0.02, &mut r).u_s;
    let (v, p) = (&d.velocity, &d.pressure);
    let mut worst = 0.0f64;
    for weight in [BWeight::Unit, BWeight::Solid, BWeight::Fluid, BWeight::Mixture] {
        let b = assemble_b(p, v, &u, &params, weight).unwrap();
        let bt = assemble_b_transpose(v, p, &u, &params, weight).unwrap();
        worst = worst.max(adjoint_defect(&b, &bt, &mut r));
    }
    for weight in [DragWeight::Full, DragWeight::Filtration] {
        let dm = assemble_d(v, v, &u, &params, weight).unwrap();
        worst = worst.max(adjoint_defect(&dm, &dm, &mut r));
    }
    let s = assemble_s(p, v, &u, &params).unwrap();
    let st = assemble_s_transpose(v, p, &u, &params).unwrap();
    if max_abs(&s) == 0.0 {
        return Err("boundary coupling is empty on a mesh with Neumann sides".into());
    }
    worst = worst.max(adjoint_defect(&s, &st, &mut r));
    let detail = format!("max relative adjoint defect {worst:.2e}");
    if worst <= 1e-13 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Drag and pressure-stabilization operators are symmetric PSD and the
/// stabilization kernel is exactly the constants.
pub fn check_psd_and_kernel() -> Check {
    let mut r = rng(12);
    let d = disc(8, 2, 2, TagRule::AllDirichlet);
    let mut details = Vec::new();
    for xi in [0.5, 0.9] {
        let params = MaterialParams::unit(xi);
        let u = random_state(&d, Formulation::FluidVelocity, 0.004, &mut r).u_s;
        let mut mats = vec![
            ("D_full", assemble_d(&d.velocity, &d.velocity, &u, &params, DragWeight::Full).unwrap()),
            ("D_flt", assemble_d(&d.velocity, &d.velocity, &u, &params, DragWeight::Filtration).unwrap()),
        ];
        mats.push(("K", assemble_k(&d.pressure, &u, &params).unwrap()));
        for (name, m) in &mats {
            let ev = symmetric_eigenvalues(m);
            let top = ev.last().copied().unwrap_or(0.0).abs();
            let asym = max_asymmetry(m);
            if ev[0] < -1e-10 * top || asym > 1e-14 * max_abs(m) {
                return Err(format!(
                    "{name} at xi={xi}: min eigenvalue {:.3e}, max {top:.3e}, asymmetry {asym:.1e}",
                    ev[0]
                ));
            }
            if *name == "K" {
                let kernel = ev.iter().filter(|&&e| e.abs() <= 1e-10 * top).count();
                let ones = vec![1.0; m.ncols()];
                let k1 = norm(&matvec(m, &ones)) / (top * norm(&ones));
                if kernel != 1 || k1 > 1e-13 {
                    return Err(format!("K kernel dimension {kernel}, |K 1| / (|K| |1|) = {k1:.1e}"));
                }
                details.push(format!("K xi={xi}: kernel dim 1, second eigenvalue {:.3e}", ev[1]));
            } else {
                details.push(format!("{name} xi={xi}: min eigenvalue {:.3e}", ev[0]));
            }
        }
    }
    Ok(details.join("; "))
}

/// Discrete identities between blocks built from a shared space: the
/// kinematic row couples `u` and `v_s` with the same mass matrix, and the
/// fluid-form drag rows act on `v_f` and `v_s` with the same drag matrix. The
/// filtration-form drag does not depend on the volume fraction.
pub fn check_shared_space_identities() -> Check {
    let mut r = rng(13);
    let d = disc(4, 2, 2, TagRule::AllDirichlet);
    let l = d.layout;
    let params = MaterialParams::unit(0.5);
    let model = Model::new(Formulation::FluidVelocity, params);
    let s = random_state(&d, Formulation::FluidVelocity, 0.004, &mut r);
    let coupling = TimeCoupling::Rate { alpha: 1.0, offset: vec![0.0; l.n_velocity] };
    let samples = SourceSamples::new(&d, &NoSources, 0.0);
    let jac = assemble_at(&d, &model, &s.to_vector(), &coupling, &samples, true).unwrap().jacobian.unwrap();
    let dense = to_dense(&jac);
    let pinned: Vec<bool> = {
        let mut p = vec![false; l.total];
        for &(i, _) in samples.dirichlet() {
            p[i] = true;
        }
        p
    };
    let mut mismatches = 0usize;
    let nv = l.n_velocity;
    for i in (0..nv).filter(|&i| !pinned[l.u + i]) {
        for j in 0..nv {
            if dense[(l.u + i, l.u + j)] != -dense[(l.u + i, l.v_s + j)] {
                mismatches += 1;
            }
        }
    }
    for i in 0..nv {
        for j in 0..nv {
            if dense[(l.w + i, l.w + j)] != -dense[(l.w + i, l.v_s + j)] {
                mismatches += 1;
            }
            if !pinned[l.v_s + i] && dense[(l.v_s + i, l.v_s + j)] != -dense[(l.v_s + i, l.w + j)] {
                mismatches += 1;
            }
        }
    }
    if mismatches > 0 {
        return Err(format!("{mismatches} entries differ between blocks that should be identical"));
    }
    let m = to_dense(&assemble_mass(&d.velocity, &d.velocity, &s.u_s, &params, |_, _| 1.0).unwrap());
    let dm = to_dense(&assemble_d(&d.velocity, &d.velocity, &s.u_s, &params, DragWeight::Full).unwrap());
    let mut op_diff = 0.0f64;
    for i in 0..nv {
        for j in 0..nv {
            if !pinned[l.u + i] {
                op_diff = op_diff.max((dense[(l.u + i, l.u + j)] - m[(i, j)]).abs());
            }
            op_diff = op_diff.max((dense[(l.w + i, l.w + j)] - 0.5 * dm[(i, j)]).abs());
        }
    }
    if op_diff > 1e-15 {
        return Err(format!("fused blocks differ from the operators by {op_diff:.1e}"));
    }
    let flt = |xi: f64| assemble_d(&d.velocity, &d.velocity, &s.u_s, &MaterialParams::unit(xi), DragWeight::Filtration);
    let base = flt(0.3).unwrap();
    for xi in [0.5, 0.9] {
        if flt(xi).unwrap().val() != base.val() {
            return Err(format!("filtration drag changes with xi = {xi}"));
        }
    }
    Ok(format!("kinematic and drag block pairs identical; operators match fused blocks to {op_diff:.1e}"))
}

/// Residual of the fused assembly against the same equations composed from
/// the individual operators, for homogeneous data.
pub fn check_fused_against_operators() -> Check {
    let mut r = rng(14);
    let d = disc(4, 2, 2, TagRule::AllDirichlet);
    let l = d.layout;
    let mut worst = 0.0f64;
    for form in FORMS {
        let params = MaterialParams::unit(0.5);
        let model = Model::new(form, params);
        let s = random_state(&d, form, 0.02, &mut r);
        let alpha = 2.0;
        let offset = random_vec(&mut r, l.n_velocity);
        let coupling = TimeCoupling::Rate { alpha, offset: offset.clone() };
        let samples = SourceSamples::new(&d, &NoSources, 0.0);
        let fused = assemble_at(&d, &model, &s.to_vector(), &coupling, &samples, false).unwrap().residual;

        let (v, p, u) = (&d.velocity, &d.pressure, &s.u_s);
        let (us, vs, w, pc) = (&u.coefficients, &s.v_s.coefficients, &s.w.coefficients, &s.p.coefficients);
        let m = assemble_mass(v, v, u, &params, |_, _| 1.0).unwrap();
        let (a2, _) = assemble_elastic(v, u, &params, &NeoHookean).unwrap();
        let k = assemble_k(p, u, &params).unwrap();
        let ones = vec![1.0; p.n_dofs()];
        let mass_p = matvec(&assemble_mass(p, p, u, &params, |_, _| 1.0).unwrap(), &ones);
        let b = |wt| assemble_b(p, v, u, &params, wt).unwrap();
        let bt = |wt| assemble_b_transpose(v, p, u, &params, wt).unwrap();
        let add = |terms: &[(f64, Vec<f64>)]| -> Vec<f64> {
            let mut out = vec![0.0; terms[0].1.len()];
            for (c, t) in terms {
                for (o, x) in out.iter_mut().zip(t) {
                    *o += c * x;
                }
            }
            out
        };
        let rate: Vec<f64> = us.iter().zip(&offset).zip(vs).map(|((u, o), v)| alpha * u + o - v).collect();
        let r_u = matvec(&m, &rate);
        let (r_s, r_w, r_p) = match form {
            Formulation::FluidVelocity => {
                let dm = assemble_d(v, v, u, &params, DragWeight::Full).unwrap();
                (
                    add(&[
                        (1.0, a2),
                        (0.5, matvec(&dm, vs)),
                        (-0.5, matvec(&dm, w)),
                        (-0.5, matvec(&bt(BWeight::Solid), pc)),
                    ]),
                    add(&[(-0.5, matvec(&dm, vs)), (0.5, matvec(&dm, w)), (-0.5, matvec(&bt(BWeight::Fluid), pc))]),
                    add(&[
                        (0.5, matvec(&b(BWeight::Solid), vs)),
                        (0.5, matvec(&b(BWeight::Fluid), w)),
                        (1.0, matvec(&k, pc)),
                        (s.multiplier, mass_p.clone()),
                    ]),
                )
            }
            Formulation::FiltrationVelocity => {
                let dm = assemble_d(v, v, u, &params, DragWeight::Filtration).unwrap();
                (
                    add(&[(1.0, a2), (-1.0, matvec(&bt(BWeight::Mixture), pc))]),
                    add(&[(0.5, matvec(&dm, w)), (-0.5, matvec(&bt(BWeight::Mixture), pc))]),
                    add(&[
                        (1.0, matvec(&b(BWeight::Mixture), vs)),
                        (0.5, matvec(&b(BWeight::Mixture), w)),
                        (1.0, matvec(&k, pc)),
                        (s.multiplier, mass_p.clone()),
                    ]),
                )
            }
        };
        let mut composed = vec![0.0; l.total];
        composed[l.u..l.u + l.n_velocity].copy_from_slice(&r_u);
        composed[l.v_s..l.v_s + l.n_velocity].copy_from_slice(&r_s);
        composed[l.w..l.w + l.n_velocity].copy_from_slice(&r_w);
        composed[l.p..l.p + l.n_pressure].copy_from_slice(&r_p);
        composed[l.multiplier] = dot(&mass_p, pc);
        let mut pinned = vec![false; l.total];
        for &(i, _) in samples.dirichlet() {
            pinned[i] = true;
        }
        let scale = norm(&composed);
        for i in (0..l.total).filter(|&i| !pinned[i]) {
            worst = worst.max((fused[i] - composed[i]).abs() / scale);
        }
    }
    let detail = format!("max relative row difference {worst:.2e}");
    if worst <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Analytic Jacobian columns against central differences of the residual.
pub fn check_jacobian_columns() -> Check {
    let mut r = rng(15);
    let d = disc(4, 2, 2, TagRule::AllDirichlet);
    let l = d.layout;
    let mut worst = 0.0f64;
    for form in FORMS {
        let params = MaterialParams::unit(0.5);
        let ms = ManufacturedSolution::default();
        let model = Model::new(form, params).with_sources(Arc::new(MmsSources::new(ms, form, params)));
        let x = random_state(&d, form, 0.02, &mut r).to_vector();
        let coupling = TimeCoupling::Rate { alpha: 750.0, offset: random_vec(&mut r, l.n_velocity) };
        let samples = SourceSamples::new(&d, &*model.sources, 0.37);
        let jac = assemble_at(&d, &model, &x, &coupling, &samples, true).unwrap().jacobian.unwrap();
        let dense = to_dense(&jac);
        for _ in 0..20 {
            let j = r.random_range(0..l.total);
            let h = 1e-6 * (1.0 + x[j].abs());
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[j] += h;
            xm[j] -= h;
            let rp = assemble_at(&d, &model, &xp, &coupling, &samples, false).unwrap().residual;
            let rm = assemble_at(&d, &model, &xm, &coupling, &samples, false).unwrap().residual;
            let fd: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            let col: Vec<f64> = (0..l.total).map(|i| dense[(i, j)]).collect();
            let diff: Vec<f64> = col.iter().zip(&fd).map(|(a, b)| a - b).collect();
            worst = worst.max(norm(&diff) / norm(&col).max(1e-300));
        }
    }
    let detail = format!("40 columns, max relative difference {worst:.2e}");
    if worst <= 1e-5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

pub fn check_operator_algebra() -> Check {
    let parts = [
        ("adjoint", check_adjoint_pairs()),
        ("psd", check_psd_and_kernel()),
        ("identities", check_shared_space_identities()),
        ("fused", check_fused_against_operators()),
        ("jacobian", check_jacobian_columns()),
    ];
    let text: Vec<String> = parts
        .iter()
        .map(|(name, c)| match c {
            Ok(s) => format!("{name}: {s}"),
            Err(s) => format!("{name} FAILED: {s}"),
        })
        .collect();
    if parts.iter().all(|(_, c)| c.is_ok()) {
        Ok(text.join(" | "))
    } else {
        Err(text.join(" | "))
    }
}

/// Fourth-order central difference of a vector function of `x` along `axis`.
fn dx<const N: usize>(f: impl Fn([f64; 2]) -> [f64; N], x: [f64; 2], axis: usize, h: f64) -> [f64; N] {
    let at = |k: f64| {
        let mut y = x;
        y[axis] += k * h;
        f(y)
    };
    let (p1, m1, p2, m2) = (at(1.0), at(-1.0), at(2.0), at(-2.0));
    std::array::from_fn(|i| (8.0 * (p1[i] - m1[i]) - (p2[i] - m2[i])) / (12.0 * h))
}

/// Relative mismatch with the sum of magnitudes of the compared quantities as
/// scale.
fn rel(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = a.iter().chain(b).map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn third_field(ms: &ManufacturedSolution, form: Formulation, x: [f64; 2], t: f64, xi: f64) -> [f64; 2] {
    match form {
        Formulation::FluidVelocity => ms.fluid_velocity(x, t),
        Formulation::FiltrationVelocity => ms.filtration_velocity(x, t, xi),
    }
}

/// Row residuals of the manufactured fields at a point, with and without the
/// synthesized sources.
fn strong_rows(
    ms: &ManufacturedSolution,
    src: &MmsSources,
    form: Formulation,
    params: &MaterialParams,
    x: [f64; 2],
    t: f64,
    with_sources: bool,
) -> [f64; 6] {
    let g = ms.displacement_gradient(x, t);
    let h = Mat2::new(g[0][0], g[0][1], g[1][0], g[1][1]);
    let vs = Vector2::from(ms.solid_velocity(x, t));
    let w = Vector2::from(third_field(ms, form, x, t, params.xi_rs));
    let gp = Vector2::from(ms.pressure_gradient(x, t));
    let s = if with_sources { src.body(x, t) } else { PointSources::default() };
    row_residuals_at(form, params, &h, &vs, &w, &gp, &s).unwrap().to_array()
}

fn stress_at(ms: &ManufacturedSolution, params: &MaterialParams, x: [f64; 2], t: f64) -> [f64; 4] {
    let g = ms.displacement_gradient(x, t);
    let kin = kinematics_at(&Mat2::new(g[0][0], g[0][1], g[1][0], g[1][1]), params).unwrap();
    let p = piola_stress(&kin, params);
    [p[(0, 0)], p[(0, 1)], p[(1, 0)], p[(1, 1)]]
}

/// `J - 1 = tr H + det H` for `H = grad u`, free of the cancellation in `J - 1`.
fn jacobian_minus_one(ms: &ManufacturedSolution, x: [f64; 2], t: f64) -> f64 {
    let g = ms.displacement_gradient(x, t);
    g[0][0] + g[1][1] + g[0][0] * g[1][1] - g[0][1] * g[1][0]
}

/// Closed-form derivatives and synthesized sources of the manufactured
/// solution against fourth-order central differences (step 2.5e-4) at 1000 random points
/// per formulation and volume fraction. The volume fractions stay below the
/// smallest `J` of the manufactured deformation, about 0.866. The strong residuals are the
/// pointwise equations behind the weak rows: `-Div P + r_s`, `r_w`,
/// `-Div r_q - g` in the interior and `r_q . n + J F^-1 v_s . n - h` on the
/// boundary.
pub fn check_mms_oracle() -> Check {
    let ms = ManufacturedSolution::default();
    let (h, samples) = (2.5e-4, 1000);
    let mut worst_derivative = (0.0f64, "");
    let mut worst_strong = (0.0f64, "");
    let mut r = rng(8);
    for form in FORMS {
        for xi in [0.5, 0.7] {
            let params = MaterialParams::unit(xi);
            let src = MmsSources::new(ms, form, params);
            for _ in 0..samples {
                let x = [r.random_range(0.0..1.0), r.random_range(0.0..1.0)];
                let t = r.random_range(0.0..1.0);
                let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = vec![Default::default(); 7];
                let hess = ms.displacement_hessian(x, t);
                for axis in 0..2 {
                    let col = |m: [[f64; 2]; 2]| [m[0][axis], m[1][axis]];
                    let grad_u = |y| {
                        let g = ms.displacement_gradient(y, t);
                        [g[0][0], g[0][1], g[1][0], g[1][1]]
                    };
                    let found: [(Vec<f64>, Vec<f64>); 7] = [
                        (col(ms.displacement_gradient(x, t)).into(), dx(|y| ms.displacement(y, t), x, axis, h).into()),
                        (
                            col(ms.solid_velocity_gradient(x, t)).into(),
                            dx(|y| ms.solid_velocity(y, t), x, axis, h).into(),
                        ),
                        (
                            col(ms.fluid_velocity_gradient(x, t)).into(),
                            dx(|y| ms.fluid_velocity(y, t), x, axis, h).into(),
                        ),
                        (
                            col(ms.filtration_velocity_gradient(x, t, xi)).into(),
                            dx(|y| ms.filtration_velocity(y, t, xi), x, axis, h).into(),
                        ),
                        (vec![ms.pressure_gradient(x, t)[axis]], dx(|y| [ms.pressure(y, t)], x, axis, h).into()),
                        (
                            vec![ms.jacobian_gradient(x, t)[axis]],
                            dx(|y| [jacobian_minus_one(&ms, y, t)], x, axis, h).into(),
                        ),
                        (
                            vec![hess[0][0][axis], hess[0][1][axis], hess[1][0][axis], hess[1][1][axis]],
                            dx(grad_u, x, axis, h).into(),
                        ),
                    ];
                    for (acc, (a, b)) in pairs.iter_mut().zip(found) {
                        acc.0.extend(a);
                        acc.1.extend(b);
                    }
                }
                let names = ["grad u", "grad v_s", "grad v_f", "grad v_flt", "grad p", "grad J", "hess u"];
                let mut d = (0.0f64, "");
                let mut note = |v: f64, name: &'static str| {
                    if v > d.0 {
                        d = (v, name);
                    }
                };
                for ((a, b), name) in pairs.iter().zip(names) {
                    note(rel(a, b), name);
                }
                let dudt = dx(|y| ms.displacement(x, y[0]), [t, 0.0], 0, h);
                note(rel(&ms.solid_velocity(x, t), &dudt), "v_s - du/dt");
                let flux_partials: Vec<f64> =
                    (0..2).map(|axis| dx(|y| ms.mixture_flux(y, t, xi).into(), x, axis, h)[axis]).collect();
                let div_flux: f64 = flux_partials.iter().sum();
                let flux_scale: f64 = flux_partials.iter().map(|v| v.abs()).sum();
                note((ms.mixture_flux_divergence(x, t, xi) - div_flux).abs() / flux_scale, "div flux");
                let (pa, pb) =
                    (dx(|y| stress_at(&ms, &params, y, t), x, 0, h), dx(|y| stress_at(&ms, &params, y, t), x, 1, h));
                let div_p = [pa[0] + pb[1], pa[2] + pb[3]];
                let sd = ms.stress_divergence(x, t, &params);
                for i in 0..2 {
                    let sc = pa[2 * i].abs() + pb[2 * i + 1].abs();
                    note((sd[i] - div_p[i]).abs() / sc, "div P");
                }
                if d.0 > worst_derivative.0 {
                    worst_derivative = d;
                }

                let rows = strong_rows(&ms, &src, form, &params, x, t, true);
                let bare = strong_rows(&ms, &src, form, &params, x, t, false);
                let s = src.body(x, t);
                let div_rq: f64 = (0..2)
                    .map(|axis| dx(|y| strong_rows(&ms, &src, form, &params, y, t, true), x, axis, h)[4 + axis])
                    .sum();
                let strong = [-div_p[0] + rows[0], -div_p[1] + rows[1], rows[2], rows[3], -div_rq - s.g];
                let scale = [
                    div_p[0].abs() + bare[0].abs() + (rows[0] - bare[0]).abs(),
                    div_p[1].abs() + bare[1].abs() + (rows[1] - bare[1]).abs(),
                    bare[2].abs() + (rows[2] - bare[2]).abs(),
                    bare[3].abs() + (rows[3] - bare[3]).abs(),
                    div_rq.abs() + s.g.abs(),
                ];
                let rows = ["solid x", "solid y", "fluid x", "fluid y", "constraint"];
                for ((v, sc), name) in strong.iter().zip(scale).zip(rows) {
                    if sc > 0.0 && v.abs() / sc > worst_strong.0 {
                        worst_strong = (v.abs() / sc, name);
                    }
                }
            }
            for k in 0..samples / 10 {
                let s = r.random_range(0.0..1.0);
                let t = r.random_range(0.0..1.0);
                let (x, n) = match k % 4 {
                    0 => ([s, 0.0], [0.0, -1.0]),
                    1 => ([1.0, s], [1.0, 0.0]),
                    2 => ([s, 1.0], [0.0, 1.0]),
                    _ => ([0.0, s], [-1.0, 0.0]),
                };
                let rows = strong_rows(&ms, &src, form, &params, x, t, true);
                let f = ms.deformation_gradient(x, t);
                let j = f.determinant();
                let vs = f.try_inverse().unwrap() * Vector2::from(ms.solid_velocity(x, t)) * j;
                let nv = Vector2::from(n);
                let flux = src.boundary_flux(x, n, t);
                let normal_rq = rows[4] * n[0] + rows[5] * n[1];
                let v = normal_rq + vs.dot(&nv) - flux;
                let sc = normal_rq.abs() + vs.dot(&nv).abs() + flux.abs();
                if sc > 0.0 && v.abs() / sc > worst_strong.0 {
                    worst_strong = (v.abs() / sc, "boundary flux");
                }
            }
        }
    }
    let detail = format!(
        "{} interior samples: derivatives max rel {:.2e} ({}), strong residuals max rel {:.2e} ({})",
        4 * samples,
        worst_derivative.0,
        worst_derivative.1,
        worst_strong.0,
        worst_strong.1,
    );
    if worst_derivative.0 <= 1e-7 && worst_strong.0 <= 1e-7 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Residual at the interpolated manufactured solution on n = 4, 8, 16.
pub fn check_consistency() -> Check {
    let mut details = Vec::new();
    let mut ok = true;
    for form in FORMS {
        for t in [0.35, 0.7] {
            let cfg = StudyParams { formulation: form, ..Default::default() };
            let vals: Vec<f64> = [4, 8, 16].iter().map(|&n| consistency_residual(&cfg, n, t).unwrap()).collect();
            ok &= vals.windows(2).all(|w| w[1] < w[0]);
            details.push(format!("{form} t={t}: {:.3e} {:.3e} {:.3e}", vals[0], vals[1], vals[2]));
        }
    }
    let detail = details.join("; ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// A few BDF2 steps of the manufactured problem from a random start time.
pub fn solved_state(form: Formulation, n: usize, seed: u64) -> (Discretization, MixedState, MaterialParams) {
    let mut r = rng(seed);
    let t0 = r.random_range(0.1..0.9);
    let cfg = StudyParams {
        formulation: form,
        integrator: TimeIntegratorConfig { t_end: t0 + 0.01, ..Default::default() },
        ..Default::default()
    };
    let (d, model) = level_problem(&cfg, n).unwrap();
    let mut initial = interpolated_state(&d, &cfg, t0);
    initial.p.coefficients.iter_mut().for_each(|c| *c = 0.0);
    let mut integ = TimeIntegrator::new(&d, &model, cfg.integrator, initial, t0).unwrap();
    for k in 1..=5 {
        integ.advance(t0 + k as f64 * 0.002).unwrap();
    }
    let state = integ.state().clone();
    (d, state, cfg.params)
}

/// Fluid-to-filtration-to-fluid recovery and the reverse on solved states.
pub fn check_recovery_round_trip() -> Check {
    let mut worst = 0.0f64;
    for (i, form) in FORMS.into_iter().enumerate() {
        for seed in 0..3 {
            let (_, state, params) = solved_state(form, 4, 100 + 10 * i as u64 + seed);
            let other = match form {
                Formulation::FluidVelocity => Formulation::FiltrationVelocity,
                Formulation::FiltrationVelocity => Formulation::FluidVelocity,
            };
            let recover = |s: &MixedState| match s.formulation {
                Formulation::FluidVelocity => recover_filtration_velocity(s, &params).unwrap(),
                Formulation::FiltrationVelocity => recover_fluid_velocity(s, &params).unwrap(),
            };
            let mut mid = state.clone();
            mid.formulation = other;
            mid.w = recover(&state).field;
            let back = recover(&mid).field;
            let scale = state.w.coefficients.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let diff =
                back.coefficients.iter().zip(&state.w.coefficients).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst = worst.max(diff / scale);
        }
    }
    let detail = format!("6 solved states, max relative round-trip error {worst:.2e}");
    if worst <= 1e-10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Free decay for both formulations at two volume fractions.
pub fn check_energy_decay() -> Check {
    let mut details = Vec::new();
    let mut ok = true;
    for form in FORMS {
        for xi in [0.5, 0.9] {
            let cfg = DecayConfig { formulation: form, params: MaterialParams::unit(xi), ..Default::default() };
            match energy_decay(&cfg) {
                Ok(r) => {
                    let steps = r.log.len() - 1;
                    ok &= r.passed && steps == 200;
                    details.push(format!(
                        "{form} xi={xi}: {steps} steps, max increase {:.1e}, W {:.3e} -> {:.3e}",
                        r.max_increase, r.log[0].stored, r.log[steps].stored
                    ));
                }
                Err(e) => {
                    ok = false;
                    details.push(format!("{form} xi={xi}: {e}"));
                }
            }
        }
    }
    let detail = details.join("; ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}
