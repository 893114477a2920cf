//! Steady states of the filtration problem via the transformed equation
//! Δz + λg(z) = 0 with z = K(w) and g = f∘K⁻¹, which is semilinear so the
//! Jacobian Δ + λg'(z)·I stays tridiagonal. Provides damped Newton solves,
//! pseudo-arclength continuation through folds (secant predictor, Newton
//! corrector on the bordered system), and fold (λ*) location by local
//! quadratic fit refined with corrector re-solves.

use thiserror::Error;

use crate::discretize::{DiscretizeError, Field, Grid, LinearOperator};
use crate::expr::ExprError;
use crate::model::{invert_monotone, ModelError, NonlinearModel};
use crate::numerics::solve_tridiag_pivot;

/// A converged steady state in both variables (z = K(w)).
#[derive(Debug, Clone)]
pub struct SteadyState {
    pub lambda: f64,
    pub z: Field,
    pub w: Field,
    /// Max-norm of the discrete residual Δz + λg(z).
    pub residual: f64,
    pub newton_iterations: usize,
}

impl SteadyState {
    pub fn max_z(&self) -> f64 {
        self.z.max()
    }
}

/// Arclength-parameterized branch with per-segment turning flags.
#[derive(Debug, Clone)]
pub struct SteadyBranch {
    pub states: Vec<SteadyState>,
    /// Cumulative pseudo-arclength at each state.
    pub arclength: Vec<f64>,
    /// True on segments where dλ/ds changes sign.
    pub turning: Vec<bool>,
}

impl SteadyBranch {
    /// Index of the first state after a dλ sign change, if any.
    pub fn fold_index(&self) -> Option<usize> {
        self.turning.iter().position(|&t| t).map(|i| i + 1)
    }
}

/// Located fold: the critical λ*, the state there, and accuracy metadata.
#[derive(Debug, Clone)]
pub struct FoldReport {
    pub lambda_star: f64,
    pub state: SteadyState,
    /// λ values of the branch points bracketing the fold.
    pub bracket: (f64, f64),
    /// Estimated accuracy: spread between fit rounds plus sample gap.
    pub accuracy: f64,
}

/// Which side of the fold a state is requested from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchSide {
    Lower,
    Upper,
}

#[derive(Debug, Error)]
pub enum SteadyError {
    #[error("Newton diverged at λ = {lambda} (residual {residual:.3e} after {iterations} iterations)")]
    NewtonDivergence {
        lambda: f64,
        residual: f64,
        iterations: usize,
    },
    #[error("linear solve failed (singular Jacobian) at λ = {0}")]
    SingularJacobian(f64),
    #[error("branch contains no dλ/ds sign change; no fold to report")]
    NoFold,
    #[error("continuation stalled: step size fell below {0:.3e}")]
    StepTooSmall(f64),
    #[error("branch does not reach λ = {lambda} on the {side:?} side")]
    LambdaNotOnBranch { lambda: f64, side: BranchSide },
    #[error("K inversion failed at z = {z}: {msg}")]
    Inversion { z: f64, msg: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Discretize(#[from] DiscretizeError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Roundoff floor of the discrete residual: the stencil magnifies rounding
/// by its largest coefficient (~h⁻²).
fn residual_floor(op: &LinearOperator, z: &Field) -> f64 {
    let (_, diag, _) = op.bands();
    let scale = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    8.0 * f64::EPSILON * scale * (1.0 + z.sup_norm())
}

/// w = K⁻¹(z), warm-started Newton with a bracketed bisection fallback.
pub(crate) fn invert_k(m: &NonlinearModel, z: f64, warm: f64) -> Result<f64, SteadyError> {
    let mut w = if warm.is_finite() { warm } else { 0.0 };
    for _ in 0..60 {
        let d = m.k.eval_with_derivatives(w, 1)?;
        let err = d.value - z;
        if err.abs() <= 1e-13 * z.abs().max(1.0) {
            return Ok(w);
        }
        if d.d1 <= 0.0 || !d.d1.is_finite() {
            break;
        }
        let next = w - err / d.d1;
        if !next.is_finite() {
            break;
        }
        w = next;
    }
    // Expanding bracket around the warm start.
    let mut lo = w.min(0.0) - 1.0;
    let mut hi = w.max(0.0) + 1.0;
    for _ in 0..120 {
        let klo = m.k.eval(lo).unwrap_or(f64::INFINITY);
        let khi = m.k.eval(hi).unwrap_or(f64::NEG_INFINITY);
        if klo <= z && z <= khi {
            return Ok(invert_monotone(&m.k, z, (lo, hi))?);
        }
        let width = hi - lo;
        if klo > z {
            lo -= width;
        }
        if khi < z {
            hi += width;
        }
    }
    Err(SteadyError::Inversion {
        z,
        msg: "no bracket found for K⁻¹".into(),
    })
}

/// g(z) = f(K⁻¹(z)) and g'(z) = f'(w)/K'(w) at one node.
fn g_eval(m: &NonlinearModel, z: f64, warm_w: f64) -> Result<(f64, f64, f64), SteadyError> {
    let w = invert_k(m, z, warm_w)?;
    let fv = m.f.eval_with_derivatives(w, 1)?;
    let kv = m.k.eval_with_derivatives(w, 1)?;
    Ok((fv.value, fv.d1 / kv.d1, w))
}

struct ResidualEval {
    residual: Vec<f64>,
    gprime: Vec<f64>,
    w: Vec<f64>,
    norm: f64,
}

/// Discrete residual Δz + λg(z) at active nodes; z itself at Dirichlet rows.
fn eval_residual(
    m: &NonlinearModel,
    op: &LinearOperator,
    lambda: f64,
    z: &Field,
    warm_w: &[f64],
) -> Result<ResidualEval, SteadyError> {
    let n = op.n();
    let lz = op.apply(z);
    let mut residual = vec![0.0; n];
    let mut gprime = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut norm = 0.0f64;
    for i in 0..n {
        if op.is_dirichlet_node(i) {
            residual[i] = z[i];
            w[i] = invert_k(m, z[i], warm_w[i])?;
        } else {
            let (g, gp, wi) = g_eval(m, z[i], warm_w[i])?;
            residual[i] = lz[i] + lambda * g;
            gprime[i] = gp;
            w[i] = wi;
        }
        norm = norm.max(residual[i].abs());
    }
    Ok(ResidualEval {
        residual,
        gprime,
        w,
        norm,
    })
}

/// Jacobian bands of the residual: L + λ·diag(g'(z)) with identity
/// Dirichlet rows.
fn jacobian_bands(
    op: &LinearOperator,
    lambda: f64,
    gprime: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (sub, diag, sup) = op.bands();
    let n = op.n();
    let mut jd = diag.to_vec();
    let mut js = sub.to_vec();
    let mut ju = sup.to_vec();
    for i in 0..n {
        if op.is_dirichlet_node(i) {
            jd[i] = 1.0;
            if i > 0 {
                js[i - 1] = 0.0;
            }
            if i + 1 < n {
                ju[i] = 0.0;
            }
        } else {
            jd[i] += lambda * gprime[i];
        }
    }
    (js, jd, ju)
}

/// Damped Newton for Δz + λg(z) = 0 from the given guess.
pub fn solve_steady(
    m: &NonlinearModel,
    grid: &Grid,
    op: &LinearOperator,
    lambda: f64,
    guess: &Field,
) -> Result<SteadyState, SteadyError> {
    let n = grid.len();
    debug_assert_eq!(guess.len(), n);
    let mut z = guess.clone();
    // Dirichlet nodes carry z = 0 exactly.
    for i in 0..n {
        if op.is_dirichlet_node(i) {
            z[i] = 0.0;
        }
    }
    let mut warm = vec![0.0; n];
    let mut eval = eval_residual(m, op, lambda, &z, &warm)?;
    warm = eval.w.clone();

    const MAX_ITER: usize = 60;
    let tol = residual_floor(op, &z).max(1e-13);
    let mut iterations = 0;
    while eval.norm > tol && iterations < MAX_ITER {
        iterations += 1;
        let (js, jd, ju) = jacobian_bands(op, lambda, &eval.gprime);
        let rhs: Vec<f64> = eval.residual.iter().map(|r| -r).collect();
        let delta = solve_tridiag_pivot(&js, &jd, &ju, &rhs)
            .ok_or(SteadyError::SingularJacobian(lambda))?;

        // Backtracking line search on the residual norm.
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..24 {
            let trial = Field::from_values(
                z.values
                    .iter()
                    .zip(&delta)
                    .map(|(zi, di)| zi + alpha * di)
                    .collect(),
            );
            match eval_residual(m, op, lambda, &trial, &warm) {
                Ok(te) if te.norm.is_finite() && te.norm < eval.norm => {
                    accepted = Some((trial, te));
                    break;
                }
                _ => alpha *= 0.5,
            }
        }
        match accepted {
            Some((trial, te)) => {
                z = trial;
                warm = te.w.clone();
                eval = te;
            }
            None => {
                // The residual can stall at the roundoff floor of the
                // stencil; that already satisfies the acceptance bound.
                if eval.norm <= 1e-10 {
                    break;
                }
                return Err(SteadyError::NewtonDivergence {
                    lambda,
                    residual: eval.norm,
                    iterations,
                });
            }
        }
    }
    if eval.norm > 1e-10 {
        return Err(SteadyError::NewtonDivergence {
            lambda,
            residual: eval.norm,
            iterations,
        });
    }
    Ok(SteadyState {
        lambda,
        w: Field::from_values(eval.w),
        z,
        residual: eval.norm,
        newton_iterations: iterations,
    })
}

/// Lower-branch state by λ-ramping from 0 (the default guess policy).
pub fn lower_branch_state(
    m: &NonlinearModel,
    grid: &Grid,
    op: &LinearOperator,
    lambda: f64,
    ramp_steps: usize,
) -> Result<SteadyState, SteadyError> {
    let steps = ramp_steps.max(1);
    let mut guess = Field::zeros(grid.len());
    let mut state = None;
    for k in 1..=steps {
        let lam = lambda * k as f64 / steps as f64;
        let s = solve_steady(m, grid, op, lam, &guess)?;
        guess = s.z.clone();
        state = Some(s);
    }
    Ok(state.expect("ramp_steps >= 1"))
}

// ---------------------------------------------------------------------------
// Pseudo-arclength continuation
// ---------------------------------------------------------------------------

/// Scaled inner product on (z, λ) increments: the z block is averaged so
/// grid refinement does not drown the λ component.
fn xdot(a_z: &[f64], a_l: f64, b_z: &[f64], b_l: f64) -> f64 {
    let n = a_z.len().max(1) as f64;
    let zpart: f64 = a_z.iter().zip(b_z).map(|(x, y)| x * y).sum();
    zpart / n + a_l * b_l
}

fn xnorm(z: &[f64], l: f64) -> f64 {
    xdot(z, l, z, l).sqrt()
}

/// Continue the branch from a converged state by pseudo-arclength steps
/// (secant predictor, Newton corrector on the bordered system). Corrector
/// failures halve the step; below ds_min = 1e−8 the partial branch is
/// returned.
pub fn continue_branch(
    m: &NonlinearModel,
    grid: &Grid,
    op: &LinearOperator,
    from: &SteadyState,
    steps: usize,
    ds: f64,
) -> Result<SteadyBranch, SteadyError> {
    const DS_MIN: f64 = 1e-8;
    let n = grid.len();
    let mut states = vec![from.clone()];
    let mut arclength = vec![0.0];
    let mut turning = Vec::new();
    if steps == 0 {
        return Ok(SteadyBranch {
            states,
            arclength,
            turning,
        });
    }

    // Initial tangent from dz/dλ: J·(dz) = −g(z).
    let mut warm: Vec<f64> = from.w.values.clone();
    let eval = eval_residual(m, op, from.lambda, &from.z, &warm)?;
    let (js, jd, ju) = jacobian_bands(op, from.lambda, &eval.gprime);
    let rhs: Vec<f64> = (0..n)
        .map(|i| {
            if op.is_dirichlet_node(i) {
                0.0
            } else {
                // ∂R/∂λ = g(z); recover it from the residual identity.
                -(eval.residual[i] - op.apply(&from.z)[i]) / from.lambda.max(f64::MIN_POSITIVE)
            }
        })
        .collect();
    // For λ = 0 the branch leaves along pure λ direction.
    let dz = if from.lambda > 0.0 {
        solve_tridiag_pivot(&js, &jd, &ju, &rhs)
            .ok_or(SteadyError::SingularJacobian(from.lambda))?
    } else {
        let g0: Vec<f64> = (0..n)
            .map(|i| {
                if op.is_dirichlet_node(i) {
                    0.0
                } else {
                    Err::<f64, SteadyError>(SteadyError::SingularJacobian(0.0))
                        .or_else(|_| g_eval(m, from.z[i], warm[i]).map(|(g, _, _)| -g))
                        .unwrap_or(0.0)
                }
            })
            .collect();
        solve_tridiag_pivot(&js, &jd, &ju, &g0)
            .ok_or(SteadyError::SingularJacobian(from.lambda))?
    };
    let tnorm = xnorm(&dz, 1.0);
    let mut tangent_z: Vec<f64> = dz.iter().map(|v| v / tnorm).collect();
    let mut tangent_l = 1.0 / tnorm;

    let mut step = ds.abs();
    let mut s_acc = 0.0;
    let mut done = 0;
    while done < steps {
        let prev = states.last().expect("nonempty").clone();
        // Predictor.
        let zp = Field::from_values(
            prev.z
                .values
                .iter()
                .zip(&tangent_z)
                .map(|(z, t)| z + step * t)
                .collect(),
        );
        let lp = prev.lambda + step * tangent_l;

        match correct_bordered(m, op, &zp, lp, &prev, &tangent_z, tangent_l, &mut warm) {
            Ok(state) => {
                // Secant tangent, oriented along the previous one.
                let dznew: Vec<f64> = state
                    .z
                    .values
                    .iter()
                    .zip(&prev.z.values)
                    .map(|(a, b)| a - b)
                    .collect();
                let dl = state.lambda - prev.lambda;
                let nn = xnorm(&dznew, dl);
                if nn > 0.0 {
                    let mut tz: Vec<f64> = dznew.iter().map(|v| v / nn).collect();
                    let mut tl = dl / nn;
                    if xdot(&tz, tl, &tangent_z, tangent_l) < 0.0 {
                        for v in tz.iter_mut() {
                            *v = -*v;
                        }
                        tl = -tl;
                    }
                    turning.push(tl * tangent_l < 0.0);
                    tangent_z = tz;
                    tangent_l = tl;
                } else {
                    turning.push(false);
                }
                s_acc += step;
                arclength.push(s_acc);
                let quick = state.newton_iterations <= 3;
                states.push(state);
                done += 1;
                if quick {
                    step = (step * 1.3).min(ds.abs() * 4.0);
                }
            }
            Err(_) => {
                step *= 0.5;
                if step < DS_MIN {
                    // Partial branch: callers inspect length.
                    return Ok(SteadyBranch {
                        states,
                        arclength,
                        turning,
                    });
                }
            }
        }
    }
    Ok(SteadyBranch {
        states,
        arclength,
        turning,
    })
}

/// Newton corrector for the bordered system
///   R(z, λ) = 0,   t·((z, λ) − (z_pred, λ_pred)) = 0
/// solved by block elimination (two tridiagonal solves per iteration).
#[allow(clippy::too_many_arguments)]
fn correct_bordered(
    m: &NonlinearModel,
    op: &LinearOperator,
    z_pred: &Field,
    lambda_pred: f64,
    tangent_z: &[f64],
    tangent_l: f64,
    warm: &mut Vec<f64>,
) -> Result<SteadyState, SteadyError> {
    let n = op.n();
    let mut z = z_pred.clone();
    for i in 0..n {
        if op.is_dirichlet_node(i) {
            z[i] = 0.0;
        }
    }
    let mut lambda = lambda_pred;
    let mut local_warm = warm.clone();

    const MAX_ITER: usize = 14;
    let mut eval = eval_residual(m, op, lambda, &z, &local_warm)?;
    local_warm = eval.w.clone();
    for iterations in 1..=MAX_ITER {
        let tol = residual_floor(op, &z).max(1e-13);
        // Constraint value c = t·(x − x_pred) relative to the predictor.
        let dz_c: Vec<f64> = z
            .values
            .iter()
            .zip(&z_pred.values)
            .map(|(a, b)| a - b)
            .collect();
        let c = xdot(&dz_c, lambda - lambda_pred, tangent_z, tangent_l);
        if eval.norm <= tol && c.abs() <= 1e-10 * (1.0 + lambda.abs()) {
            *warm = local_warm.clone();
            return Ok(SteadyState {
                lambda,
                w: Field::from_values(eval.w),
                z,
                residual: eval.norm,
                newton_iterations: iterations,
            });
        }

        let (js, jd, ju) = jacobian_bands(op, lambda, &eval.gprime);
        let rhs_a: Vec<f64> = eval.residual.iter().map(|r| -r).collect();
        // ∂R/∂λ = g(z) at active nodes (zero at Dirichlet rows).
        let mut dr_dl = vec![0.0; n];
        for i in 0..n {
            if !op.is_dirichlet_node(i) {
                let (g, _, _) = g_eval(m, z[i], local_warm[i])?;
                dr_dl[i] = g;
            }
        }
        let rhs_b: Vec<f64> = dr_dl.iter().map(|v| -v).collect();
        let a = solve_tridiag_pivot(&js, &jd, &ju, &rhs_a)
            .ok_or(SteadyError::SingularJacobian(lambda))?;
        let b = solve_tridiag_pivot(&js, &jd, &ju, &rhs_b)
            .ok_or(SteadyError::SingularJacobian(lambda))?;
        // Linearized constraint: c + t·(δz, δλ) = 0 with δz = a + δλ·b.
        let ta = xdot(tangent_z, 0.0, &a, 0.0);
        let tb = xdot(tangent_z, 0.0, &b, 0.0);
        let denom = tb + tangent_l;
        if denom.abs() < 1e-300 {
            return Err(SteadyError::SingularJacobian(lambda));
        }
        let dlambda = -(c + ta) / denom;
        for i in 0..n {
            z[i] += a[i] + dlambda * b[i];
            if op.is_dirichlet_node(i) {
                z[i] = 0.0;
            }
        }
        lambda += dlambda;
        if !lambda.is_finite() {
            return Err(SteadyError::NewtonDivergence {
                lambda: lambda_pred,
                residual: f64::INFINITY,
                iterations,
            });
        }
        eval = eval_residual(m, op, lambda, &z, &local_warm)?;
        local_warm = eval.w.clone();
    }
    Err(SteadyError::NewtonDivergence {
        lambda: lambda_pred,
        residual: eval.norm,
        iterations: MAX_ITER,
    })
}

// ---------------------------------------------------------------------------
// Fold location
// ---------------------------------------------------------------------------

/// Locate λ* from the branch: quadratic fit of λ(s) through the three
/// points nearest the dλ sign change, refined by corrector re-solves.
pub fn find_lambda_star(
    b: &SteadyBranch,
    m: &NonlinearModel,
    grid: &Grid,
    op: &LinearOperator,
) -> Result<FoldReport, SteadyError> {
    let j = b.fold_index().ok_or(SteadyError::NoFold)?;
    // Use the max-λ sample among the fold neighborhood as the center.
    let mut jc = j;
    for k in j.saturating_sub(2)..(j + 2).min(b.states.len() - 1) {
        if b.states[k].lambda > b.states[jc].lambda {
            jc = k;
        }
    }
    let jc = jc.clamp(1, b.states.len() - 2);

    let fit_vertex = |s: [f64; 3], l: [f64; 3]| -> Option<(f64, f64)> {
        // Lagrange quadratic through (s_i, λ_i); vertex of dλ/ds = 0.
        let d0 = (s[0] - s[1]) * (s[0] - s[2]);
        let d1 = (s[1] - s[0]) * (s[1] - s[2]);
        let d2 = (s[2] - s[0]) * (s[2] - s[1]);
        let a = l[0] / d0 + l[1] / d1 + l[2] / d2;
        let bb = -(l[0] * (s[1] + s[2]) / d0 + l[1] * (s[0] + s[2]) / d1 + l[2] * (s[0] + s[1]) / d2);
        if a.abs() < 1e-300 {
            return None;
        }
        let s_star = -bb / (2.0 * a);
        let l_star = l[0] * (s_star - s[1]) * (s_star - s[2]) / d0
            + l[1] * (s_star - s[0]) * (s_star - s[2]) / d1
            + l[2] * (s_star - s[0]) * (s_star - s[1]) / d2;
        Some((s_star, l_star))
    };

    let mut pts_s = [
        b.arclength[jc - 1],
        b.arclength[jc],
        b.arclength[jc + 1],
    ];
    let mut pts_l = [
        b.states[jc - 1].lambda,
        b.states[jc].lambda,
        b.states[jc + 1].lambda,
    ];
    let mut pts_state = [
        b.states[jc - 1].clone(),
        b.states[jc].clone(),
        b.states[jc + 1].clone(),
    ];

    let mut lambda_fit = pts_l[1];
    let mut rounds = Vec::new();
    for _ in 0..2 {
        let (s_star, l_star) = fit_vertex(pts_s, pts_l).ok_or(SteadyError::NoFold)?;
        lambda_fit = l_star;
        rounds.push(l_star);
        // Corrector re-solve near the vertex: interpolate z linearly
        // between the two samples surrounding s_star, then correct in the
        // plane orthogonal to the secant.
        let (ia, ib) = if s_star <= pts_s[1] { (0, 1) } else { (1, 2) };
        let seg = pts_s[ib] - pts_s[ia];
        let theta = ((s_star - pts_s[ia]) / seg).clamp(0.0, 1.0);
        let z_guess = Field::from_values(
            pts_state[ia]
                .z
                .values
                .iter()
                .zip(&pts_state[ib].z.values)
                .map(|(a, c)| a * (1.0 - theta) + c * theta)
                .collect(),
        );
        let l_guess = l_star;
        let dz_sec: Vec<f64> = pts_state[ib]
            .z
            .values
            .iter()
            .zip(&pts_state[ia].z.values)
            .map(|(a, c)| a - c)
            .collect();
        let dl_sec = pts_l[ib] - pts_l[ia];
        let nn = xnorm(&dz_sec, dl_sec);
        let tz: Vec<f64> = dz_sec.iter().map(|v| v / nn).collect();
        let tl = dl_sec / nn;
        let mut warm = pts_state[ia].w.values.clone();
        if let Ok(refined) = correct_bordered(
            m,
            op,
            &z_guess,
            l_guess,
            &pts_state[ia],
            &tz,
            tl,
            &mut warm,
        ) {
            // Replace the farthest endpoint with the refined sample.
            let far = if (s_star - pts_s[0]).abs() > (s_star - pts_s[2]).abs() {
                0
            } else {
                2
            };
            pts_s[far] = s_star;
            pts_l[far] = refined.lambda;
            pts_state[far] = refined;
            // Keep s ordering.
            let mut order = [0, 1, 2];
            order.sort_by(|&x, &y| pts_s[x].partial_cmp(&pts_s[y]).unwrap());
            pts_s = [pts_s[order[0]], pts_s[order[1]], pts_s[order[2]]];
            pts_l = [pts_l[order[0]], pts_l[order[1]], pts_l[order[2]]];
            pts_state = [
                pts_state[order[0]].clone(),
                pts_state[order[1]].clone(),
                pts_state[order[2]].clone(),
            ];
        } else {
            break;
        }
    }
    let _ = grid;

    let spread = if rounds.len() >= 2 {
        (rounds[rounds.len() - 1] - rounds[rounds.len() - 2]).abs()
    } else {
        f64::NAN
    };
    // The state with the largest λ among the fit samples stands for the fold.
    let best = pts_state
        .iter()
        .max_by(|a, c| a.lambda.partial_cmp(&c.lambda).unwrap())
        .expect("three samples")
        .clone();
    let bracket = (
        pts_l.iter().copied().fold(f64::INFINITY, f64::min),
        lambda_fit.max(pts_l.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
    );
    let accuracy = spread.max((bracket.1 - bracket.0).abs() * 0.5);
    Ok(FoldReport {
        lambda_star: lambda_fit,
        state: best,
        bracket,
        accuracy,
    })
}

/// Re-solve a state at exactly `lambda` on the requested side of the fold,
/// seeding Newton from the bracketing branch samples.
pub fn branch_state_at_lambda(
    b: &SteadyBranch,
    m: &NonlinearModel,
    grid: &Grid,
    op: &LinearOperator,
    lambda: f64,
    side: BranchSide,
) -> Result<SteadyState, SteadyError> {
    let fold = b.fold_index().unwrap_or(b.states.len());
    let range: Box<dyn Iterator<Item = usize>> = match side {
        BranchSide::Lower => Box::new(0..fold.min(b.states.len().saturating_sub(1))),
        BranchSide::Upper => Box::new(fold.saturating_sub(1)..b.states.len().saturating_sub(1)),
    };
    for i in range {
        let (la, lb) = (b.states[i].lambda, b.states[i + 1].lambda);
        if (la - lambda) * (lb - lambda) <= 0.0 && la != lb {
            let theta = (lambda - la) / (lb - la);
            let guess = Field::from_values(
                b.states[i]
                    .z
                    .values
                    .iter()
                    .zip(&b.states[i + 1].z.values)
                    .map(|(x, y)| x * (1.0 - theta) + y * theta)
                    .collect(),
            );
            return solve_steady(m, grid, op, lambda, &guess);
        }
    }
    Err(SteadyError::LambdaNotOnBranch { lambda, side })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{build_grid, laplacian};
    use crate::expr::Expression;
    use crate::model::{BoundaryKind, BoundarySpec, DomainSpec};
    use approx::assert_relative_eq;

    /// Classical Bratu problem: K = u so g(z) = e^z exactly.
    fn bratu_model(lambda: f64) -> NonlinearModel {
        NonlinearModel::new(
            Expression::parse("u").unwrap(),
            Expression::parse("exp(u)").unwrap(),
            lambda,
            DomainSpec::Interval { a: 0.0, b: 1.0 },
            BoundarySpec::uniform_interval(BoundaryKind::Dirichlet),
            Expression::parse_with_var("0", "x").unwrap(),
        )
        .unwrap()
    }

    fn gelfand_model(lambda: f64) -> NonlinearModel {
        NonlinearModel::new(
            Expression::parse("exp(u)-1").unwrap(),
            Expression::parse("exp(2*u)").unwrap(),
            lambda,
            DomainSpec::Interval { a: 0.0, b: 1.0 },
            BoundarySpec::uniform_interval(BoundaryKind::Dirichlet),
            Expression::parse_with_var("0", "x").unwrap(),
        )
        .unwrap()
    }

    fn setup(n: usize) -> (Grid, LinearOperator) {
        let g = build_grid(&DomainSpec::Interval { a: 0.0, b: 1.0 }, n).unwrap();
        let op = laplacian(&g, &BoundarySpec::uniform_interval(BoundaryKind::Dirichlet)).unwrap();
        (g, op)
    }

    /// Closed-form Bratu midpoint value: θ solves θ = √(2λ)·cosh(θ/4),
    /// max z = 2·ln cosh(θ/4) (lower root).
    fn bratu_max_z(lambda: f64) -> f64 {
        let f = |t: f64| t - (2.0 * lambda).sqrt() * (t / 4.0).cosh();
        let theta = crate::numerics::bisect(f, 0.0, 3.0, 1e-14);
        2.0 * (theta / 4.0).cosh().ln()
    }

    #[test]
    fn zero_lambda_gives_zero_solution() {
        let m = bratu_model(1.0);
        let (g, op) = setup(32);
        let s = solve_steady(&m, &g, &op, 0.0, &Field::zeros(g.len())).unwrap();
        assert!(s.z.sup_norm() <= 1e-12);
        assert!(s.residual <= 1e-10);
    }

    #[test]
    fn bratu_lower_solution_matches_closed_form() {
        let m = bratu_model(1.0);
        let (g, op) = setup(256);
        let s = solve_steady(&m, &g, &op, 1.0, &Field::zeros(g.len())).unwrap();
        let expected = bratu_max_z(1.0);
        assert_relative_eq!(s.max_z(), expected, max_relative = 2e-4);
        assert!(s.residual <= 1e-10);
        // w = K⁻¹(z) = z for K = u
        for i in 0..g.len() {
            assert_relative_eq!(s.w[i], s.z[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn gelfand_small_lambda_unique_lower_branch() {
        let m = gelfand_model(0.5);
        let (g, op) = setup(96);
        let s1 = solve_steady(&m, &g, &op, 0.5, &Field::zeros(g.len())).unwrap();
        let bump = Field::from_fn(&g, |x| 0.05 * (std::f64::consts::PI * x).sin());
        let s2 = solve_steady(&m, &g, &op, 0.5, &bump).unwrap();
        assert!(s1.residual <= 1e-10 && s2.residual <= 1e-10);
        for i in 0..g.len() {
            assert_relative_eq!(s1.z[i], s2.z[i], epsilon = 1e-9);
        }
        // z = K(w) nodewise
        for i in 0..g.len() {
            let kw = m.k.eval(s1.w[i]).unwrap();
            assert_relative_eq!(kw, s1.z[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn continuation_passes_the_bratu_fold() {
        let m = bratu_model(0.1);
        let (g, op) = setup(128);
        let start = lower_branch_state(&m, &g, &op, 0.1, 2).unwrap();
        let branch = continue_branch(&m, &g, &op, &start, 120, 0.25).unwrap();
        assert!(branch.states.len() > 20);
        let max_l = branch
            .states
            .iter()
            .map(|s| s.lambda)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(max_l > 3.3, "did not approach the fold: {max_l}");
        assert!(branch.fold_index().is_some(), "no turning point recorded");
        // λ decreases past the fold.
        let last = branch.states.last().unwrap();
        assert!(last.lambda < max_l - 0.1);
        // Upper-branch states dominate lower ones at equal λ.
        let li = branch.fold_index().unwrap();
        let lower_at = branch.states[..li]
            .iter()
            .min_by(|a, b| {
                (a.lambda - 3.0).abs().partial_cmp(&(b.lambda - 3.0).abs()).unwrap()
            })
            .unwrap();
        let upper_at = branch.states[li..]
            .iter()
            .min_by(|a, b| {
                (a.lambda - 3.0).abs().partial_cmp(&(b.lambda - 3.0).abs()).unwrap()
            })
            .unwrap();
        assert!(upper_at.max_z() > lower_at.max_z());
    }

    #[test]
    fn zero_steps_returns_single_state() {
        let m = bratu_model(0.5);
        let (g, op) = setup(48);
        let s = lower_branch_state(&m, &g, &op, 0.5, 2).unwrap();
        let b = continue_branch(&m, &g, &op, &s, 0, 0.1).unwrap();
        assert_eq!(b.states.len(), 1);
    }

    #[test]
    fn bratu_fold_near_reference_on_coarse_grid() {
        let m = bratu_model(0.1);
        let (g, op) = setup(128);
        let start = lower_branch_state(&m, &g, &op, 0.1, 2).unwrap();
        let branch = continue_branch(&m, &g, &op, &start, 120, 0.25).unwrap();
        let fold = find_lambda_star(&branch, &m, &g, &op).unwrap();
        // Continuum value 3.513830719; n = 128 grid bias is ~1e-4.
        assert_relative_eq!(fold.lambda_star, 3.513830719, max_relative = 2e-3);
        assert!(fold.bracket.0 <= fold.lambda_star + fold.accuracy);
    }

    #[test]
    fn monotone_branch_reports_no_fold() {
        let m = bratu_model(0.1);
        let (g, op) = setup(48);
        let start = lower_branch_state(&m, &g, &op, 0.1, 2).unwrap();
        let branch = continue_branch(&m, &g, &op, &start, 4, 0.05).unwrap();
        assert!(matches!(
            find_lambda_star(&branch, &m, &g, &op),
            Err(SteadyError::NoFold)
        ));
    }

    #[test]
    fn two_solutions_below_fold_and_none_above() {
        let m = bratu_model(0.1);
        let (g, op) = setup(96);
        let start = lower_branch_state(&m, &g, &op, 0.1, 2).unwrap();
        let branch = continue_branch(&m, &g, &op, &start, 120, 0.25).unwrap();
        let fold = find_lambda_star(&branch, &m, &g, &op).unwrap();
        let below = fold.lambda_star - 0.15;
        let lower = branch_state_at_lambda(&branch, &m, &g, &op, below, BranchSide::Lower).unwrap();
        let upper = branch_state_at_lambda(&branch, &m, &g, &op, below, BranchSide::Upper).unwrap();
        assert!(upper.max_z() > lower.max_z() + 0.1);
        // Above λ*: Newton from branch-derived guesses diverges.
        let above = fold.lambda_star + 0.15;
        assert!(solve_steady(&m, &g, &op, above, &lower.z).is_err());
        assert!(solve_steady(&m, &g, &op, above, &fold.state.z).is_err());
    }

    #[test]
    fn fold_shrinks_with_grid_like_h_squared() {
        let fold_for = |n: usize| {
            let m = bratu_model(0.1);
            let g = build_grid(&DomainSpec::Interval { a: 0.0, b: 1.0 }, n).unwrap();
            let op =
                laplacian(&g, &BoundarySpec::uniform_interval(BoundaryKind::Dirichlet)).unwrap();
            let start = lower_branch_state(&m, &g, &op, 0.1, 2).unwrap();
            let branch = continue_branch(&m, &g, &op, &start, 140, 0.2).unwrap();
            find_lambda_star(&branch, &m, &g, &op).unwrap().lambda_star
        };
        let reference = 3.513830719;
        let e1 = (fold_for(64) - reference).abs();
        let e2 = (fold_for(128) - reference).abs();
        assert!(
            e1 / e2 > 2.0,
            "fold error did not shrink like h²: {e1} vs {e2}"
        );
    }
}
