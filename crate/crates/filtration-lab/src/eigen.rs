//! Principal eigenpairs: the auxiliary problem Δφ + μφ = 0 with Robin-type
//! boundary conditions, and the eigenproblem obtained by linearizing the
//! filtration operator about a steady state w,
//!
//!   −Δ[K'(w)φ] = λf'(w)φ + μφ,   B(K'(w)φ) = 0.
//!
//! Sign convention follows the continuous problem: μ is the eigenvalue of
//! −Δ (so the Dirichlet interval gives μ → π²), and the linearized μ(λ)
//! keeps the right-hand-side convention above (μ < 0 marks instability).
//!
//! Both problems reduce to a tridiagonal pencil A·x = μ·D·x over the
//! non-Dirichlet nodes: the linearized problem through the substitution
//! χ = K'(w)φ, which turns the boundary condition into the plain one for χ
//! and makes the weighted normalization ∫K'(w)φ dx = 1 the L¹ condition on
//! χ. The solver is shifted inverse iteration started strictly below the
//! spectrum (Gershgorin bound on the pencil), with Rayleigh-quotient shift
//! updates once the iteration settles and a deflation safeguard should the
//! converged vector fail the Perron sign pattern.

use serde::Serialize;
use thiserror::Error;

use crate::discretize::{integrate, DiscretizeError, Field, Grid, LinearOperator};
use crate::expr::ExprError;
use crate::model::NonlinearModel;
use crate::numerics::solve_tridiag_pivot;

/// Which normalization the eigenfunction carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Normalization {
    /// ∫ φ dx = 1.
    L1,
    /// ∫ K'(w) φ dx = 1 (linearized problem).
    WeightedKPrime,
}

/// Principal eigenvalue/eigenfunction with normalization metadata.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub phi: Field,
    pub normalization: Normalization,
    /// Relative residual ‖A·x − μ·D·x‖₂ / ‖x‖₂ of the reduced pencil.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Error)]
pub enum EigenError {
    #[error("inverse iteration did not converge within {0} iterations")]
    NonConvergence(usize),
    #[error("eigenfunction changed sign in the interior after {0} deflations")]
    SignChange(usize),
    #[error("K'(w) must be positive at non-Dirichlet nodes; K'(w[{node}]) = {value}")]
    NonPositiveWeight { node: usize, value: f64 },
    #[error("empty eigenproblem: all nodes carry Dirichlet rows")]
    EmptyProblem,
    #[error(transparent)]
    Discretize(#[from] DiscretizeError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Smallest eigenvalue of −L (the paper's μ in Δφ + μφ = 0) with the
/// positive, L¹-normalized eigenfunction.
pub fn principal_eigenpair(op: &LinearOperator, grid: &Grid) -> Result<EigenPair, EigenError> {
    let n = op.n();
    let active: Vec<usize> = (0..n).filter(|&i| !op.is_dirichlet_node(i)).collect();
    if active.is_empty() {
        return Err(EigenError::EmptyProblem);
    }
    let (sub, diag, sup) = op.bands();
    let reduced = reduce_pencil(sub, diag, sup, &active, None);
    let ones = vec![1.0; active.len()];
    let sol = smallest_pencil_eigenpair(&reduced, &ones)?;

    let mut phi = Field::zeros(n);
    for (k, &i) in active.iter().enumerate() {
        phi[i] = sol.vector[k];
    }
    fix_sign_and_check_positivity(&mut phi, &active, sol.deflations)?;
    let c = integrate(&phi, grid);
    for v in phi.values.iter_mut() {
        *v /= c;
    }
    Ok(EigenPair {
        value: sol.value,
        phi,
        normalization: Normalization::L1,
        residual: sol.residual,
        iterations: sol.iterations,
    })
}

/// Principal pair of the linearization about a steady state `w`, normalized
/// so that ∫ K'(w)φ dx = 1. Implemented through χ = K'(w)φ, which reduces
/// to the pencil (−Δ − λ·f'(w)/K'(w))·χ = μ·(1/K'(w))·χ.
pub fn linearized_eigenpair(
    w: &Field,
    m: &NonlinearModel,
    grid: &Grid,
    op: &LinearOperator,
) -> Result<EigenPair, EigenError> {
    let n = op.n();
    debug_assert_eq!(w.len(), n);
    let active: Vec<usize> = (0..n).filter(|&i| !op.is_dirichlet_node(i)).collect();
    if active.is_empty() {
        return Err(EigenError::EmptyProblem);
    }

    let mut kprime = vec![0.0; n];
    let mut fprime = vec![0.0; n];
    for i in 0..n {
        kprime[i] = m.k.eval_with_derivatives(w[i], 1)?.d1;
        fprime[i] = m.f.eval_with_derivatives(w[i], 1)?.d1;
    }
    for &i in &active {
        if kprime[i] <= 0.0 {
            return Err(EigenError::NonPositiveWeight {
                node: i,
                value: kprime[i],
            });
        }
    }

    let (sub, diag, sup) = op.bands();
    let addend: Vec<f64> = (0..n)
        .map(|i| {
            if kprime[i] > 0.0 {
                -m.lambda * fprime[i] / kprime[i]
            } else {
                0.0
            }
        })
        .collect();
    let reduced = reduce_pencil(sub, diag, sup, &active, Some(&addend));
    let dvec: Vec<f64> = active.iter().map(|&i| 1.0 / kprime[i]).collect();
    let sol = smallest_pencil_eigenpair(&reduced, &dvec)?;

    // chi = K'(w)φ on the full grid; φ by back-substitution.
    let mut chi = Field::zeros(n);
    for (k, &i) in active.iter().enumerate() {
        chi[i] = sol.vector[k];
    }
    fix_sign_and_check_positivity(&mut chi, &active, sol.deflations)?;
    let c = integrate(&chi, grid);
    let mut phi = Field::zeros(n);
    for &i in &active {
        phi[i] = chi[i] / (c * kprime[i]);
    }
    Ok(EigenPair {
        value: sol.value,
        phi,
        normalization: Normalization::WeightedKPrime,
        residual: sol.residual,
        iterations: sol.iterations,
    })
}

/// K'(w) sampled on the grid (the weight pairing with the linearized
/// eigenfunction in A(t) and in the normalization ∫K'(w)φ dx).
pub fn kprime_field(w: &Field, m: &NonlinearModel) -> Result<Field, ExprError> {
    let mut out = Field::zeros(w.len());
    for i in 0..w.len() {
        out[i] = m.k.eval_with_derivatives(w[i], 1)?.d1;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Reduced-pencil machinery
// ---------------------------------------------------------------------------

struct ReducedPencil {
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
}

/// Restrict −L (+ optional diagonal addend) to the active nodes. Dropping
/// the Dirichlet rows/columns of a tridiagonal matrix keeps it tridiagonal.
fn reduce_pencil(
    sub: &[f64],
    diag: &[f64],
    sup: &[f64],
    active: &[usize],
    addend: Option<&[f64]>,
) -> ReducedPencil {
    let m = active.len();
    let mut rsub = vec![0.0; m.saturating_sub(1)];
    let mut rdiag = vec![0.0; m];
    let mut rsup = vec![0.0; m.saturating_sub(1)];
    for (k, &i) in active.iter().enumerate() {
        rdiag[k] = -diag[i] + addend.map(|a| a[i]).unwrap_or(0.0);
        if k + 1 < m {
            let j = active[k + 1];
            if j == i + 1 {
                rsup[k] = -sup[i];
                rsub[k] = -sub[i];
            }
        }
    }
    ReducedPencil {
        sub: rsub,
        diag: rdiag,
        sup: rsup,
    }
}

struct PencilSolution {
    value: f64,
    vector: Vec<f64>,
    residual: f64,
    iterations: usize,
    deflations: usize,
}

/// Shifted inverse iteration for the smallest eigenvalue of A·x = μ·D·x
/// with A tridiagonal and D diagonal positive. The initial shift sits
/// strictly below the spectrum (Gershgorin on the pencil); once the
/// Rayleigh quotient settles the shift tracks it from below.
fn smallest_pencil_eigenpair(a: &ReducedPencil, d: &[f64]) -> Result<PencilSolution, EigenError> {
    let m = a.diag.len();
    debug_assert_eq!(d.len(), m);
    const MAX_ITER: usize = 400;
    const MAX_DEFLATIONS: usize = 3;

    // Gershgorin lower bound for the pencil: min (a_ii − Σ|offdiag|)/d_ii.
    let mut lower = f64::INFINITY;
    for i in 0..m {
        let mut off = 0.0;
        if i > 0 {
            off += a.sub[i - 1].abs();
        }
        if i + 1 < m {
            off += a.sup[i].abs();
        }
        lower = lower.min((a.diag[i] - off) / d[i]);
    }

    let apply = |v: &[f64], i: usize| -> f64 {
        let mut av = a.diag[i] * v[i];
        if i > 0 {
            av += a.sub[i - 1] * v[i - 1];
        }
        if i + 1 < m {
            av += a.sup[i] * v[i + 1];
        }
        av
    };
    let rayleigh = |v: &[f64]| -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..m {
            num += v[i] * apply(v, i);
            den += v[i] * v[i] * d[i];
        }
        num / den
    };

    let mut deflated: Vec<Vec<f64>> = Vec::new();
    let mut deflations = 0;
    loop {
        let mut v: Vec<f64> = vec![1.0; m];
        normalize(&mut v);
        deflate(&mut v, &deflated, d);
        let mut sigma = lower - 1.0;
        let mut mu = rayleigh(&v);
        let mut iterations = 0;
        let mut converged = false;

        while iterations < MAX_ITER {
            iterations += 1;
            let shifted_diag: Vec<f64> = (0..m).map(|i| a.diag[i] - sigma * d[i]).collect();
            let rhs: Vec<f64> = (0..m).map(|i| d[i] * v[i]).collect();
            let x = match solve_tridiag_pivot(&a.sub, &shifted_diag, &a.sup, &rhs) {
                Some(x) => x,
                None => {
                    // Shift collided with an eigenvalue; back off.
                    sigma -= 0.1 * (1.0 + sigma.abs());
                    continue;
                }
            };
            v = x;
            normalize(&mut v);
            deflate(&mut v, &deflated, d);
            let mu_new = rayleigh(&v);
            let increment = (mu_new - mu).abs();
            mu = mu_new;
            if increment <= 1e-12 * mu.abs().max(1.0) {
                converged = true;
                break;
            }
            // Track the settled Rayleigh quotient from below.
            if iterations >= 5 && increment <= 1e-3 * mu.abs().max(1.0) {
                sigma = mu - 1e-2 * (1.0 + mu.abs());
            }
        }
        if !converged {
            return Err(EigenError::NonConvergence(MAX_ITER));
        }

        // Perron safeguard: the principal eigenvector has one sign.
        if has_interior_sign_change(&v) {
            deflations += 1;
            if deflations > MAX_DEFLATIONS {
                return Err(EigenError::SignChange(deflations));
            }
            deflated.push(v);
            continue;
        }

        let mut res = 0.0;
        for i in 0..m {
            res += (apply(&v, i) - mu * d[i] * v[i]).powi(2);
        }
        return Ok(PencilSolution {
            value: mu,
            vector: v,
            residual: res.sqrt(),
            iterations,
            deflations,
        });
    }
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Remove components along previously rejected vectors (D-inner product).
fn deflate(v: &mut [f64], rejected: &[Vec<f64>], d: &[f64]) {
    for r in rejected {
        let mut proj = 0.0;
        let mut rr = 0.0;
        for i in 0..v.len() {
            proj += v[i] * r[i] * d[i];
            rr += r[i] * r[i] * d[i];
        }
        let c = proj / rr;
        for i in 0..v.len() {
            v[i] -= c * r[i];
        }
    }
    if !rejected.is_empty() {
        normalize(v);
    }
}

fn has_interior_sign_change(v: &[f64]) -> bool {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-10 * scale;
    let mut sign = 0i8;
    for &x in v {
        if x.abs() <= tol {
            continue;
        }
        let s = if x > 0.0 { 1 } else { -1 };
        if sign == 0 {
            sign = s;
        } else if s != sign {
            return true;
        }
    }
    false
}

fn fix_sign_and_check_positivity(
    phi: &mut Field,
    active: &[usize],
    deflations: usize,
) -> Result<(), EigenError> {
    let mut imax = active[0];
    for &i in active {
        if phi[i].abs() > phi[imax].abs() {
            imax = i;
        }
    }
    if phi[imax] < 0.0 {
        for v in phi.values.iter_mut() {
            *v = -*v;
        }
    }
    let floor = -1e-10 * phi[imax].abs();
    for &i in active {
        if phi[i] < floor {
            return Err(EigenError::SignChange(deflations));
        }
    }
    Ok(())
}
