//! Problem definition: the nonlinearities (K, f, λ), the domain, the
//! boundary condition, and the initial data, together with sampled
//! verification of the standing assumptions (positivity, monotonicity,
//! convexity of K and f, the Osgood integral, convexity of g = f∘K⁻¹).
//!
//! Assumption checks are sample-based on a log-spaced grid, not
//! interval-arithmetic proofs; every report records the grid it used and
//! each violation carries a witness point so failures are reproducible.

use serde::Serialize;
use thiserror::Error;

use crate::expr::{ExprError, Expression};
use crate::numerics::{adaptive_simpson, tail_ratio_verdict, TailVerdict};

/// One boundary condition kind. Dirichlet is a distinct kind rather than
/// β = ∞ so that no infinities enter the arithmetic.
#[derive(Debug, Clone)]
pub enum BoundaryKind {
    Neumann,
    /// Robin coefficient β as an expression in the boundary coordinate `x`;
    /// must evaluate nonnegative and finite on its piece.
    Robin(Expression),
    Dirichlet,
}

impl BoundaryKind {
    /// Effective β at a boundary point: 0 for Neumann, None for Dirichlet.
    pub fn beta_at(&self, x: f64) -> Result<Option<f64>, ModelError> {
        match self {
            BoundaryKind::Neumann => Ok(Some(0.0)),
            BoundaryKind::Robin(beta) => {
                let b = beta.eval(x)?;
                if !b.is_finite() || b < 0.0 {
                    return Err(ModelError::InvalidRobinCoefficient { x, value: b });
                }
                Ok(Some(b))
            }
            BoundaryKind::Dirichlet => Ok(None),
        }
    }

    pub fn is_dirichlet(&self) -> bool {
        matches!(self, BoundaryKind::Dirichlet)
    }

    pub fn label(&self) -> &'static str {
        match self {
            BoundaryKind::Neumann => "neumann",
            BoundaryKind::Robin(_) => "robin",
            BoundaryKind::Dirichlet => "dirichlet",
        }
    }
}

/// Boundary specification per piece: both endpoints in 1-D, the outer
/// sphere for a radially symmetric ball.
#[derive(Debug, Clone)]
pub enum BoundarySpec {
    Interval {
        left: BoundaryKind,
        right: BoundaryKind,
    },
    Ball {
        outer: BoundaryKind,
    },
}

impl BoundarySpec {
    pub fn uniform_interval(kind: BoundaryKind) -> Self {
        BoundarySpec::Interval {
            left: kind.clone(),
            right: kind,
        }
    }

    pub fn has_dirichlet(&self) -> bool {
        match self {
            BoundarySpec::Interval { left, right } => left.is_dirichlet() || right.is_dirichlet(),
            BoundarySpec::Ball { outer } => outer.is_dirichlet(),
        }
    }
}

/// Spatial domain: an interval (a, b) or a radially symmetric ball of
/// dimension N ≥ 1 and radius R.
#[derive(Debug, Clone, Copy, Serialize)]
pub enum DomainSpec {
    Interval { a: f64, b: f64 },
    Ball { dim: u32, radius: f64 },
}

impl DomainSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        match *self {
            DomainSpec::Interval { a, b } => {
                if !(b > a) || !a.is_finite() || !b.is_finite() {
                    return Err(ModelError::InvalidDomain(format!(
                        "interval requires b > a, got ({a}, {b})"
                    )));
                }
            }
            DomainSpec::Ball { dim, radius } => {
                if dim < 1 {
                    return Err(ModelError::InvalidDomain("ball dimension must be ≥ 1".into()));
                }
                if !(radius > 0.0) || !radius.is_finite() {
                    return Err(ModelError::InvalidDomain(format!(
                        "ball radius must be positive, got {radius}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Coordinate range of the discretized axis: (a, b) or (0, R).
    pub fn coordinate_range(&self) -> (f64, f64) {
        match *self {
            DomainSpec::Interval { a, b } => (a, b),
            DomainSpec::Ball { radius, .. } => (0.0, radius),
        }
    }
}

/// The full problem bundle for u_t = ΔK(u) + λf(u).
#[derive(Debug, Clone)]
pub struct NonlinearModel {
    pub k: Expression,
    pub f: Expression,
    pub lambda: f64,
    pub domain: DomainSpec,
    pub boundary: BoundarySpec,
    /// Initial data as an expression in the spatial coordinate `x`.
    pub u0: Expression,
}

impl NonlinearModel {
    /// Validate structural invariants: λ > 0, domain/boundary agreement,
    /// β ≥ 0 on its piece, u₀ ≥ 0 sampled, and K(0) = 0 when any piece is
    /// Dirichlet (homogeneous Dirichlet acts on K(u)).
    pub fn new(
        k: Expression,
        f: Expression,
        lambda: f64,
        domain: DomainSpec,
        boundary: BoundarySpec,
        u0: Expression,
    ) -> Result<Self, ModelError> {
        domain.validate()?;
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(ModelError::InvalidLambda(lambda));
        }
        match (&domain, &boundary) {
            (DomainSpec::Interval { .. }, BoundarySpec::Interval { .. }) => {}
            (DomainSpec::Ball { .. }, BoundarySpec::Ball { .. }) => {}
            _ => return Err(ModelError::DomainBoundaryMismatch),
        }
        let model = NonlinearModel {
            k,
            f,
            lambda,
            domain,
            boundary,
            u0,
        };
        model.check_boundary_coefficients()?;
        model.check_initial_data()?;
        if model.boundary.has_dirichlet() {
            let k0 = model.k.eval(0.0)?;
            if k0.abs() > 1e-12 {
                return Err(ModelError::DirichletNeedsVanishingK(k0));
            }
        }
        Ok(model)
    }

    /// Same model at a different λ (used by continuation and sweeps).
    pub fn with_lambda(&self, lambda: f64) -> Result<Self, ModelError> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(ModelError::InvalidLambda(lambda));
        }
        let mut m = self.clone();
        m.lambda = lambda;
        Ok(m)
    }

    fn check_boundary_coefficients(&self) -> Result<(), ModelError> {
        let (a, b) = self.domain.coordinate_range();
        match &self.boundary {
            BoundarySpec::Interval { left, right } => {
                left.beta_at(a)?;
                right.beta_at(b)?;
            }
            BoundarySpec::Ball { outer } => {
                outer.beta_at(b)?;
            }
        }
        Ok(())
    }

    fn check_initial_data(&self) -> Result<(), ModelError> {
        let (a, b) = self.domain.coordinate_range();
        for i in 0..=64 {
            let x = a + (b - a) * i as f64 / 64.0;
            let v = self.u0.eval(x)?;
            if !v.is_finite() || v < 0.0 {
                return Err(ModelError::NegativeInitialData { x, value: v });
            }
        }
        Ok(())
    }
}

/// Verdict of one sampled assumption check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", content = "witness")]
pub enum Verdict {
    /// The inequality held at every sample point.
    HoldsOnSamples,
    /// Failed at the recorded witness point.
    Violated(f64),
    /// Could not be decided (e.g. tail heuristic undecided).
    Inconclusive,
}

impl Verdict {
    pub fn holds(&self) -> bool {
        matches!(self, Verdict::HoldsOnSamples)
    }
}

/// Outcome of the improper-integral checks (Osgood and ∫ ds/K).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IntegralCheck {
    /// Truncated integral up to the cutoff.
    pub finite_estimate: f64,
    pub cutoff: f64,
    /// Heuristic tail classification (declared as such in reports).
    pub tail_verdict: TailVerdict,
}

/// Per-assumption verdicts over the declared sampling grid.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    /// Grid declaration: log-spaced on (0, s_max], plus the endpoint 0 for
    /// the closed-half-line inequalities.
    pub s_max: f64,
    pub n_samples: usize,
    pub k_positive: Verdict,
    pub k_increasing: Verdict,
    pub k_convex: Verdict,
    pub f_positive: Verdict,
    pub f_increasing: Verdict,
    pub f_convex: Verdict,
    /// ∫₀^∞ K'/f ds < ∞ (tail heuristic; the estimate is the truncation).
    pub osgood: Verdict,
    pub osgood_integral: IntegralCheck,
    /// Sign of f''K' − K''f' (convexity of g = f∘K⁻¹ without forming K⁻¹).
    pub g_convex: Verdict,
    /// ∫₁^∞ ds/K < ∞, required by the convex-envelope certificate branch.
    pub k_reciprocal_integrable: Verdict,
    pub k_reciprocal_integral: IntegralCheck,
}

impl AssumptionReport {
    /// True when every standing assumption holds (heuristic tails count
    /// only when classified convergent).
    pub fn all_hold(&self) -> bool {
        self.k_positive.holds()
            && self.k_increasing.holds()
            && self.k_convex.holds()
            && self.f_positive.holds()
            && self.f_increasing.holds()
            && self.f_convex.holds()
            && self.osgood.holds()
            && self.g_convex.holds()
    }
}

/// Log-spaced grid on (0, s_max], densest near zero (8 decades down).
pub(crate) fn log_grid(s_max: f64, n: usize) -> Vec<f64> {
    let lo = s_max * 1e-8;
    let ratio = (s_max / lo).ln();
    (0..n)
        .map(|i| lo * (ratio * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Sample every standing inequality of the model on a log-spaced grid of
/// (0, s_max] (closed-half-line conditions also checked at 0) and run the
/// improper-integral heuristics.
pub fn validate_assumptions(
    m: &NonlinearModel,
    s_max: f64,
    n_samples: usize,
) -> Result<AssumptionReport, ModelError> {
    if !(s_max > 0.0) {
        return Err(ModelError::InvalidArgument("s_max must be positive".into()));
    }
    if n_samples < 10 {
        return Err(ModelError::InvalidArgument(
            "n_samples must be at least 10".into(),
        ));
    }
    let grid = log_grid(s_max, n_samples);
    let mut with_zero = vec![0.0];
    with_zero.extend_from_slice(&grid);

    // K(0) ≥ 0 and K(s) > 0 for s > 0.
    let mut k_positive = Verdict::HoldsOnSamples;
    let k0 = m.k.eval(0.0)?;
    if k0 < 0.0 {
        k_positive = Verdict::Violated(0.0);
    } else {
        for &s in &grid {
            if m.k.eval(s)? <= 0.0 {
                k_positive = Verdict::Violated(s);
                break;
            }
        }
    }

    let check_positive = |values: &dyn Fn(f64) -> Result<f64, ExprError>,
                          pts: &[f64]|
     -> Result<Verdict, ModelError> {
        for &s in pts {
            if values(s)? <= 0.0 {
                return Ok(Verdict::Violated(s));
            }
        }
        Ok(Verdict::HoldsOnSamples)
    };

    let k_increasing = check_positive(&|s| Ok(m.k.eval_with_derivatives(s, 1)?.d1), &with_zero)?;
    let k_convex = check_positive(&|s| Ok(m.k.eval_with_derivatives(s, 2)?.d2), &with_zero)?;
    let f_positive = check_positive(&|s| m.f.eval(s), &with_zero)?;
    let f_increasing = check_positive(&|s| Ok(m.f.eval_with_derivatives(s, 1)?.d1), &with_zero)?;
    let f_convex = check_positive(&|s| Ok(m.f.eval_with_derivatives(s, 2)?.d2), &with_zero)?;

    // g = f∘K⁻¹ is convex iff f''K' − K''f' > 0 (for increasing K), which
    // avoids forming K⁻¹ explicitly.
    let mut g_convex = Verdict::HoldsOnSamples;
    for &s in &with_zero {
        let fk = m.f.eval_with_derivatives(s, 2)?;
        let kk = m.k.eval_with_derivatives(s, 2)?;
        if fk.d2 * kk.d1 - kk.d2 * fk.d1 <= 0.0 {
            g_convex = Verdict::Violated(s);
            break;
        }
    }

    let osgood_integral = osgood_check(m, s_max.max(40.0))?;
    let osgood = match osgood_integral.tail_verdict {
        TailVerdict::Convergent => Verdict::HoldsOnSamples,
        TailVerdict::Divergent => Verdict::Violated(osgood_integral.cutoff),
        TailVerdict::Inconclusive => Verdict::Inconclusive,
    };

    let k_reciprocal_integral = reciprocal_k_check(m, s_max.max(40.0))?;
    let k_reciprocal_integrable = match k_reciprocal_integral.tail_verdict {
        TailVerdict::Convergent => Verdict::HoldsOnSamples,
        TailVerdict::Divergent => Verdict::Violated(k_reciprocal_integral.cutoff),
        TailVerdict::Inconclusive => Verdict::Inconclusive,
    };

    Ok(AssumptionReport {
        s_max,
        n_samples,
        k_positive,
        k_increasing,
        k_convex,
        f_positive,
        f_increasing,
        f_convex,
        osgood,
        osgood_integral,
        g_convex,
        k_reciprocal_integral,
        k_reciprocal_integrable,
    })
}

/// Adaptive quadrature of ∫₀^{s_cut} K'(s)/f(s) ds plus the geometric
/// tail-ratio verdict at (s_cut, 2s_cut, 4s_cut).
pub fn osgood_check(m: &NonlinearModel, s_cut: f64) -> Result<IntegralCheck, ModelError> {
    if !(s_cut > 0.0) {
        return Err(ModelError::InvalidArgument("s_cut must be positive".into()));
    }
    let integrand = |s: f64| -> f64 {
        let kp = m
            .k
            .eval_with_derivatives(s, 1)
            .map(|d| d.d1)
            .unwrap_or(f64::NAN);
        let fv = m.f.eval(s).unwrap_or(f64::NAN);
        kp / fv
    };
    // Probe for expression errors once; inside quadrature NaN propagates.
    m.k.eval_with_derivatives(s_cut, 1)?;
    m.f.eval(s_cut)?;
    let value = adaptive_simpson(&integrand, 0.0, s_cut, 1e-12);
    Ok(IntegralCheck {
        finite_estimate: value,
        cutoff: s_cut,
        tail_verdict: tail_ratio_verdict(&integrand, s_cut),
    })
}

/// The secondary integral ∫₁^{s_cut} ds/K(s) with the same tail heuristic.
pub fn reciprocal_k_check(m: &NonlinearModel, s_cut: f64) -> Result<IntegralCheck, ModelError> {
    let integrand = |s: f64| -> f64 {
        let kv = m.k.eval(s).unwrap_or(f64::NAN);
        1.0 / kv
    };
    m.k.eval(1.0)?;
    let value = adaptive_simpson(&integrand, 1.0, s_cut.max(2.0), 1e-12);
    Ok(IntegralCheck {
        finite_estimate: value,
        cutoff: s_cut.max(2.0),
        tail_verdict: tail_ratio_verdict(&integrand, s_cut.max(2.0)),
    })
}

/// Invert a strictly increasing expression on `bracket`: returns s with
/// |e(s) − y| ≤ 1e−12·max(1, |y|). Bisection to a tight bracket followed by
/// a safeguarded Newton polish.
pub fn invert_monotone(e: &Expression, y: f64, bracket: (f64, f64)) -> Result<f64, ModelError> {
    let (lo, hi) = bracket;
    let flo = e.eval(lo)?;
    let fhi = e.eval(hi)?;
    if !(flo <= y && y <= fhi) {
        return Err(ModelError::BracketDoesNotStraddle {
            lo,
            hi,
            flo,
            fhi,
            y,
        });
    }
    let mut a = lo;
    let mut b = hi;
    for _ in 0..80 {
        if (b - a).abs() <= 1e-13 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        let mid = 0.5 * (a + b);
        let fm = e.eval(mid)?;
        if fm < y {
            a = mid;
        } else {
            b = mid;
        }
    }
    let mut s = 0.5 * (a + b);
    // Newton polish, clamped to the bracket.
    for _ in 0..8 {
        let d = e.eval_with_derivatives(s, 1)?;
        let err = d.value - y;
        if err.abs() <= 1e-13 * y.abs().max(1.0) || d.d1 == 0.0 {
            break;
        }
        let mut next = s - err / d.d1;
        if !(next > a && next < b) {
            next = 0.5 * (a + b);
        }
        s = next;
    }
    Ok(s)
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("λ must be positive and finite, got {0}")]
    InvalidLambda(f64),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("boundary specification does not match the domain shape")]
    DomainBoundaryMismatch,
    #[error("Robin coefficient must be nonnegative and finite: β({x}) = {value}")]
    InvalidRobinCoefficient { x: f64, value: f64 },
    #[error("initial data must be nonnegative and finite: u0({x}) = {value}")]
    NegativeInitialData { x: f64, value: f64 },
    #[error("homogeneous Dirichlet acts on K(u) and requires K(0) = 0, got K(0) = {0}")]
    DirichletNeedsVanishingK(f64),
    #[error("bracket [{lo}, {hi}] with values [{flo}, {fhi}] does not straddle y = {y}")]
    BracketDoesNotStraddle {
        lo: f64,
        hi: f64,
        flo: f64,
        fhi: f64,
        y: f64,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn gelfand_interval(lambda: f64, kind: BoundaryKind) -> NonlinearModel {
        NonlinearModel::new(
            Expression::parse("exp(u)-1").unwrap(),
            Expression::parse("exp(2*u)").unwrap(),
            lambda,
            DomainSpec::Interval { a: 0.0, b: 1.0 },
            BoundarySpec::uniform_interval(kind),
            Expression::parse_with_var("0", "x").unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn gelfand_model_satisfies_all_assumptions() {
        let m = gelfand_interval(1.0, BoundaryKind::Dirichlet);
        let rep = validate_assumptions(&m, 30.0, 200).unwrap();
        assert!(rep.all_hold(), "{rep:?}");
        assert!(rep.g_convex.holds());
    }

    #[test]
    fn linear_k_violates_convexity() {
        let m = NonlinearModel::new(
            Expression::parse("u").unwrap(),
            Expression::parse("exp(u)").unwrap(),
            1.0,
            DomainSpec::Interval { a: 0.0, b: 1.0 },
            BoundarySpec::uniform_interval(BoundaryKind::Neumann),
            Expression::parse_with_var("0", "x").unwrap(),
        )
        .unwrap();
        let rep = validate_assumptions(&m, 10.0, 50).unwrap();
        assert!(matches!(rep.k_convex, Verdict::Violated(_)));
    }

    #[test]
    fn osgood_flags_identical_growth() {
        // K' = e^s, f = e^s: integrand ≡ 1, divergent.
        let m = NonlinearModel::new(
            Expression::parse("exp(u)-1").unwrap(),
            Expression::parse("exp(u)").unwrap(),
            1.0,
            DomainSpec::Interval { a: 0.0, b: 1.0 },
            BoundarySpec::uniform_interval(BoundaryKind::Neumann),
            Expression::parse_with_var("0", "x").unwrap(),
        )
        .unwrap();
        let rep = validate_assumptions(&m, 10.0, 50).unwrap();
        assert!(matches!(
            rep.osgood,
            Verdict::Violated(_) | Verdict::Inconclusive
        ));
        let chk = osgood_check(&m, 40.0).unwrap();
        assert_eq!(chk.tail_verdict, TailVerdict::Divergent);
    }

    #[test]
    fn osgood_estimate_matches_closed_form() {
        // K = e^u − 1, f = e^{2u}: integrand e^{−s}, ∫₀^∞ = 1.
        let m = gelfand_interval(1.0, BoundaryKind::Neumann);
        let chk = osgood_check(&m, 40.0).unwrap();
        assert_relative_eq!(chk.finite_estimate, 1.0, epsilon = 1e-8);
        assert_eq!(chk.tail_verdict, TailVerdict::Convergent);
    }

    #[test]
    fn reciprocal_f_integral_closed_form() {
        // ∫₀^∞ e^{−2s} ds = 1/2 through the same quadrature machinery.
        let f = Expression::parse("exp(2*u)").unwrap();
        let integrand = |s: f64| 1.0 / f.eval(s).unwrap();
        let v = adaptive_simpson(&integrand, 0.0, 40.0, 1e-12);
        assert_relative_eq!(v, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn invert_monotone_closed_forms() {
        let e = Expression::parse("exp(u)").unwrap();
        let s = invert_monotone(&e, 1.0, (-5.0, 5.0)).unwrap();
        assert_relative_eq!(s, 0.0, epsilon = 1e-10);

        let e2 = Expression::parse("exp(u)-1").unwrap();
        let s2 = invert_monotone(&e2, std::f64::consts::E - 1.0, (-5.0, 5.0)).unwrap();
        assert_relative_eq!(s2, 1.0, epsilon = 1e-10);

        let e3 = Expression::parse("exp(2*u)").unwrap();
        let s3 = invert_monotone(&e3, 4.0 / 9.0, (-5.0, 5.0)).unwrap();
        assert_relative_eq!(s3, 0.5 * (4.0f64 / 9.0).ln(), epsilon = 1e-10);
    }

    #[test]
    fn invert_rejects_non_straddling_bracket() {
        let e = Expression::parse("exp(u)").unwrap();
        assert!(matches!(
            invert_monotone(&e, 100.0, (0.0, 1.0)),
            Err(ModelError::BracketDoesNotStraddle { .. })
        ));
    }

    #[test]
    fn inversion_is_identity_on_samples() {
        let m = gelfand_interval(1.0, BoundaryKind::Neumann);
        for i in 1..20 {
            let s = i as f64 * 0.3;
            let y = m.k.eval(s).unwrap();
            let back = invert_monotone(&m.k, y, (0.0, 10.0)).unwrap();
            assert_relative_eq!(back, s, epsilon = 1e-10);
        }
    }

    #[test]
    fn g_convexity_invariant_under_joint_rescaling() {
        // Sign of f''K' − K''f' scales by c² under f → cf, K → cK.
        let m1 = gelfand_interval(1.0, BoundaryKind::Neumann);
        let m2 = NonlinearModel::new(
            Expression::parse("3*(exp(u)-1)").unwrap(),
            Expression::parse("3*exp(2*u)").unwrap(),
            1.0,
            DomainSpec::Interval { a: 0.0, b: 1.0 },
            BoundarySpec::uniform_interval(BoundaryKind::Neumann),
            Expression::parse_with_var("0", "x").unwrap(),
        )
        .unwrap();
        let r1 = validate_assumptions(&m1, 20.0, 60).unwrap();
        let r2 = validate_assumptions(&m2, 20.0, 60).unwrap();
        assert_eq!(r1.g_convex.holds(), r2.g_convex.holds());
    }

    #[test]
    fn dirichlet_requires_vanishing_k_at_zero() {
        let err = NonlinearModel::new(
            Expression::parse("exp(u)").unwrap(), // K(0) = 1
            Expression::parse("exp(2*u)").unwrap(),
            1.0,
            DomainSpec::Interval { a: 0.0, b: 1.0 },
            BoundarySpec::uniform_interval(BoundaryKind::Dirichlet),
            Expression::parse_with_var("0", "x").unwrap(),
        );
        assert!(matches!(err, Err(ModelError::DirichletNeedsVanishingK(_))));
    }

    #[test]
    fn negative_robin_coefficient_rejected() {
        let err = NonlinearModel::new(
            Expression::parse("exp(u)-1").unwrap(),
            Expression::parse("exp(2*u)").unwrap(),
            1.0,
            DomainSpec::Interval { a: 0.0, b: 1.0 },
            BoundarySpec::uniform_interval(BoundaryKind::Robin(
                Expression::parse_with_var("-1", "x").unwrap(),
            )),
            Expression::parse_with_var("0", "x").unwrap(),
        );
        assert!(matches!(err, Err(ModelError::InvalidRobinCoefficient { .. })));
    }
}
