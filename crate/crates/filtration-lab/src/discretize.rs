//! Uniform-grid finite differences for 1-D intervals and radially symmetric
//! balls: trapezoid-type quadrature (cell masses carry the r^{N−1}·|S^{N−1}|
//! measure in the radial case), and the discrete Laplacian with
//! Neumann/Robin boundary rows by second-order ghost-node/flux elimination
//! and Dirichlet rows by row replacement. At the center of a ball the
//! symmetry condition u'(0) = 0 yields the 2N·(u₁ − u₀)/h² limit stencil.
//!
//! The radial operator is assembled in finite-volume form (flux differences
//! divided by exact cell masses), which keeps it exact on quadratics at
//! every node and makes diag(w)·L symmetric, so the discrete Green's
//! identity holds to roundoff for fields satisfying the boundary condition.

use thiserror::Error;

use crate::model::{BoundaryKind, BoundarySpec, DomainSpec, ModelError};
use crate::numerics::unit_sphere_area;

/// Uniform grid with quadrature weights.
#[derive(Debug, Clone)]
pub struct Grid {
    pub coords: Vec<f64>,
    pub h: f64,
    pub weights: Vec<f64>,
    pub domain: DomainSpec,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Total measure of the domain carried by the weights.
    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// One real value per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(n: usize) -> Self {
        Field {
            values: vec![0.0; n],
        }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Field {
            values: vec![c; n],
        }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Field { values }
    }

    /// Sample a function of the node coordinate.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        Field {
            values: grid.coords.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.values.iter()
    }

    /// Componentwise a + c·b.
    pub fn axpy(&self, c: f64, b: &Field) -> Field {
        debug_assert_eq!(self.len(), b.len());
        Field {
            values: self
                .values
                .iter()
                .zip(&b.values)
                .map(|(a, bv)| a + c * bv)
                .collect(),
        }
    }
}

impl std::ops::Index<usize> for Field {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl std::ops::IndexMut<usize> for Field {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.values[i]
    }
}

/// Tridiagonal operator with boundary rows encoding the condition.
/// Dirichlet rows are identity rows (the flagged nodes carry the constraint
/// v = 0, so applying the operator there returns v itself).
#[derive(Debug, Clone)]
pub struct LinearOperator {
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
    dirichlet: Vec<bool>,
    /// Which boundary condition this operator encodes (metadata).
    pub boundary_labels: (String, String),
}

impl LinearOperator {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    /// Band access: (sub, diag, sup) with sub/sup of length n−1.
    pub fn bands(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.sub, &self.diag, &self.sup)
    }

    pub fn dirichlet_mask(&self) -> &[bool] {
        &self.dirichlet
    }

    pub fn is_dirichlet_node(&self, i: usize) -> bool {
        self.dirichlet[i]
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &Field) -> Field {
        let n = self.n();
        debug_assert_eq!(v.len(), n);
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut acc = self.diag[i] * v[i];
            if i > 0 {
                acc += self.sub[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                acc += self.sup[i] * v[i + 1];
            }
            out[i] = acc;
        }
        Field::from_values(out)
    }

    /// Row sum of row i (0 for interior rows of a pure Laplacian).
    pub fn row_sum(&self, i: usize) -> f64 {
        let mut s = self.diag[i];
        if i > 0 {
            s += self.sub[i - 1];
        }
        if i + 1 < self.n() {
            s += self.sup[i];
        }
        s
    }
}

/// Build a uniform grid with n subintervals (n + 1 nodes).
pub fn build_grid(domain: &DomainSpec, n: usize) -> Result<Grid, DiscretizeError> {
    if n < 8 {
        return Err(DiscretizeError::TooFewIntervals(n));
    }
    domain.validate()?;
    let (a, b) = domain.coordinate_range();
    let h = (b - a) / n as f64;
    let coords: Vec<f64> = (0..=n).map(|i| a + h * i as f64).collect();
    let weights = match *domain {
        DomainSpec::Interval { .. } => {
            let mut w = vec![h; n + 1];
            w[0] = 0.5 * h;
            w[n] = 0.5 * h;
            w
        }
        DomainSpec::Ball { dim, radius } => {
            // Exact mass of the cell around each node: |S^{N-1}|(r₊^N − r₋^N)/N
            // with half cells at the center and the outer boundary.
            let area = unit_sphere_area(dim);
            let nn = dim as f64;
            let ni = dim as i32;
            coords
                .iter()
                .enumerate()
                .map(|(i, &r)| {
                    let rm = if i == 0 { 0.0 } else { r - 0.5 * h };
                    let rp = if i == n { radius } else { r + 0.5 * h };
                    area * (rp.powi(ni) - rm.powi(ni)) / nn
                })
                .collect()
        }
    };
    Ok(Grid {
        coords,
        h,
        weights,
        domain: *domain,
    })
}

/// Assemble the discrete Laplacian (radial form for balls) with boundary
/// rows for the given condition. The operator represents Δ; eigensolvers
/// negate it to work with −Δ.
pub fn laplacian(grid: &Grid, boundary: &BoundarySpec) -> Result<LinearOperator, DiscretizeError> {
    let n = grid.len();
    let h = grid.h;
    let h2 = h * h;
    let mut sub = vec![0.0; n - 1];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n - 1];
    let mut dirichlet = vec![false; n];

    match (&grid.domain, boundary) {
        (DomainSpec::Interval { a, b }, BoundarySpec::Interval { left, right }) => {
            for i in 1..n - 1 {
                sub[i - 1] = 1.0 / h2;
                diag[i] = -2.0 / h2;
                sup[i] = 1.0 / h2;
            }
            match left.beta_at(*a)? {
                Some(beta) => {
                    diag[0] = -2.0 * (1.0 + h * beta) / h2;
                    sup[0] = 2.0 / h2;
                }
                None => {
                    diag[0] = 1.0;
                    dirichlet[0] = true;
                }
            }
            match right.beta_at(*b)? {
                Some(beta) => {
                    diag[n - 1] = -2.0 * (1.0 + h * beta) / h2;
                    sub[n - 2] = 2.0 / h2;
                }
                None => {
                    diag[n - 1] = 1.0;
                    dirichlet[n - 1] = true;
                }
            }
            Ok(LinearOperator {
                sub,
                diag,
                sup,
                dirichlet,
                boundary_labels: (left.label().to_string(), right.label().to_string()),
            })
        }
        (DomainSpec::Ball { dim, radius }, BoundarySpec::Ball { outer }) => {
            // Finite-volume form: row i is the flux difference across the
            // cell faces divided by the exact cell mass (grid weight over
            // the sphere area). Exact on quadratics at every node,
            // including next to the center, and diag(w)·L is symmetric.
            let area = unit_sphere_area(*dim);
            let p = (*dim - 1) as i32;
            let face = |r: f64| r.powi(p) / h;
            let mass: Vec<f64> = grid.weights.iter().map(|w| w / area).collect();
            // Center r = 0: symmetry u'(0) = 0; only the r = h/2 face flows.
            // Equivalent to the 2N(u₁ − u₀)/h² limit stencil.
            sup[0] = face(0.5 * h) / mass[0];
            diag[0] = -sup[0];
            for i in 1..n - 1 {
                let r = grid.coords[i];
                let fm = face(r - 0.5 * h);
                let fp = face(r + 0.5 * h);
                sub[i - 1] = fm / mass[i];
                sup[i] = fp / mass[i];
                diag[i] = -(fm + fp) / mass[i];
            }
            match outer.beta_at(*radius)? {
                Some(beta) => {
                    // Outer face flux from the Robin condition v'(R) = −βv.
                    let fm = face(*radius - 0.5 * h);
                    sub[n - 2] = fm / mass[n - 1];
                    diag[n - 1] = -(fm + beta * radius.powi(p)) / mass[n - 1];
                }
                None => {
                    diag[n - 1] = 1.0;
                    dirichlet[n - 1] = true;
                }
            }
            Ok(LinearOperator {
                sub,
                diag,
                sup,
                dirichlet,
                boundary_labels: ("symmetry".to_string(), outer.label().to_string()),
            })
        }
        _ => Err(DiscretizeError::DomainBoundaryMismatch),
    }
}

/// Quadrature-weighted sum ∫ f dx over the domain (second-order accurate).
pub fn integrate(f: &Field, grid: &Grid) -> f64 {
    debug_assert_eq!(f.len(), grid.len());
    f.values
        .iter()
        .zip(&grid.weights)
        .map(|(v, w)| v * w)
        .sum()
}

/// Weighted inner product ⟨a, b⟩_w in the domain measure.
pub fn inner_product(a: &Field, b: &Field, grid: &Grid) -> f64 {
    debug_assert_eq!(a.len(), grid.len());
    debug_assert_eq!(b.len(), grid.len());
    a.values
        .iter()
        .zip(&b.values)
        .zip(&grid.weights)
        .map(|((x, y), w)| x * y * w)
        .sum()
}

#[derive(Debug, Error)]
pub enum DiscretizeError {
    #[error("grid needs at least 8 subintervals, got {0}")]
    TooFewIntervals(usize),
    #[error("boundary specification does not match the grid's domain shape")]
    DomainBoundaryMismatch,
    #[error(transparent)]
    Model(#[from] ModelError),
}
