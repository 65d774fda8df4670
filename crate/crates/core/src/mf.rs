//! Implicit-feedback matrix factorization: confidence weighting, the
//! weighted squared loss, the closed-form user solve and the per-client
//! item gradient.
//!
//! The item matrix is stored `M x F` row-major; user vectors have length `F`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::data::InteractionDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HyperParams {
    pub n_factors: usize,
    pub reg: f64,
    pub learning_rate: f64,
    pub alpha: f64,
    pub epochs: u32,
    pub inner_steps: u32,
    /// Per-report privacy budget.
    pub epsilon: f64,
    /// Reports per user per epoch.
    pub k: usize,
    pub report_scaling: ReportScaling,
}

/// How a user's `k` decoded reports combine before the server step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportScaling {
    /// Each user contributes the sum of its `k` reports, so the step is `k`
    /// times the unbiased mean estimate.
    Sum,
    /// Each user contributes the mean of its reports.
    Mean,
}

impl std::fmt::Display for ReportScaling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ReportScaling::Sum => "sum",
            ReportScaling::Mean => "mean",
        })
    }
}

impl std::str::FromStr for ReportScaling {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sum" => Ok(ReportScaling::Sum),
            "mean" => Ok(ReportScaling::Mean),
            _ => Err(format!(
                "unknown report scaling `{s}` (expected sum or mean)"
            )),
        }
    }
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            n_factors: 5,
            reg: 1e-6,
            learning_rate: 1e-3,
            alpha: 40.0,
            epochs: 20,
            inner_steps: 20,
            epsilon: 2.5,
            k: 100,
            report_scaling: ReportScaling::Sum,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Param(m.to_string()));
        if self.n_factors == 0 {
            return bad("n_factors must be >= 1");
        }
        if self.k == 0 {
            return bad("k must be >= 1");
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return bad("epsilon must be positive and finite");
        }
        if !self.reg.is_finite() || self.reg < 0.0 {
            return bad("reg must be non-negative");
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return bad("learning_rate must be positive");
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return bad("alpha must be non-negative");
        }
        Ok(())
    }
}

/// A client's private vector `x_u`.
#[derive(Debug, Clone, PartialEq)]
pub struct UserEmbedding(pub Vec<f64>);

impl UserEmbedding {
    pub fn zeros(n_factors: usize) -> Self {
        Self(vec![0.0; n_factors])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Dense `M x F` row-major matrix. Used both for the item matrix and for
/// gradients over it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

pub type ItemMatrix = Matrix;
pub type ItemGradient = Matrix;

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        Ok(Self { rows, cols, values })
    }

    /// Entries uniform in `[-scale, scale]`.
    pub fn random_uniform<R: Rng + ?Sized>(
        rows: usize,
        cols: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let values = (0..rows * cols)
            .map(|_| rng.random_range(-scale..=scale))
            .collect();
        Self { rows, cols, values }
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, f: usize) -> f64 {
        self.values[i * self.cols + f]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Matrix) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `F x F` Gram matrix `VᵀV`.
    pub fn gram(&self) -> DMatrix<f64> {
        let f = self.cols;
        let mut g = DMatrix::zeros(f, f);
        for row in self.values.chunks_exact(f) {
            for a in 0..f {
                for b in a..f {
                    g[(a, b)] += row[a] * row[b];
                }
            }
        }
        for a in 0..f {
            for b in 0..a {
                g[(a, b)] = g[(b, a)];
            }
        }
        g
    }
}

/// `c_ui = 1 + α r_ui`.
pub fn confidence(interacted: bool, alpha: f64) -> f64 {
    if interacted {
        1.0 + alpha
    } else {
        1.0
    }
}

pub fn score(x: &UserEmbedding, item_row: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), item_row.len());
    dot(&x.0, item_row)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The `F x F` system `(VᵀCᵘV + λI) x = VᵀCᵘp(u)`, summed over every item.
/// Reference form of [`user_system`].
pub fn user_system_naive(
    v: &ItemMatrix,
    items: &[usize],
    hp: &HyperParams,
) -> (DMatrix<f64>, DVector<f64>) {
    let f = v.n_cols();
    let mut p = vec![false; v.n_rows()];
    for &i in items {
        p[i] = true;
    }
    let mut a = DMatrix::<f64>::identity(f, f) * hp.reg;
    let mut b = DVector::<f64>::zeros(f);
    for (i, &pi) in p.iter().enumerate() {
        let c = confidence(pi, hp.alpha);
        let row = v.row(i);
        for r in 0..f {
            for s in 0..f {
                a[(r, s)] += c * row[r] * row[s];
            }
            if pi {
                b[r] += c * row[r];
            }
        }
    }
    (a, b)
}

/// Same system as [`user_system_naive`], built from a precomputed `VᵀV`
/// plus a correction over the user's interacted items only.
pub fn user_system(
    v: &ItemMatrix,
    gram: &DMatrix<f64>,
    items: &[usize],
    hp: &HyperParams,
) -> (DMatrix<f64>, DVector<f64>) {
    let f = v.n_cols();
    let mut a = gram.clone();
    for d in 0..f {
        a[(d, d)] += hp.reg;
    }
    let mut b = DVector::<f64>::zeros(f);
    let c = confidence(true, hp.alpha);
    for &i in items {
        let row = v.row(i);
        for r in 0..f {
            for s in 0..f {
                a[(r, s)] += (c - 1.0) * row[r] * row[s];
            }
            b[r] += c * row[r];
        }
    }
    (a, b)
}

pub fn solve_system(a: DMatrix<f64>, b: &DVector<f64>) -> Result<UserEmbedding> {
    let x = match a.clone().cholesky() {
        Some(ch) => ch.solve(b),
        None => a
            .lu()
            .solve(b)
            .ok_or_else(|| Error::Numeric("singular user system".into()))?,
    };
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite user embedding".into()));
    }
    Ok(UserEmbedding(x.iter().copied().collect()))
}

/// Closed-form user update given a precomputed Gram matrix.
pub fn update_user_embedding_with_gram(
    v: &ItemMatrix,
    gram: &DMatrix<f64>,
    items: &[usize],
    hp: &HyperParams,
) -> Result<UserEmbedding> {
    if items.is_empty() {
        return Ok(UserEmbedding::zeros(v.n_cols()));
    }
    let (a, b) = user_system(v, gram, items, hp);
    solve_system(a, &b)
}

/// Closed-form minimizer of the loss over `x_u` for fixed `V`. `items` are
/// the user's interacted item indices.
pub fn update_user_embedding(
    v: &ItemMatrix,
    items: &[usize],
    hp: &HyperParams,
) -> Result<UserEmbedding> {
    update_user_embedding_with_gram(v, &v.gram(), items, hp)
}

/// Per-client item gradient: row `i` is `c_ui (p_ui - x_uᵀ v_i) x_u`, dense
/// over all items. This is `-1/2` times the derivative of the user's loss
/// term with respect to `v_i`.
pub fn item_gradient(
    x: &UserEmbedding,
    v: &ItemMatrix,
    items: &[usize],
    hp: &HyperParams,
) -> ItemGradient {
    let f = v.n_cols();
    let mut p = vec![false; v.n_rows()];
    for &i in items {
        p[i] = true;
    }
    let mut g = Matrix::zeros(v.n_rows(), f);
    for (i, &pi) in p.iter().enumerate() {
        let c = confidence(pi, hp.alpha);
        let target = if pi { 1.0 } else { 0.0 };
        let w = c * (target - dot(&x.0, v.row(i)));
        for (gr, xr) in g.row_mut(i).iter_mut().zip(&x.0) {
            *gr = w * xr;
        }
    }
    g
}

/// What a client hands to the privacy mechanism: the descent gradient of its
/// loss term with respect to `V`, i.e. `-item_gradient` (the constant 2 is
/// folded into the learning rate).
pub fn client_gradient(
    x: &UserEmbedding,
    v: &ItemMatrix,
    items: &[usize],
    hp: &HyperParams,
) -> ItemGradient {
    let mut g = item_gradient(x, v, items, hp);
    for e in g.as_mut_slice() {
        *e = -*e;
    }
    g
}

/// Full weighted loss `Σ_{u,i} c_ui (p_ui - x_uᵀv_i)² + λ(Σ‖x_u‖² + Σ‖v_i‖²)`
/// over every user–item pair.
pub fn implicit_loss(
    xs: &[UserEmbedding],
    v: &ItemMatrix,
    ds: &InteractionDataset,
    hp: &HyperParams,
) -> f64 {
    assert_eq!(xs.len(), ds.n_users(), "one embedding per user");
    let gram = v.gram();
    let f = v.n_cols();
    let mut total = 0.0;
    for (u, x) in xs.iter().enumerate() {
        // Σ_i (xᵀv_i)² = xᵀ(VᵀV)x, then correct the interacted items.
        let mut quad = 0.0;
        for r in 0..f {
            for s in 0..f {
                quad += x.0[r] * gram[(r, s)] * x.0[s];
            }
        }
        let c = confidence(true, hp.alpha);
        for it in ds.interactions(u) {
            let s = dot(&x.0, v.row(it.item as usize));
            quad += c * (1.0 - s) * (1.0 - s) - s * s;
        }
        total += quad + hp.reg * dot(&x.0, &x.0);
    }
    total + hp.reg * dot(v.as_slice(), v.as_slice())
}
