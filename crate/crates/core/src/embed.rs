//! The three-stage post-processing head: centralization, spherical
//! projection, and a supervised-PCA linear layer.
//!
//! [`fit`] learns a [`ProjectionModel`] from labeled training vectors:
//! it subtracts the global mean, normalizes each vector to unit length,
//! and then finds the `n` orthonormal directions maximizing
//! `D_B - (alpha/k) * sum_i D_Wi`, where `D_B` is the mean squared
//! distance between projections of different identities and `D_Wi` the
//! mean squared distance within identity `i`. The maximizer is the top
//! eigenbasis of a single symmetric matrix (the [`QuadraticForm`]), so
//! fitting reduces to one eigendecomposition.
//!
//! [`embed`](ProjectionModel::embed) applies the same three stages to a
//! query vector.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::FeatureDataset;
use crate::eigen::{symmetric_eigen, EigenError};
use crate::math;

/// Norm threshold below which a vector cannot be projected onto the
/// unit sphere.
pub const EPS_NORM: f64 = 1e-12;

/// Orthonormality tolerance for validated models.
const ORTHO_TOL: f64 = 1e-9;

/// Eigen-residual bound for fitted components, scaled by max(1, |λ|).
const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbedError {
    #[error("empty input collection")]
    EmptyInput,
    #[error("dimension mismatch: expected {want}, got {got}")]
    DimensionMismatch { want: usize, got: usize },
    #[error("vector norm {norm:.3e} is below {EPS_NORM:.0e}; cannot project onto the unit sphere")]
    DegenerateVector { norm: f64 },
    #[error("training vector for identity {identity:?} image {image:?} equals the mean; cannot normalize")]
    DegenerateTrainingRow { identity: String, image: String },
    #[error("need at least 2 identities, got {got}")]
    TooFewIdentities { got: usize },
    #[error("alpha must be positive and finite, got {alpha}")]
    BadAlpha { alpha: f64 },
    #[error("component count {n} out of range (valid: 1..={dim})")]
    ComponentsOutOfRange { n: usize, dim: usize },
    #[error("invalid projection model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Eigen(#[from] EigenError),
}

/// The symmetric matrix whose top eigenvectors solve the supervised-PCA
/// objective, plus the identity count `k` used in its scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    dim: usize,
    k: usize,
    /// Row-major `dim x dim`, exactly symmetric by construction.
    matrix: Vec<f64>,
}

impl QuadraticForm {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of identities that contributed, including one-image
    /// identities.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.matrix[i * self.dim + i]).sum()
    }
}

/// Flat arithmetic mean over a non-empty, uniform-width collection.
pub fn compute_mean<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Vec<f64>, EmbedError> {
    let first = vectors.first().ok_or(EmbedError::EmptyInput)?;
    let dim = first.as_ref().len();
    let mut mean = vec![0.0f64; dim];
    for v in vectors {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(EmbedError::DimensionMismatch {
                want: dim,
                got: v.len(),
            });
        }
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    let inv = 1.0 / vectors.len() as f64;
    for m in &mut mean {
        *m *= inv;
    }
    Ok(mean)
}

/// Returns `v - mean`.
pub fn centralize(v: &[f64], mean: &[f64]) -> Result<Vec<f64>, EmbedError> {
    if v.len() != mean.len() {
        return Err(EmbedError::DimensionMismatch {
            want: mean.len(),
            got: v.len(),
        });
    }
    Ok(v.iter().zip(mean).map(|(a, b)| a - b).collect())
}

/// Returns `v / ||v||`. Fails when the norm is at or below [`EPS_NORM`].
pub fn spherical_project(v: &[f64]) -> Result<Vec<f64>, EmbedError> {
    let norm = math::norm(v);
    if !(norm > EPS_NORM) {
        return Err(EmbedError::DegenerateVector { norm });
    }
    let inv = 1.0 / norm;
    Ok(v.iter().map(|x| x * inv).collect())
}

/// Accumulates the upper triangle of `sum of x x^T` and the plain sum
/// `s` over `vectors`, mirroring at the end so the moment matrix is
/// exactly symmetric.
fn moments(vectors: &[Vec<f64>], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut s = vec![0.0f64; dim];
    let mut s2 = vec![0.0f64; dim * dim];
    for x in vectors {
        for a in 0..dim {
            s[a] += x[a];
            for b in a..dim {
                s2[a * dim + b] += x[a] * x[b];
            }
        }
    }
    for a in 0..dim {
        for b in 0..a {
            s2[a * dim + b] = s2[b * dim + a];
        }
    }
    (s, s2)
}

/// Adds `scale * u u^T` to `acc` symmetrically.
fn add_outer(acc: &mut [f64], u: &[f64], scale: f64, dim: usize) {
    for a in 0..dim {
        for b in a..dim {
            let v = scale * u[a] * u[b];
            acc[a * dim + b] += v;
            if b != a {
                acc[b * dim + a] += v;
            }
        }
    }
}

/// Builds the objective matrix `Q = B - (alpha/k) * sum_i W_i` from
/// per-identity groups of vectors.
///
/// `B` realizes the mean squared cross-identity distance: for any
/// orthonormal `V`, `trace(V B V^T)` equals the average of
/// `||V x - V y||^2` over all unordered pairs `(x, y)` from different
/// groups. `W_i` likewise realizes the within-group average over
/// ordered distinct pairs. One-vector groups contribute `W_i = 0` but
/// still count toward `k`.
///
/// Uses per-group sums and second moments for O(N d^2) cost instead of
/// the O(N^2 d) pairwise sum; the two agree to roundoff.
pub fn build_quadratic_form(
    groups: &[Vec<Vec<f64>>],
    alpha: f64,
) -> Result<QuadraticForm, EmbedError> {
    if groups.len() < 2 {
        return Err(EmbedError::TooFewIdentities { got: groups.len() });
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(EmbedError::BadAlpha { alpha });
    }
    let dim = groups
        .iter()
        .flat_map(|g| g.first())
        .next()
        .ok_or(EmbedError::EmptyInput)?
        .len();
    if dim == 0 {
        return Err(EmbedError::EmptyInput);
    }
    let mut n_total = 0usize;
    for g in groups {
        for v in g {
            if v.len() != dim {
                return Err(EmbedError::DimensionMismatch {
                    want: dim,
                    got: v.len(),
                });
            }
        }
        n_total += g.len();
    }
    if groups.iter().any(|g| g.is_empty()) {
        return Err(EmbedError::EmptyInput);
    }

    let k = groups.len();
    let mut class_sq = 0usize;

    // B numerator: N*S2 - s s^T - sum_c (m_c*S2_c - s_c s_c^T), which is
    // half the sum of (x-y)(x-y)^T over ordered cross-group pairs.
    // W_i: (2 m_i S2_i - 2 s_i s_i^T) / (m_i (m_i - 1)).
    let mut b_num = vec![0.0f64; dim * dim];
    let mut w_sum = vec![0.0f64; dim * dim];
    let mut s = vec![0.0f64; dim];
    let mut s2 = vec![0.0f64; dim * dim];
    for g in groups {
        let m = g.len();
        class_sq += m * m;
        let (s_c, s2_c) = moments(g, dim);
        for (acc, x) in b_num.iter_mut().zip(&s2_c) {
            *acc -= m as f64 * x;
        }
        add_outer(&mut b_num, &s_c, 1.0, dim);
        if m >= 2 {
            let scale = 2.0 / (m * (m - 1)) as f64;
            for (acc, x) in w_sum.iter_mut().zip(&s2_c) {
                *acc += scale * m as f64 * x;
            }
            add_outer(&mut w_sum, &s_c, -scale, dim);
        }
        for (a, b) in s.iter_mut().zip(&s_c) {
            *a += b;
        }
        for (a, b) in s2.iter_mut().zip(&s2_c) {
            *a += b;
        }
    }
    for (acc, x) in b_num.iter_mut().zip(&s2) {
        *acc += n_total as f64 * x;
    }
    add_outer(&mut b_num, &s, -1.0, dim);

    let cross_pairs = (n_total * n_total - class_sq) / 2;
    if cross_pairs == 0 {
        // Unreachable with >= 2 non-empty groups, kept as a guard.
        return Err(EmbedError::TooFewIdentities { got: 1 });
    }
    let b_scale = 1.0 / cross_pairs as f64;
    let w_scale = alpha / k as f64;
    let mut matrix = vec![0.0f64; dim * dim];
    for i in 0..dim * dim {
        matrix[i] = b_num[i] * b_scale - w_scale * w_sum[i];
    }
    Ok(QuadraticForm { dim, k, matrix })
}

/// Top-`n` eigenpairs of the objective matrix: row-major `n x dim`
/// components and their eigenvalues, descending. Each returned pair is
/// re-verified against the residual bound.
pub fn top_aspc(form: &QuadraticForm, n: usize) -> Result<(Vec<f64>, Vec<f64>), EmbedError> {
    let d = form.dim;
    if n == 0 || n > d {
        return Err(EmbedError::ComponentsOutOfRange { n, dim: d });
    }
    let eig = symmetric_eigen(&form.matrix, d)?;
    let components = eig.vectors[..n * d].to_vec();
    let eigenvalues = eig.eigenvalues[..n].to_vec();
    for (i, lambda) in eigenvalues.iter().enumerate() {
        let v = &components[i * d..(i + 1) * d];
        let mut residual_sq = 0.0f64;
        for r in 0..d {
            let qv = math::dot(&form.matrix[r * d..(r + 1) * d], v);
            let diff = qv - lambda * v[r];
            residual_sq += diff * diff;
        }
        let residual = math::sqrt(residual_sq);
        let bound = RESIDUAL_TOL * if lambda.abs() > 1.0 { lambda.abs() } else { 1.0 };
        if residual > bound {
            return Err(EmbedError::Eigen(EigenError::NoConvergence {
                residual,
                sweeps: 0,
            }));
        }
    }
    Ok((components, eigenvalues))
}

/// A fitted three-stage head: mean vector, projection basis, and the
/// hyperparameters it was fitted with.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionModel {
    dim: usize,
    n_components: usize,
    alpha: f64,
    mean: Vec<f64>,
    eigenvalues: Vec<f64>,
    /// Row-major `n_components x dim`; rows are orthonormal.
    components: Vec<f64>,
}

impl ProjectionModel {
    /// Assembles a model from parts, enforcing the shape and
    /// orthonormality invariants. Used when loading a serialized model.
    pub fn from_parts(
        dim: usize,
        n_components: usize,
        alpha: f64,
        mean: Vec<f64>,
        eigenvalues: Vec<f64>,
        components: Vec<f64>,
    ) -> Result<Self, EmbedError> {
        if dim == 0 || n_components == 0 || n_components > dim {
            return Err(EmbedError::ComponentsOutOfRange {
                n: n_components,
                dim,
            });
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(EmbedError::BadAlpha { alpha });
        }
        if mean.len() != dim {
            return Err(EmbedError::InvalidModel(alloc::format!(
                "mean length {} does not match dim {dim}",
                mean.len()
            )));
        }
        if eigenvalues.len() != n_components {
            return Err(EmbedError::InvalidModel(alloc::format!(
                "eigenvalue count {} does not match n_components {n_components}",
                eigenvalues.len()
            )));
        }
        if components.len() != n_components * dim {
            return Err(EmbedError::InvalidModel(alloc::format!(
                "component array length {} does not match {n_components}x{dim}",
                components.len()
            )));
        }
        if mean.iter().chain(&eigenvalues).chain(&components).any(|x| !x.is_finite()) {
            return Err(EmbedError::InvalidModel(String::from(
                "non-finite entry in mean, eigenvalues, or components",
            )));
        }
        if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return Err(EmbedError::InvalidModel(String::from(
                "eigenvalues are not sorted descending",
            )));
        }
        for i in 0..n_components {
            let ri = &components[i * dim..(i + 1) * dim];
            for j in i..n_components {
                let rj = &components[j * dim..(j + 1) * dim];
                let want = if i == j { 1.0 } else { 0.0 };
                if (math::dot(ri, rj) - want).abs() > ORTHO_TOL {
                    return Err(EmbedError::InvalidModel(alloc::format!(
                        "component rows {i} and {j} are not orthonormal"
                    )));
                }
            }
        }
        Ok(Self {
            dim,
            n_components,
            alpha,
            mean,
            eigenvalues,
            components,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn n_components(&self) -> usize {
        self.n_components
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
    /// Row-major `n_components x dim`.
    pub fn components(&self) -> &[f64] {
        &self.components
    }

    /// Number of retained components whose eigenvalue is not positive.
    /// A nonzero count means the objective had fewer than
    /// `n_components` ascending directions; reports surface this.
    pub fn nonpositive_components(&self) -> usize {
        self.eigenvalues.iter().filter(|l| **l <= 0.0).count()
    }

    /// Applies the three stages to one vector: centralize, project onto
    /// the unit sphere, multiply by the component matrix.
    pub fn embed(&self, v: &[f64]) -> Result<Vec<f64>, EmbedError> {
        if v.len() != self.dim {
            return Err(EmbedError::DimensionMismatch {
                want: self.dim,
                got: v.len(),
            });
        }
        let centered = centralize(v, &self.mean)?;
        let unit = spherical_project(&centered)?;
        let mut out = Vec::with_capacity(self.n_components);
        for i in 0..self.n_components {
            out.push(math::dot(
                &self.components[i * self.dim..(i + 1) * self.dim],
                &unit,
            ));
        }
        Ok(out)
    }
}

/// Fits a [`ProjectionModel`] on a training dataset: flat mean over all
/// rows, centralize and normalize every vector, build the objective
/// from the normalized vectors grouped by identity, then keep the top
/// `n` eigenpairs.
pub fn fit(train: &FeatureDataset, alpha: f64, n: usize) -> Result<ProjectionModel, EmbedError> {
    let dim = train.dim();
    if n == 0 || n > dim {
        return Err(EmbedError::ComponentsOutOfRange { n, dim });
    }
    let rows: Vec<&[f64]> = train.records().iter().map(|r| r.features.as_slice()).collect();
    let mean = compute_mean(&rows)?;

    let mut groups: Vec<Vec<Vec<f64>>> = Vec::with_capacity(train.identity_count());
    for identity in train.identities() {
        let mut group = Vec::new();
        for &row in train.rows_of(identity) {
            let rec = &train.records()[row];
            let centered = centralize(&rec.features, &mean)?;
            let unit = spherical_project(&centered).map_err(|e| match e {
                EmbedError::DegenerateVector { .. } => EmbedError::DegenerateTrainingRow {
                    identity: rec.identity.clone(),
                    image: rec.image.clone(),
                },
                other => other,
            })?;
            group.push(unit);
        }
        groups.push(group);
    }

    let form = build_quadratic_form(&groups, alpha)?;
    let (components, eigenvalues) = top_aspc(&form, n)?;
    Ok(ProjectionModel {
        dim,
        n_components: n,
        alpha,
        mean,
        eigenvalues,
        components,
    })
}
