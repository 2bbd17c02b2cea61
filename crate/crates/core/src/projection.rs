//! Random projection generators and goal-dimension draws.
//!
//! A [`ProjectionMatrix`] maps the `q` screened predictors of one model to
//! `m` projected predictors. Gaussian, sparse and Haar generators ignore the
//! data; the CW sparse embedding can put the screening coefficients on its
//! nonzeros instead of random signs, and the Haar-select generator picks the
//! best of several Haar draws on a holdout split.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SparError};
use crate::family::{Family, FamilySpec};
use crate::glm::{fit_penalized_glm, GlmOptions};
use crate::plugin::Controls;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RpKind {
    Gaussian,
    Sparse,
    Cw,
    Haar,
    HaarSelect,
    Plugin(String),
}

impl fmt::Display for RpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RpKind::Gaussian => f.write_str("gaussian"),
            RpKind::Sparse => f.write_str("sparse"),
            RpKind::Cw => f.write_str("cw"),
            RpKind::Haar => f.write_str("haar"),
            RpKind::HaarSelect => f.write_str("haar-select"),
            RpKind::Plugin(name) => f.write_str(name),
        }
    }
}

impl FromStr for RpKind {
    type Err = SparError;

    /// Unknown names are taken as plugin names.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "gaussian" => RpKind::Gaussian,
            "sparse" => RpKind::Sparse,
            "cw" => RpKind::Cw,
            "haar" => RpKind::Haar,
            "haar-select" | "haar_select" => RpKind::HaarSelect,
            "" => return Err(SparError::config("empty projection kind")),
            other => RpKind::Plugin(other.to_string()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RpSpec {
    pub kind: RpKind,
    /// Density of the sparse generator.
    pub psi: f64,
    /// CW only: use screening coefficients instead of random signs.
    pub data_driven: bool,
    /// Smallest goal dimension; `None` means `ceil(ln p)`.
    pub mslow: Option<usize>,
    /// Largest goal dimension; `None` means `floor(n / 2)`.
    pub msup: Option<usize>,
    /// Haar-select: number of candidates per model.
    pub b2: usize,
    /// Haar-select: fraction of rows held out for scoring candidates.
    pub holdout_frac: f64,
    #[serde(default)]
    pub controls: Controls,
}

impl Default for RpSpec {
    fn default() -> Self {
        RpSpec::cw(true)
    }
}

impl RpSpec {
    pub fn new(kind: RpKind) -> Self {
        RpSpec {
            kind,
            psi: 1.0,
            data_driven: false,
            mslow: None,
            msup: None,
            b2: 50,
            holdout_frac: 0.25,
            controls: Controls::new(),
        }
    }

    pub fn gaussian() -> Self {
        Self::new(RpKind::Gaussian)
    }

    pub fn sparse(psi: f64) -> Self {
        RpSpec {
            psi,
            ..Self::new(RpKind::Sparse)
        }
    }

    pub fn cw(data_driven: bool) -> Self {
        RpSpec {
            data_driven,
            ..Self::new(RpKind::Cw)
        }
    }

    pub fn haar() -> Self {
        Self::new(RpKind::Haar)
    }

    pub fn haar_select(b2: usize) -> Self {
        RpSpec {
            b2,
            ..Self::new(RpKind::HaarSelect)
        }
    }

    pub fn plugin(name: impl Into<String>) -> Self {
        Self::new(RpKind::Plugin(name.into()))
    }

    pub fn dims(mut self, mslow: usize, msup: usize) -> Self {
        self.mslow = Some(mslow);
        self.msup = Some(msup);
        self
    }

    /// Whether CW matrices carry data on their nonzeros.
    pub fn is_data_driven_cw(&self) -> bool {
        self.kind == RpKind::Cw && self.data_driven
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.psi > 0.0 && self.psi <= 1.0) {
            return Err(SparError::config("psi must lie in (0, 1]"));
        }
        if self.mslow == Some(0) {
            return Err(SparError::config("mslow must be at least 1"));
        }
        if let (Some(lo), Some(hi)) = (self.mslow, self.msup) {
            if lo > hi {
                return Err(SparError::config(format!("mslow ({lo}) exceeds msup ({hi})")));
            }
        }
        if self.kind == RpKind::HaarSelect {
            if self.b2 == 0 {
                return Err(SparError::config("B2 must be at least 1"));
            }
            if !(self.holdout_frac > 0.0 && self.holdout_frac < 1.0) {
                return Err(SparError::config("holdout fraction must lie in (0, 1)"));
            }
        }
        Ok(())
    }

    /// Goal-dimension bounds for data with `n` rows and `p` predictors.
    pub fn goal_bounds(&self, n: usize, p: usize) -> Result<(usize, usize)> {
        let lo = self.mslow.unwrap_or_else(|| default_mslow(p));
        let hi = self.msup.unwrap_or_else(|| default_msup(n));
        if lo == 0 || lo > hi {
            return Err(SparError::config(format!(
                "goal dimension bounds mslow={lo}, msup={hi} are empty"
            )));
        }
        Ok((lo, hi))
    }
}

/// `ceil(ln p)`, at least 1.
pub fn default_mslow(p: usize) -> usize {
    ((p.max(1) as f64).ln().ceil() as usize).max(1)
}

/// `floor(n / 2)`.
pub fn default_msup(n: usize) -> usize {
    n / 2
}

/// `M` goal dimensions drawn uniformly from `mslow..=msup`.
pub fn draw_goal_dims<R: Rng + ?Sized>(count: usize, mslow: usize, msup: usize, rng: &mut R) -> Result<Vec<usize>> {
    if mslow > msup {
        return Err(SparError::config(format!("mslow ({mslow}) exceeds msup ({msup})")));
    }
    Ok((0..count).map(|_| rng.random_range(mslow..=msup)).collect())
}

/// Minimal dimension for which a JL projection preserves all pairwise
/// distances of `n` points within `1 +- eps` with probability `1 - n^-tau`.
pub fn jl_min_dim(n: usize, eps: f64, tau: f64) -> Result<usize> {
    jl_min_dim_real(n as f64, eps, tau)
}

pub(crate) fn jl_min_dim_real(n: f64, eps: f64, tau: f64) -> Result<usize> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(SparError::config("JL distortion must lie in (0, 1)"));
    }
    if !(tau > 0.0) || !(n >= 1.0) {
        return Err(SparError::config("JL bound needs n >= 1 and tau > 0"));
    }
    let m0 = n.ln() * (4.0 + 2.0 * tau) / (eps * eps / 2.0 - eps * eps * eps / 3.0);
    // absorb rounding noise so exact integers are not bumped up
    Ok((m0 * (1.0 - 4.0 * f64::EPSILON)).ceil() as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Storage {
    Dense(DMatrix<f64>),
    /// Sorted by column, then row.
    Sparse(Vec<Triplet>),
}

/// An `m x q` projection of one model's screened predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ProjectionRepr", try_from = "ProjectionRepr")]
pub struct ProjectionMatrix {
    m: usize,
    q: usize,
    kind: RpKind,
    storage: Storage,
}

impl ProjectionMatrix {
    pub fn dense(kind: RpKind, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(SparError::Numerical("projection matrix has non-finite entries".into()));
        }
        Ok(ProjectionMatrix {
            m: matrix.nrows(),
            q: matrix.ncols(),
            kind,
            storage: Storage::Dense(matrix),
        })
    }

    pub fn sparse(kind: RpKind, m: usize, q: usize, mut triplets: Vec<Triplet>) -> Result<Self> {
        for t in &triplets {
            if t.row >= m || t.col >= q {
                return Err(SparError::shape(format!(
                    "triplet ({}, {}) outside a {m}x{q} projection",
                    t.row, t.col
                )));
            }
            if !t.value.is_finite() {
                return Err(SparError::Numerical("projection matrix has non-finite entries".into()));
            }
        }
        triplets.sort_by(|a, b| a.col.cmp(&b.col).then(a.row.cmp(&b.row)));
        Ok(ProjectionMatrix {
            m,
            q,
            kind,
            storage: Storage::Sparse(triplets),
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn kind(&self) -> &RpKind {
        &self.kind
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.storage {
            Storage::Dense(d) => d.clone(),
            Storage::Sparse(ts) => {
                let mut d = DMatrix::zeros(self.m, self.q);
                for t in ts {
                    d[(t.row, t.col)] += t.value;
                }
                d
            }
        }
    }

    /// Row hashed to by every column, when the matrix has exactly one stored
    /// entry per column.
    pub fn cw_rows(&self) -> Option<Vec<usize>> {
        match &self.storage {
            Storage::Sparse(ts) if ts.len() == self.q && ts.iter().enumerate().all(|(j, t)| t.col == j) => {
                Some(ts.iter().map(|t| t.row).collect())
            }
            _ => None,
        }
    }

    /// Values on the single nonzero of each column (CW matrices only).
    pub fn cw_values(&self) -> Option<Vec<f64>> {
        self.cw_rows()?;
        match &self.storage {
            Storage::Sparse(ts) => Some(ts.iter().map(|t| t.value).collect()),
            Storage::Dense(_) => None,
        }
    }

    /// Same row structure with new per-column values.
    pub fn with_cw_values(&self, values: &[f64]) -> Result<Self> {
        let rows = self
            .cw_rows()
            .ok_or_else(|| SparError::config("only CW sparse embeddings can have their values refreshed"))?;
        if values.len() != self.q {
            return Err(SparError::shape(format!("{} values for {} columns", values.len(), self.q)));
        }
        let triplets = rows
            .into_iter()
            .zip(values)
            .enumerate()
            .map(|(col, (row, &value))| Triplet { row, col, value })
            .collect();
        ProjectionMatrix::sparse(self.kind.clone(), self.m, self.q, triplets)
    }

    /// `Phi^T gamma`, the back-projection onto the `q` screened predictors.
    pub fn transpose_mul(&self, gamma: &[f64]) -> Vec<f64> {
        assert_eq!(gamma.len(), self.m, "coefficient length must equal projection rows");
        match &self.storage {
            Storage::Dense(d) => {
                let g = DVector::from_column_slice(gamma);
                (d.transpose() * g).iter().copied().collect()
            }
            Storage::Sparse(ts) => {
                let mut out = vec![0.0; self.q];
                for t in ts {
                    out[t.col] += t.value * gamma[t.row];
                }
                out
            }
        }
    }

    /// `Z = x_sub Phi^T`.
    pub fn project(&self, x_sub: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x_sub.ncols() != self.q {
            return Err(SparError::shape(format!(
                "projection expects {} columns, got {}",
                self.q,
                x_sub.ncols()
            )));
        }
        let cols: Vec<usize> = (0..self.q).collect();
        Ok(self.project_columns(x_sub, &cols))
    }

    /// `Z = x[:, cols] Phi^T` without materializing the column subset for
    /// sparse matrices.
    pub(crate) fn project_columns(&self, x: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
        debug_assert_eq!(cols.len(), self.q);
        let n = x.nrows();
        match &self.storage {
            Storage::Dense(d) => {
                let sub = x.select_columns(cols);
                sub * d.transpose()
            }
            Storage::Sparse(ts) => {
                let mut z = DMatrix::zeros(n, self.m);
                for t in ts {
                    if t.value == 0.0 {
                        continue;
                    }
                    let src = x.column(cols[t.col]);
                    let mut dst = z.column_mut(t.row);
                    dst.axpy(t.value, &src, 1.0);
                }
                z
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ProjectionRepr {
    m: usize,
    q: usize,
    kind: RpKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    dense_row_major: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    triplets: Option<Vec<Triplet>>,
}

impl From<ProjectionMatrix> for ProjectionRepr {
    fn from(p: ProjectionMatrix) -> Self {
        let (dense_row_major, triplets) = match p.storage {
            Storage::Dense(d) => (Some(d.transpose().as_slice().to_vec()), None),
            Storage::Sparse(ts) => (None, Some(ts)),
        };
        ProjectionRepr {
            m: p.m,
            q: p.q,
            kind: p.kind,
            dense_row_major,
            triplets,
        }
    }
}

impl TryFrom<ProjectionRepr> for ProjectionMatrix {
    type Error = SparError;

    fn try_from(r: ProjectionRepr) -> Result<Self> {
        match (r.dense_row_major, r.triplets) {
            (Some(vals), None) => {
                if vals.len() != r.m * r.q {
                    return Err(SparError::Schema(format!(
                        "dense projection has {} values for a {}x{} matrix",
                        vals.len(),
                        r.m,
                        r.q
                    )));
                }
                ProjectionMatrix::dense(r.kind, DMatrix::from_row_slice(r.m, r.q, &vals))
            }
            (None, Some(ts)) => ProjectionMatrix::sparse(r.kind, r.m, r.q, ts),
            _ => Err(SparError::Schema("projection needs exactly one of dense values or triplets".into())),
        }
    }
}

/// Dense `m x q` matrix of iid standard normal entries.
pub fn gen_gaussian<R: Rng + ?Sized>(m: usize, q: usize, rng: &mut R) -> ProjectionMatrix {
    let d = DMatrix::from_fn(m, q, |_, _| rng.sample(StandardNormal));
    ProjectionMatrix {
        m,
        q,
        kind: RpKind::Gaussian,
        storage: Storage::Dense(d),
    }
}

/// Entries `+-1/sqrt(psi)` with probability `psi/2` each, zero otherwise.
pub fn gen_sparse<R: Rng + ?Sized>(m: usize, q: usize, psi: f64, rng: &mut R) -> Result<ProjectionMatrix> {
    if !(psi > 0.0 && psi <= 1.0) {
        return Err(SparError::config("psi must lie in (0, 1]"));
    }
    let scale = 1.0 / psi.sqrt();
    let mut triplets = Vec::new();
    // column-major draw order so the layout matches the triplet sort
    for col in 0..q {
        for row in 0..m {
            let u: f64 = rng.random();
            if u < psi / 2.0 {
                triplets.push(Triplet { row, col, value: scale });
            } else if u < psi {
                triplets.push(Triplet { row, col, value: -scale });
            }
        }
    }
    ProjectionMatrix::sparse(RpKind::Sparse, m, q, triplets)
}

/// Sparse embedding with exactly one nonzero per column. Each column is sent
/// to a uniform row; its value is a random sign, or `diag_values[j]` when
/// data-driven.
pub fn gen_cw<R: Rng + ?Sized>(
    m: usize,
    q: usize,
    data_driven: bool,
    diag_values: Option<&[f64]>,
    rng: &mut R,
) -> Result<ProjectionMatrix> {
    if m == 0 {
        return Err(SparError::config("goal dimension must be at least 1"));
    }
    let values = match (data_driven, diag_values) {
        (true, None) => return Err(SparError::config("data-driven CW projection needs diagonal values")),
        (true, Some(d)) if d.len() != q => {
            return Err(SparError::shape(format!("{} diagonal values for {q} columns", d.len())))
        }
        (true, Some(d)) => Some(d),
        (false, _) => None,
    };
    let triplets = (0..q)
        .map(|col| {
            let row = rng.random_range(0..m);
            let value = match values {
                Some(d) => d[col],
                None => {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            Triplet { row, col, value }
        })
        .collect();
    ProjectionMatrix::sparse(RpKind::Cw, m, q, triplets)
}

/// `m x q` matrix with orthonormal rows, distributed by Haar measure.
pub fn gen_haar<R: Rng + ?Sized>(m: usize, q: usize, rng: &mut R) -> Result<ProjectionMatrix> {
    if m > q {
        return Err(SparError::config(format!("Haar projection needs m <= q, got m={m}, q={q}")));
    }
    let g = DMatrix::from_fn(q, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut basis = qr.q();
    let r = qr.r();
    // fix column signs so the distribution is exactly Haar
    for j in 0..m {
        if r[(j, j)] < 0.0 {
            basis.column_mut(j).neg_mut();
        }
    }
    ProjectionMatrix::dense(RpKind::Haar, basis.transpose())
}

/// Candidate scores from a Haar-select run, for inspection and testing.
#[derive(Debug, Clone)]
pub struct HaarSelection {
    pub matrix: ProjectionMatrix,
    pub chosen: usize,
    pub errors: Vec<f64>,
    pub holdout: Vec<usize>,
}

/// Draw `b2` Haar candidates and keep the one with the lowest holdout error
/// (misclassification for binomial, MSE otherwise). Ties go to the first.
///
/// `x_sub` holds the screened columns of the standardized predictors.
#[allow(clippy::too_many_arguments)]
pub fn gen_haar_select<R: Rng + ?Sized>(
    m: usize,
    x_sub: &DMatrix<f64>,
    y: &[f64],
    fam: FamilySpec,
    opts: &GlmOptions,
    b2: usize,
    holdout_frac: f64,
    rng: &mut R,
) -> Result<HaarSelection> {
    if b2 == 0 {
        return Err(SparError::config("B2 must be at least 1"));
    }
    let n = x_sub.nrows();
    let q = x_sub.ncols();
    let n_hold = (holdout_frac * n as f64).floor() as usize;
    if n_hold < 2 || n - n_hold < 2 {
        return Err(SparError::config(format!(
            "holdout of {n_hold} rows out of {n} leaves fewer than 2 rows in a part"
        )));
    }
    // first candidate comes before the split, so B2 = 1 reproduces gen_haar
    let first = gen_haar(m, q, rng)?;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut holdout = perm[..n_hold].to_vec();
    holdout.sort_unstable();
    let split = HoldoutSplit::new(x_sub, y, &holdout);

    let mut best = (holdout_error(&first, &split, fam, opts), first);
    let mut errors = vec![best.0];
    let mut chosen = 0;
    for b in 1..b2 {
        let cand = gen_haar(m, q, rng)?;
        let err = holdout_error(&cand, &split, fam, opts);
        errors.push(err);
        if err < best.0 {
            best = (err, cand);
            chosen = b;
        }
    }
    let mut matrix = best.1;
    matrix.kind = RpKind::HaarSelect;
    Ok(HaarSelection {
        matrix,
        chosen,
        errors,
        holdout,
    })
}

/// Training and holdout parts of a screened design.
pub struct HoldoutSplit {
    x_train: DMatrix<f64>,
    y_train: Vec<f64>,
    x_test: DMatrix<f64>,
    y_test: Vec<f64>,
}

impl HoldoutSplit {
    pub fn new(x: &DMatrix<f64>, y: &[f64], holdout: &[usize]) -> Self {
        let train: Vec<usize> = (0..x.nrows()).filter(|i| holdout.binary_search(i).is_err()).collect();
        HoldoutSplit {
            x_train: x.select_rows(&train),
            y_train: train.iter().map(|&i| y[i]).collect(),
            x_test: x.select_rows(holdout),
            y_test: holdout.iter().map(|&i| y[i]).collect(),
        }
    }
}

/// Holdout error of one candidate projection; `inf` if the fit fails.
pub fn holdout_error(phi: &ProjectionMatrix, split: &HoldoutSplit, fam: FamilySpec, opts: &GlmOptions) -> f64 {
    let Ok(z_train) = phi.project(&split.x_train) else {
        return f64::INFINITY;
    };
    let fit = match fit_penalized_glm(&z_train, &split.y_train, fam, opts) {
        Ok(f) => f,
        Err(_) => return f64::INFINITY,
    };
    let Ok(z_test) = phi.project(&split.x_test) else {
        return f64::INFINITY;
    };
    let eta = fit.linear_predictor(&z_test);
    let nt = split.y_test.len() as f64;
    match fam.family {
        Family::Binomial => {
            split
                .y_test
                .iter()
                .zip(eta.iter())
                .filter(|(&y, &e)| (fam.family.linkinv(e) > 0.5) != (y > 0.5))
                .count() as f64
                / nt
        }
        _ => {
            split
                .y_test
                .iter()
                .zip(eta.iter())
                .map(|(&y, &e)| {
                    let d = y - fam.family.linkinv(e);
                    d * d
                })
                .sum::<f64>()
                / nt
        }
    }
}

/// Choose among given candidates; returns the index of the first minimum and
/// all errors.
pub fn select_best_projection(
    candidates: &[ProjectionMatrix],
    x_sub: &DMatrix<f64>,
    y: &[f64],
    fam: FamilySpec,
    opts: &GlmOptions,
    holdout: &[usize],
) -> (usize, Vec<f64>) {
    let split = HoldoutSplit::new(x_sub, y, holdout);
    let errors: Vec<f64> = candidates.iter().map(|c| holdout_error(c, &split, fam, opts)).collect();
    let mut best = 0;
    for (i, e) in errors.iter().enumerate() {
        if *e < errors[best] {
            best = i;
        }
    }
    (best, errors)
}
