//! Feature construction for the real-vs-fake classification problem.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Dataset;

/// Variance floor used before taking logs.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// A dense row-major matrix of features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Feature(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(FeatureMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Feature("ragged feature rows".into()));
        }
        FeatureMatrix::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.max(1))
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Stacks `self` on top of `other`.
    pub fn vstack(&self, other: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.cols != other.cols {
            return Err(Error::Feature(format!(
                "cannot stack widths {} and {}",
                self.cols, other.cols
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        FeatureMatrix::new(self.rows + other.rows, self.cols, data)
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

fn default_true() -> bool {
    true
}
fn default_lags() -> Vec<usize> {
    vec![1, 2]
}
fn default_pcs() -> usize {
    3
}
fn default_series() -> usize {
    1
}

/// Which per-row summaries to append.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryOptions {
    #[serde(default = "default_true")]
    pub mean: bool,
    #[serde(default = "default_true")]
    pub log_var: bool,
    #[serde(default = "default_lags")]
    pub acf_lags: Vec<usize>,
    #[serde(default)]
    pub cross_corr: bool,
    /// Leading principal components of the raw rows.
    #[serde(default = "default_pcs")]
    pub pcs: usize,
    /// Number of equal-length series concatenated in one row.
    #[serde(default = "default_series")]
    pub n_series: usize,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        SummaryOptions {
            mean: true,
            log_var: true,
            acf_lags: default_lags(),
            cross_corr: false,
            pcs: default_pcs(),
            n_series: default_series(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSpec {
    Raw,
    /// `(x, x^2)` per raw column; the intercept belongs to the classifier.
    Poly2,
    Summary(SummaryOptions),
    RawPlusSummary(SummaryOptions),
}

impl FeatureSpec {
    pub fn pcs(&self) -> usize {
        match self {
            FeatureSpec::Summary(o) | FeatureSpec::RawPlusSummary(o) => o.pcs,
            _ => 0,
        }
    }

    pub fn width(&self, raw_len: usize) -> usize {
        match self {
            FeatureSpec::Raw => raw_len,
            FeatureSpec::Poly2 => 2 * raw_len,
            FeatureSpec::Summary(o) => o.summary_width(),
            FeatureSpec::RawPlusSummary(o) => raw_len + o.summary_width(),
        }
    }
}

impl SummaryOptions {
    fn per_series(&self) -> usize {
        self.mean as usize + self.log_var as usize + self.acf_lags.len()
    }

    fn summary_width(&self) -> usize {
        let pairs = if self.cross_corr {
            self.n_series * (self.n_series - 1) / 2
        } else {
            0
        };
        self.n_series * self.per_series() + pairs + self.pcs
    }
}

pub fn series_mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Log of the (1/T) variance, floored at [`VARIANCE_FLOOR`].
pub fn series_log_var(x: &[f64]) -> f64 {
    let m = series_mean(x);
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64;
    v.max(VARIANCE_FLOOR).ln()
}

/// Sample autocorrelation at `lag`; zero for a constant series.
pub fn autocorr(x: &[f64], lag: usize) -> f64 {
    let m = series_mean(x);
    let denom: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    if denom <= 0.0 || lag >= x.len() {
        return 0.0;
    }
    let num: f64 = x
        .iter()
        .zip(&x[lag..])
        .map(|(a, b)| (a - m) * (b - m))
        .sum();
    num / denom
}

/// Pearson correlation at lag zero; zero if either series is constant.
pub fn cross_corr(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (series_mean(x), series_mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Centering vector and leading principal axes of a pooled raw matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    pub axes: Vec<Vec<f64>>,
}

impl PcaBasis {
    /// Fits `k` axes on the rows of all `datasets` pooled together.
    pub fn fit(datasets: &[&Dataset], k: usize) -> Result<PcaBasis> {
        let p = datasets
            .first()
            .map(|d| d.p())
            .ok_or_else(|| Error::Feature("no data for PCA".into()))?;
        if datasets.iter().any(|d| d.p() != p) {
            return Err(Error::Feature("PCA inputs differ in width".into()));
        }
        let n: usize = datasets.iter().map(|d| d.n()).sum();
        let mut mean = vec![0.0; p];
        for d in datasets {
            for row in d.rows() {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let rows: Vec<&[f64]> = datasets.iter().flat_map(|d| d.rows()).collect();
        let centered = DMatrix::from_fn(n, p, |i, j| rows[i][j] - mean[j]);

        let mut axes = Vec::with_capacity(k);
        if n <= p {
            // Gram-matrix route: eigenvectors u of C C' give axes C'u / sqrt(lambda).
            let gram = &centered * centered.transpose();
            let eig = SymmetricEigen::new(gram);
            let order = descending(eig.eigenvalues.as_slice());
            for &idx in order.iter().take(k) {
                let lambda = eig.eigenvalues[idx];
                let mut axis = vec![0.0; p];
                if lambda > 1e-12 {
                    let u = eig.eigenvectors.column(idx);
                    let v = centered.transpose() * u;
                    let s = lambda.sqrt();
                    for (a, b) in axis.iter_mut().zip(v.iter()) {
                        *a = b / s;
                    }
                }
                axes.push(orient(axis));
            }
        } else {
            let cov = centered.transpose() * &centered;
            let eig = SymmetricEigen::new(cov);
            let order = descending(eig.eigenvalues.as_slice());
            for &idx in order.iter().take(k) {
                let axis: Vec<f64> = if eig.eigenvalues[idx] > 1e-12 {
                    eig.eigenvectors.column(idx).iter().cloned().collect()
                } else {
                    vec![0.0; p]
                };
                axes.push(orient(axis));
            }
        }
        while axes.len() < k {
            axes.push(vec![0.0; p]);
        }
        Ok(PcaBasis { mean, axes })
    }

    pub fn project(&self, row: &[f64], out: &mut Vec<f64>) {
        for axis in &self.axes {
            let s: f64 = row
                .iter()
                .zip(&self.mean)
                .zip(axis)
                .map(|((x, m), a)| (x - m) * a)
                .sum();
            out.push(s);
        }
    }
}

fn descending(vals: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap_or(std::cmp::Ordering::Equal));
    idx
}

// Largest-magnitude entry positive, so the basis does not depend on solver signs.
fn orient(mut axis: Vec<f64>) -> Vec<f64> {
    let pivot = axis
        .iter()
        .cloned()
        .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
    if pivot < 0.0 {
        axis.iter_mut().for_each(|v| *v = -*v);
    }
    axis
}

/// One feature row per observation.
pub fn build_features(
    data: &Dataset,
    spec: &FeatureSpec,
    pca: Option<&PcaBasis>,
) -> Result<FeatureMatrix> {
    let p = data.p();
    let width = spec.width(p);
    if spec.pcs() > 0 {
        match pca {
            None => {
                return Err(Error::Contract(
                    "principal-component features need a fitted PCA basis".into(),
                ))
            }
            Some(b) if b.mean.len() != p || b.axes.len() != spec.pcs() => {
                return Err(Error::Feature("PCA basis does not match the data".into()))
            }
            _ => {}
        }
    }
    let mut out = Vec::with_capacity(data.n() * width);
    let mut scratch = Vec::new();
    for row in data.rows() {
        match spec {
            FeatureSpec::Raw => out.extend_from_slice(row),
            FeatureSpec::Poly2 => {
                for &x in row {
                    out.push(x);
                    out.push(x * x);
                }
            }
            FeatureSpec::Summary(o) => summaries(row, o, pca, &mut out, &mut scratch)?,
            FeatureSpec::RawPlusSummary(o) => {
                out.extend_from_slice(row);
                summaries(row, o, pca, &mut out, &mut scratch)?;
            }
        }
    }
    FeatureMatrix::new(data.n(), width, out)
}

fn summaries(
    row: &[f64],
    o: &SummaryOptions,
    pca: Option<&PcaBasis>,
    out: &mut Vec<f64>,
    scratch: &mut Vec<f64>,
) -> Result<()> {
    if o.n_series == 0 || row.len() % o.n_series != 0 {
        return Err(Error::Feature(format!(
            "row of length {} does not split into {} series",
            row.len(),
            o.n_series
        )));
    }
    let t = row.len() / o.n_series;
    let series: Vec<&[f64]> = row.chunks(t).collect();
    for s in &series {
        if o.mean {
            out.push(series_mean(s));
        }
        if o.log_var {
            out.push(series_log_var(s));
        }
        for &lag in &o.acf_lags {
            out.push(autocorr(s, lag));
        }
    }
    if o.cross_corr {
        for a in 0..series.len() {
            for b in a + 1..series.len() {
                out.push(cross_corr(series[a], series[b]));
            }
        }
    }
    if o.pcs > 0 {
        scratch.clear();
        pca.expect("checked by caller").project(row, scratch);
        out.extend_from_slice(scratch);
    }
    Ok(())
}

/// Builds real and fake features, fitting the PCA basis on the pooled rows
/// when `spec` asks for principal components.
pub fn pooled_features(
    real: &Dataset,
    fake: &Dataset,
    spec: &FeatureSpec,
) -> Result<(FeatureMatrix, FeatureMatrix)> {
    if real.p() != fake.p() {
        return Err(Error::Feature(format!(
            "real rows have length {}, fake rows {}",
            real.p(),
            fake.p()
        )));
    }
    let basis = if spec.pcs() > 0 {
        Some(PcaBasis::fit(&[real, fake], spec.pcs())?)
    } else {
        None
    };
    Ok((
        build_features(real, spec, basis.as_ref())?,
        build_features(fake, spec, basis.as_ref())?,
    ))
}
