//! Least squares with an intercept via Householder QR.

use super::{Dataset, Family, FittedModel};
use crate::error::{Error, Result};

/// A column counts as dependent when the part of it orthogonal to the
/// earlier columns is below this fraction of its norm.
const RANK_TOL: f64 = 1e-9;

/// Accumulated Householder reflections of the accepted columns.
struct Reflectors {
    n: usize,
    // reflector k acts on rows k..n; v[k] holds those n-k entries
    vs: Vec<Vec<f64>>,
    diag: Vec<f64>,
}

impl Reflectors {
    fn apply(&self, col: &mut [f64]) {
        for (k, v) in self.vs.iter().enumerate() {
            let tail = &mut col[k..];
            let dot: f64 = v.iter().zip(tail.iter()).map(|(a, b)| a * b).sum();
            for (t, vi) in tail.iter_mut().zip(v) {
                *t -= 2.0 * dot * vi;
            }
        }
    }

    /// Tries to add `col` (already reflected); returns false when it lies in
    /// the span of the accepted columns.
    fn push(&mut self, col: &mut [f64], original_norm: f64) -> bool {
        let k = self.vs.len();
        let tail = &col[k..];
        let norm = tail.iter().map(|x| x * x).sum::<f64>().sqrt();
        if k >= self.n || norm <= RANK_TOL * original_norm.max(f64::MIN_POSITIVE) {
            return false;
        }
        let alpha = if tail[0] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = tail.to_vec();
        v[0] -= alpha;
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= vnorm);
        self.vs.push(v);
        self.diag.push(alpha);
        col[k] = alpha;
        col[k + 1..].iter_mut().for_each(|x| *x = 0.0);
        true
    }
}

/// Coefficients `[intercept, slopes...]` minimizing the squared residuals of
/// `y` on `[1, columns...]`. On rank deficiency returns the indices of the
/// dependent columns (0-based among `columns`).
pub(crate) fn least_squares(columns: &[&[f64]], y: &[f64]) -> std::result::Result<Vec<f64>, Vec<usize>> {
    let n = y.len();
    let mut refl = Reflectors {
        n,
        vs: Vec::new(),
        diag: Vec::new(),
    };
    let mut r_cols: Vec<Vec<f64>> = Vec::with_capacity(columns.len() + 1);
    let mut dependent = Vec::new();

    let ones = vec![1.0; n];
    let all = std::iter::once(ones.as_slice()).chain(columns.iter().copied());
    for (j, col) in all.enumerate() {
        let original_norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut c = col.to_vec();
        refl.apply(&mut c);
        if refl.push(&mut c, original_norm) {
            r_cols.push(c);
        } else {
            dependent.push(j.wrapping_sub(1));
        }
    }
    if !dependent.is_empty() {
        return Err(dependent);
    }

    let mut qty = y.to_vec();
    refl.apply(&mut qty);
    let m = r_cols.len();
    let mut beta = vec![0.0; m];
    for i in (0..m).rev() {
        let mut s = qty[i];
        for j in i + 1..m {
            s -= r_cols[j][i] * beta[j];
        }
        beta[i] = s / r_cols[i][i];
    }
    Ok(beta)
}

/// Ordinary least squares with intercept on the named columns.
pub fn fit_ols(ds: &Dataset, columns: &[&str]) -> Result<FittedModel> {
    let n = ds.n();
    if n < columns.len() + 1 {
        return Err(Error::Dimension(format!(
            "{n} rows cannot fit intercept plus {} terms",
            columns.len()
        )));
    }
    let mut cols = Vec::with_capacity(columns.len());
    for name in columns {
        cols.push(
            ds.x.column_by_name(name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))?,
        );
    }
    let beta = least_squares(&cols, &ds.y).map_err(|dep| Error::SingularDesign {
        columns: dep
            .into_iter()
            .map(|j| {
                columns
                    .get(j)
                    .map_or_else(|| "(intercept)".to_string(), |s| s.to_string())
            })
            .collect(),
    })?;
    Ok(FittedModel {
        family: if columns.len() == 1 {
            Family::OlsSingle
        } else {
            Family::OlsMulti
        },
        variable: ds.variable.clone(),
        intercept: beta[0],
        coefficients: columns
            .iter()
            .map(|s| s.to_string())
            .zip(beta[1..].iter().copied())
            .collect(),
        lambda: None,
    })
}
