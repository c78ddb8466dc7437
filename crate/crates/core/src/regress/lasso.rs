//! LASSO with an unpenalized intercept, solved by cyclic coordinate descent.
//!
//! Objective:
//!
//! ```text
//! (1/(2n)) * sum_i (y_i - b0 - sum_j x_ij b_j)^2 + lambda * sum_j |b_j|
//! ```
//!
//! Minimizing over `b0` centers the problem, so the solver works on the
//! centered Gram matrix `G = Xc'Xc / n` and `c = Xc'yc / n` and recovers the
//! intercept afterwards. Each coordinate update then costs `O(p)`.

use rayon::prelude::*;

use super::{Dataset, Family, FittedModel};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LassoConfig {
    pub max_sweeps: usize,
    /// Converged when the largest coefficient change in a sweep is below
    /// `tolerance * max(1, max |b|)`.
    pub tolerance: f64,
    pub grid_size: usize,
    pub grid_ratio: f64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 10_000,
            tolerance: 1e-7,
            grid_size: 100,
            grid_ratio: 1e-4,
        }
    }
}

/// Coefficients below this magnitude are snapped to exactly zero.
const ZERO_SNAP: f64 = 1e-12;
/// Sweeps between active-set polishing attempts.
const POLISH_EVERY: usize = 10;

/// Gaussian elimination with partial pivoting on a row-major `m x m`
/// system. `None` when a pivot is negligible.
fn solve_dense(a: &mut [f64], b: &mut [f64], m: usize) -> Option<Vec<f64>> {
    let scale = (0..m).fold(0.0f64, |s, i| s.max(a[i * m + i].abs()));
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &k| a[i * m + col].abs().total_cmp(&a[k * m + col].abs()))?;
        if a[piv * m + col].abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return None;
        }
        if piv != col {
            for k in 0..m {
                a.swap(piv * m + k, col * m + k);
            }
            b.swap(piv, col);
        }
        for row in col + 1..m {
            let f = a[row * m + col] / a[col * m + col];
            for k in col..m {
                a[row * m + k] -= f * a[col * m + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; m];
    for row in (0..m).rev() {
        let tail: f64 = (row + 1..m).map(|k| a[row * m + k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row * m + row];
    }
    Some(x)
}

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Centered second moments of one dataset.
struct Moments {
    p: usize,
    x_mean: Vec<f64>,
    y_mean: f64,
    gram: Vec<f64>,
    xty: Vec<f64>,
    yty: f64,
}

impl Moments {
    fn new(ds: &Dataset) -> Self {
        let n = ds.n() as f64;
        let p = ds.x.n_cols();
        let y_mean = crate::series::mean(&ds.y);
        let yc: Vec<f64> = ds.y.iter().map(|y| y - y_mean).collect();
        let mut x_mean = Vec::with_capacity(p);
        let mut xc: Vec<Vec<f64>> = Vec::with_capacity(p);
        for j in 0..p {
            let col = ds.x.column(j);
            let m = crate::series::mean(col);
            x_mean.push(m);
            xc.push(col.iter().map(|x| x - m).collect());
        }
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / n;
        let mut gram = vec![0.0; p * p];
        for j in 0..p {
            for k in j..p {
                let g = dot(&xc[j], &xc[k]);
                gram[j * p + k] = g;
                gram[k * p + j] = g;
            }
        }
        let xty = xc.iter().map(|c| dot(c, &yc)).collect();
        Self {
            p,
            x_mean,
            y_mean,
            gram,
            xty,
            yty: dot(&yc, &yc),
        }
    }

    fn lambda_max(&self) -> f64 {
        self.xty.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    fn objective(&self, beta: &[f64], lambda: f64) -> f64 {
        let p = self.p;
        let mut quad = 0.0;
        for j in 0..p {
            for k in 0..p {
                quad += beta[j] * self.gram[j * p + k] * beta[k];
            }
        }
        let lin: f64 = beta.iter().zip(&self.xty).map(|(b, c)| b * c).sum();
        let l1: f64 = beta.iter().map(|b| b.abs()).sum();
        0.5 * (self.yty - 2.0 * lin + quad) + lambda * l1
    }

    fn intercept(&self, beta: &[f64]) -> f64 {
        self.x_mean
            .iter()
            .zip(beta)
            .fold(self.y_mean, |acc, (m, b)| acc - m * b)
    }

    /// Coordinate descent from `beta` (updated in place). Returns sweeps used.
    fn solve(&self, lambda: f64, beta: &mut [f64], cfg: &LassoConfig) -> Result<usize> {
        let p = self.p;
        // grad_j = c_j - (G beta)_j
        let mut grad: Vec<f64> = (0..p)
            .map(|j| {
                (0..p).fold(self.xty[j], |acc, k| acc - self.gram[j * p + k] * beta[k])
            })
            .collect();
        let mut prev_obj = if cfg!(debug_assertions) {
            self.objective(beta, lambda)
        } else {
            0.0
        };
        let mut max_change = f64::INFINITY;
        for sweep in 1..=cfg.max_sweeps {
            max_change = 0.0f64;
            for j in 0..p {
                let gjj = self.gram[j * p + j];
                let new = if gjj > 0.0 {
                    soft_threshold(grad[j] + gjj * beta[j], lambda) / gjj
                } else {
                    0.0
                };
                let delta = new - beta[j];
                if delta != 0.0 {
                    for (k, g) in grad.iter_mut().enumerate() {
                        *g -= self.gram[k * p + j] * delta;
                    }
                    beta[j] = new;
                    max_change = max_change.max(delta.abs());
                }
            }
            if sweep % POLISH_EVERY == 0 && max_change > 0.0 && self.polish(lambda, beta) {
                grad = (0..p)
                    .map(|j| (0..p).fold(self.xty[j], |acc, k| acc - self.gram[j * p + k] * beta[k]))
                    .collect();
            }
            if cfg!(debug_assertions) {
                let obj = self.objective(beta, lambda);
                debug_assert!(
                    obj <= prev_obj + 1e-10 * self.yty.max(1.0),
                    "objective increased in sweep {sweep}: {prev_obj} -> {obj}"
                );
                prev_obj = obj;
            }
            let scale = beta.iter().fold(1.0f64, |m, b| m.max(b.abs()));
            if max_change < cfg.tolerance * scale {
                for b in beta.iter_mut() {
                    if b.abs() < ZERO_SNAP {
                        *b = 0.0;
                    }
                }
                return Ok(sweep);
            }
        }
        let scale = beta.iter().fold(1.0f64, |m, b| m.max(b.abs()));
        Err(Error::NoConvergence {
            sweeps: cfg.max_sweeps,
            max_change,
            threshold: cfg.tolerance * scale,
        })
    }

    /// Solves the stationarity equations `G_AA b_A = c_A - lambda * s_A` on
    /// the current active set `A` with signs `s`. The solution replaces
    /// `beta` only if it keeps the signs, satisfies the inactive
    /// conditions and does not raise the objective. Coordinate descent
    /// crawls on ill-conditioned designs; this jumps to the exact optimum
    /// once the active set has settled.
    fn polish(&self, lambda: f64, beta: &mut [f64]) -> bool {
        let p = self.p;
        let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
        let m = active.len();
        if m == 0 {
            return false;
        }
        let mut a: Vec<f64> = Vec::with_capacity(m * m);
        for &j in &active {
            a.extend(active.iter().map(|&k| self.gram[j * p + k]));
        }
        let mut rhs: Vec<f64> = active
            .iter()
            .map(|&j| self.xty[j] - lambda * beta[j].signum())
            .collect();
        let Some(x) = solve_dense(&mut a, &mut rhs, m) else {
            return false;
        };
        if active.iter().zip(&x).any(|(&j, v)| v.signum() != beta[j].signum() || *v == 0.0) {
            return false;
        }
        let mut candidate = vec![0.0; p];
        for (&j, v) in active.iter().zip(&x) {
            candidate[j] = *v;
        }
        let slack = 1e-12 * self.yty.max(1.0).sqrt();
        for j in (0..p).filter(|j| candidate[*j] == 0.0) {
            let g = (0..p).fold(self.xty[j], |acc, k| acc - self.gram[j * p + k] * candidate[k]);
            if g.abs() > lambda + slack {
                return false;
            }
        }
        if self.objective(&candidate, lambda) > self.objective(beta, lambda) {
            return false;
        }
        beta.copy_from_slice(&candidate);
        true
    }

    fn model(&self, ds: &Dataset, beta: Vec<f64>, lambda: f64) -> FittedModel {
        FittedModel {
            family: Family::Lasso,
            variable: ds.variable.clone(),
            intercept: self.intercept(&beta),
            coefficients: ds.x.columns().iter().cloned().zip(beta).collect(),
            lambda: Some(lambda),
        }
    }
}

pub fn fit_lasso(ds: &Dataset, lambda: f64, cfg: &LassoConfig) -> Result<FittedModel> {
    fit_lasso_warm(ds, lambda, cfg, None)
}

/// As [`fit_lasso`], starting coordinate descent from `warm` slopes.
pub fn fit_lasso_warm(
    ds: &Dataset,
    lambda: f64,
    cfg: &LassoConfig,
    warm: Option<&[f64]>,
) -> Result<FittedModel> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }
    if ds.n() == 0 {
        return Err(Error::Empty("lasso needs at least one row"));
    }
    let moments = Moments::new(ds);
    let mut beta = match warm {
        Some(w) if w.len() == moments.p => w.to_vec(),
        Some(w) => {
            return Err(Error::LengthMismatch {
                left: moments.p,
                right: w.len(),
            })
        }
        None => vec![0.0; moments.p],
    };
    moments.solve(lambda, &mut beta, cfg)?;
    Ok(moments.model(ds, beta, lambda))
}

/// Smallest penalty at which every slope is zero:
/// `max_j |(1/n) sum_i x_ij (y_i - mean(y))|`.
pub fn lambda_max(ds: &Dataset) -> f64 {
    Moments::new(ds).lambda_max()
}

/// `n_points` log-spaced penalties from `lambda_max` down to
/// `ratio * lambda_max`.
pub fn lambda_grid(ds: &Dataset, n_points: usize, ratio: f64) -> Vec<f64> {
    log_grid(lambda_max(ds), n_points, ratio)
}

pub(crate) fn log_grid(lmax: f64, n_points: usize, ratio: f64) -> Vec<f64> {
    if lmax <= 0.0 || n_points <= 1 {
        return vec![lmax.max(0.0)];
    }
    let step = ratio.ln() / (n_points - 1) as f64;
    (0..n_points)
        .map(|k| {
            if k == 0 {
                lmax
            } else {
                lmax * (step * k as f64).exp()
            }
        })
        .collect()
}

/// Penalty from `grid` with the lowest inner leave-one-out RMSE; ties go to
/// the larger penalty. Each inner fold walks the path from the largest
/// penalty down, warm-starting every fit from the previous one.
pub fn select_lambda(ds: &Dataset, grid: &[f64], cfg: &LassoConfig) -> Result<f64> {
    match grid.len() {
        0 => return Err(Error::Empty("empty lambda grid")),
        1 => return Ok(grid[0]),
        _ => {}
    }
    let n = ds.n();
    if n < 2 {
        return Err(Error::TooFewValues {
            name: ds.variable.clone(),
            got: n,
            min: 2,
        });
    }
    let mut path: Vec<usize> = (0..grid.len()).collect();
    path.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));

    let fold_errors: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let train = ds.without_row(i);
            let moments = Moments::new(&train);
            let mut beta = vec![0.0; moments.p];
            let mut sq = vec![0.0; grid.len()];
            for &g in &path {
                moments.solve(grid[g], &mut beta, cfg)?;
                let pred = (0..moments.p)
                    .fold(moments.intercept(&beta), |acc, j| acc + beta[j] * ds.x.get(i, j));
                sq[g] = (pred - ds.y[i]).powi(2);
            }
            Ok(sq)
        })
        .collect::<Result<_>>()?;

    let mut best = path[0];
    let mut best_rmse = f64::INFINITY;
    for &g in &path {
        let mse = fold_errors.iter().map(|e| e[g]).sum::<f64>() / n as f64;
        let rmse = mse.sqrt();
        if rmse < best_rmse {
            best_rmse = rmse;
            best = g;
        }
    }
    Ok(grid[best])
}

/// Largest violation of the LASSO stationarity conditions, computed from
/// explicit residuals: `|g_j - lambda * sign(b_j)|` for active terms and
/// `max(0, |g_j| - lambda)` for inactive ones, with `g_j = (1/n) x_j' r`.
pub fn kkt_violation(ds: &Dataset, model: &FittedModel) -> Result<f64> {
    let lambda = model
        .lambda
        .ok_or_else(|| Error::InvalidParameter("model has no lambda".into()))?;
    let pred = super::predict(model, &ds.x)?;
    let resid: Vec<f64> = ds.y.iter().zip(&pred).map(|(y, p)| y - p).collect();
    let n = ds.n() as f64;
    // the intercept condition
    let mut worst = (resid.iter().sum::<f64>() / n).abs();
    for (term, b) in &model.coefficients {
        let col = ds
            .x
            .column_by_name(term)
            .ok_or_else(|| Error::MissingColumn(term.clone()))?;
        let g = col.iter().zip(&resid).map(|(x, r)| x * r).sum::<f64>() / n;
        let v = if *b != 0.0 {
            (g - lambda * b.signum()).abs()
        } else {
            (g.abs() - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    Ok(worst)
}
