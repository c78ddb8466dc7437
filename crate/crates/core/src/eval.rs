//! Leave-one-out evaluation, the r/RMSE/SMAPE metrics and model choice.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::regress::{
    fit_constant, fit_lasso, fit_ols, lambda_grid, predict, select_lambda, Dataset, Family,
    FittedModel, LassoConfig,
};
use crate::series::{mean, pearson_r, std_dev, StdDivisor};

fn check_pair(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::Empty("metric over zero predictions"));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let ss: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((ss / pred.len() as f64).sqrt())
}

/// Symmetric MAPE in percent, `100/n * sum |p - t| / (|p| + |t|)`, so the
/// range is `[0, 100]`. A `(0, 0)` pair contributes zero.
pub fn smape(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let total: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| {
            let denom = p.abs() + t.abs();
            if denom == 0.0 {
                0.0
            } else {
                (p - t).abs() / denom
            }
        })
        .sum();
    Ok(100.0 * total / pred.len() as f64)
}

/// Pearson r of predictions against truth; 0 when the predictions are
/// (numerically) constant or the truth is.
pub fn predictive_r_values(pred: &[f64], truth: &[f64]) -> f64 {
    let m = mean(pred);
    if pred.len() < 2 || std_dev(pred, StdDivisor::Population) < 1e-9 * m.abs().max(1.0) {
        return 0.0;
    }
    pearson_r(pred, truth).unwrap_or(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub r: f64,
    pub rmse: f64,
    pub smape_pct: f64,
}

impl Metrics {
    pub fn compute(pred: &[f64], truth: &[f64]) -> Result<Self> {
        Ok(Self {
            r: predictive_r_values(pred, truth),
            rmse: rmse(pred, truth)?,
            smape_pct: smape(pred, truth)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeldOut {
    pub region: String,
    pub truth: f64,
    pub prediction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    pub variable: String,
    pub family: Family,
    /// One entry per region, in design-matrix row order.
    pub held_out: Vec<HeldOut>,
    pub metrics: Metrics,
}

impl EvaluationReport {
    pub fn from_held_out(variable: String, family: Family, held_out: Vec<HeldOut>) -> Result<Self> {
        let (pred, truth) = split(&held_out);
        let metrics = Metrics::compute(&pred, &truth)?;
        Ok(Self {
            variable,
            family,
            held_out,
            metrics,
        })
    }

    pub fn predictions(&self) -> Vec<f64> {
        self.held_out.iter().map(|h| h.prediction).collect()
    }

    pub fn truths(&self) -> Vec<f64> {
        self.held_out.iter().map(|h| h.truth).collect()
    }

    pub fn recompute_metrics(&self) -> Result<Metrics> {
        let (pred, truth) = split(&self.held_out);
        Metrics::compute(&pred, &truth)
    }
}

fn split(held_out: &[HeldOut]) -> (Vec<f64>, Vec<f64>) {
    held_out.iter().map(|h| (h.prediction, h.truth)).unzip()
}

pub fn predictive_r(report: &EvaluationReport) -> f64 {
    let (pred, truth) = split(&report.held_out);
    predictive_r_values(&pred, &truth)
}

/// How the single-term model picks its term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SingleTermChoice {
    /// Best leave-one-out predictive r among the candidate columns.
    #[default]
    InnerCv,
    /// The first column, i.e. the most correlated selected term.
    TopRanked,
}

impl std::str::FromStr for SingleTermChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cv" | "inner-cv" => Ok(Self::InnerCv),
            "top" | "top-ranked" => Ok(Self::TopRanked),
            _ => Err(Error::InvalidParameter(format!("unknown single-term mode `{s}`"))),
        }
    }
}

/// A model family together with its tuning procedure.
#[derive(Clone, Debug, PartialEq)]
pub enum FamilySpec {
    Constant,
    OlsSingle(SingleTermChoice),
    OlsMulti,
    /// λ chosen by inner leave-one-out over a log grid.
    Lasso(LassoConfig),
}

impl FamilySpec {
    pub fn new(family: Family, single: SingleTermChoice, lasso: &LassoConfig) -> Self {
        match family {
            Family::Constant => Self::Constant,
            Family::OlsSingle => Self::OlsSingle(single),
            Family::OlsMulti => Self::OlsMulti,
            Family::Lasso => Self::Lasso(lasso.clone()),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            Self::Constant => Family::Constant,
            Self::OlsSingle(_) => Family::OlsSingle,
            Self::OlsMulti => Family::OlsMulti,
            Self::Lasso(_) => Family::Lasso,
        }
    }
}

/// Fits one family on the whole dataset, including its tuning step
/// (term choice for single-term OLS, λ selection for LASSO).
pub fn fit_family(ds: &Dataset, spec: &FamilySpec) -> Result<FittedModel> {
    let columns: Vec<&str> = ds.x.columns().iter().map(String::as_str).collect();
    let mut model = match spec {
        FamilySpec::Constant => fit_constant(ds),
        FamilySpec::OlsMulti => fit_ols(ds, &columns),
        FamilySpec::OlsSingle(choice) => {
            let Some(&first) = columns.first() else {
                return Err(Error::Empty("single-term model needs a candidate term"));
            };
            let term = match choice {
                SingleTermChoice::TopRanked => first,
                SingleTermChoice::InnerCv if columns.len() == 1 => first,
                SingleTermChoice::InnerCv => best_single_term(ds, &columns)?,
            };
            fit_ols(ds, &[term])
        }
        FamilySpec::Lasso(cfg) => {
            let grid = lambda_grid(ds, cfg.grid_size, cfg.grid_ratio);
            let lambda = select_lambda(ds, &grid, cfg)?;
            fit_lasso(ds, lambda, cfg)
        }
    }?;
    // an all-terms fit over a single column is still reported as all-terms
    model.family = spec.family();
    Ok(model)
}

fn best_single_term<'a>(ds: &Dataset, columns: &[&'a str]) -> Result<&'a str> {
    let mut best = columns[0];
    let mut best_r = f64::NEG_INFINITY;
    for &term in columns {
        let sub = ds.select_columns(&[term])?;
        let report = loocv(&sub, &FamilySpec::OlsSingle(SingleTermChoice::TopRanked))?;
        let r = predictive_r(&report);
        if r > best_r {
            best_r = r;
            best = term;
        }
    }
    Ok(best)
}

/// Fits `spec` on every region but one, predicts the held-out region, and
/// scores the concatenated held-out predictions.
pub fn loocv(ds: &Dataset, spec: &FamilySpec) -> Result<EvaluationReport> {
    let n = ds.n();
    if n < 3 {
        return Err(Error::TooFewValues {
            name: ds.variable.clone(),
            got: n,
            min: 3,
        });
    }
    let held_out: Vec<HeldOut> = (0..n)
        .into_par_iter()
        .map(|i| {
            let region = ds.x.rows()[i].clone();
            let fold = || -> Result<f64> {
                let model = fit_family(&ds.without_row(i), spec)?;
                Ok(predict(&model, &ds.x.select_rows(&[i]))?[0])
            };
            let prediction = fold().map_err(|e| Error::Fold {
                region: region.clone(),
                source: Box::new(e),
            })?;
            Ok(HeldOut {
                region,
                truth: ds.y[i],
                prediction,
            })
        })
        .collect::<Result<_>>()?;
    EvaluationReport::from_held_out(ds.variable.clone(), spec.family(), held_out)
}

fn preference(f: Family) -> u8 {
    match f {
        Family::Lasso => 3,
        Family::OlsMulti => 2,
        Family::OlsSingle => 1,
        Family::Constant => 0,
    }
}

/// Highest predictive r among the non-constant families; ties go to lower
/// RMSE, then to LASSO over all-terms over single-term.
pub fn choose_model(reports: &[EvaluationReport]) -> Result<Family> {
    reports
        .iter()
        .filter(|r| r.family != Family::Constant)
        .max_by(|a, b| {
            a.metrics
                .r
                .total_cmp(&b.metrics.r)
                .then_with(|| b.metrics.rmse.total_cmp(&a.metrics.rmse))
                .then_with(|| preference(a.family).cmp(&preference(b.family)))
        })
        .map(|r| r.family)
        .ok_or(Error::Empty("no non-constant model to choose from"))
}
