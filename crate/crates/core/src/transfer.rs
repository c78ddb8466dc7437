//! Applying a model trained across regions to national yearly data.
//!
//! Monthly national term volumes are summed per year and z-normalized per
//! term across the years, so each year plays the role a region played
//! during training. Only the shape of the resulting prediction across years
//! carries meaning; its absolute level does not. There is deliberately no
//! per-region temporal mode.

use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};
use crate::regress::FittedModel;
use crate::series::{national_intensity, pearson_r, zscore_named, FertilityVariable, StdDivisor};

/// National monthly search volume for one term.
#[derive(Clone, Debug, PartialEq)]
pub struct MonthlyTermVolume {
    term: String,
    samples: BTreeMap<(i32, u32), f64>,
}

impl MonthlyTermVolume {
    pub fn new<I>(term: impl Into<String>, samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = ((i32, u32), f64)>,
    {
        let term = term.into();
        let mut map = BTreeMap::new();
        for ((year, month), v) in samples {
            if !(1..=12).contains(&month) {
                return Err(Error::InvalidParameter(format!(
                    "term `{term}`: month {month} out of range"
                )));
            }
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "term `{term}`: invalid volume {v} for {year}-{month:02}"
                )));
            }
            if map.insert((year, month), v).is_some() {
                return Err(Error::InvalidParameter(format!(
                    "term `{term}`: duplicate sample for {year}-{month:02}"
                )));
            }
        }
        Ok(Self { term, samples: map })
    }

    pub fn term(&self) -> &str {
        &self.term
    }

    pub fn samples(&self) -> &BTreeMap<(i32, u32), f64> {
        &self.samples
    }

    fn year_total(&self, year: i32) -> Result<f64> {
        let mut missing = Vec::new();
        let mut total = 0.0;
        for month in 1..=12 {
            match self.samples.get(&(year, month)) {
                Some(v) => total += v,
                None => missing.push(month),
            }
        }
        if missing.len() == 12 {
            return Err(Error::MissingYear {
                term: self.term.clone(),
                year,
            });
        }
        if !missing.is_empty() {
            return Err(Error::IncompleteYear {
                term: self.term.clone(),
                year,
                missing,
            });
        }
        Ok(total)
    }
}

/// Sum of the twelve monthly volumes for every year present.
pub fn annualize(m: &MonthlyTermVolume) -> Result<BTreeMap<i32, f64>> {
    let years: std::collections::BTreeSet<i32> = m.samples.keys().map(|(y, _)| *y).collect();
    years
        .into_iter()
        .map(|y| Ok((y, m.year_total(y)?)))
        .collect()
}

/// Per-term yearly volumes, each term z-normalized across the years.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnualTermMatrix {
    pub years: Vec<i32>,
    pub terms: Vec<String>,
    /// `z_values[year][term]`
    pub z_values: Vec<Vec<f64>>,
}

impl AnnualTermMatrix {
    pub fn column(&self, term: &str) -> Option<Vec<f64>> {
        let j = self.terms.iter().position(|t| t == term)?;
        Some(self.z_values.iter().map(|row| row[j]).collect())
    }
}

pub fn build_annual_matrix(volumes: &[MonthlyTermVolume], years: &[i32]) -> Result<AnnualTermMatrix> {
    if years.len() < 2 {
        return Err(Error::TooFewValues {
            name: "years".into(),
            got: years.len(),
            min: 2,
        });
    }
    let mut seen = HashSet::new();
    let mut columns = Vec::with_capacity(volumes.len());
    for v in volumes {
        if !seen.insert(v.term.as_str()) {
            return Err(Error::DuplicateTerm(v.term.clone()));
        }
        let totals = years
            .iter()
            .map(|&y| v.year_total(y))
            .collect::<Result<Vec<_>>>()?;
        columns.push(zscore_named(&v.term, &totals, StdDivisor::Population)?);
    }
    let z_values = (0..years.len())
        .map(|t| columns.iter().map(|c| c[t]).collect())
        .collect();
    Ok(AnnualTermMatrix {
        years: years.to_vec(),
        terms: volumes.iter().map(|v| v.term.clone()).collect(),
        z_values,
    })
}

/// `intercept + sum(coef * z)` for each year.
pub fn apply_spatial_model(m: &FittedModel, a: &AnnualTermMatrix) -> Result<Vec<f64>> {
    let mut used = Vec::new();
    for (term, c) in &m.coefficients {
        if *c == 0.0 {
            continue;
        }
        let j = a
            .terms
            .iter()
            .position(|t| t == term)
            .ok_or_else(|| Error::MissingColumn(term.clone()))?;
        used.push((*c, j));
    }
    Ok(a.z_values
        .iter()
        .map(|row| used.iter().fold(m.intercept, |acc, (c, j)| acc + c * row[*j]))
        .collect())
}

pub fn trend_correlation(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    pearson_r(predicted, truth)
}

/// Divides by the maximum so the largest value is exactly 1.
pub fn rescale_max1(series: &[f64]) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::Empty("nothing to rescale"));
    }
    let max = series.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    if !max.is_finite() || max <= 0.0 {
        return Err(Error::NonPositiveMax { max });
    }
    Ok(series.iter().map(|v| v / max).collect())
}

/// National ground truth per year: total births over total women.
pub fn national_truth(
    variables: &[FertilityVariable],
    variable: &str,
    years: &[i32],
    scale: f64,
) -> Result<Vec<f64>> {
    years
        .iter()
        .map(|&y| {
            let v = variables
                .iter()
                .find(|v| v.name == variable && v.year == Some(y))
                .ok_or_else(|| {
                    Error::InvalidParameter(format!("no ground truth for `{variable}` in {y}"))
                })?;
            national_intensity(v, scale)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrendReport {
    pub variable: String,
    /// Ascending.
    pub years: Vec<i32>,
    pub predicted: Vec<f64>,
    pub truth: Vec<f64>,
    pub r: f64,
    /// `None` when the series has no positive maximum; the plot data then
    /// carries the raw series with a warning flag.
    pub predicted_rescaled: Option<Vec<f64>>,
    pub truth_rescaled: Option<Vec<f64>>,
}

/// Applies `model` across the years of `matrix` and correlates the
/// predicted trend with `truth` (same year order as the matrix).
pub fn trend_report(model: &FittedModel, matrix: &AnnualTermMatrix, truth: &[f64]) -> Result<TrendReport> {
    let predicted = apply_spatial_model(model, matrix)?;
    if truth.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    let r = trend_correlation(&predicted, truth)?;
    let mut order: Vec<usize> = (0..matrix.years.len()).collect();
    order.sort_by_key(|&i| matrix.years[i]);
    let years: Vec<i32> = order.iter().map(|&i| matrix.years[i]).collect();
    let predicted: Vec<f64> = order.iter().map(|&i| predicted[i]).collect();
    let truth: Vec<f64> = order.iter().map(|&i| truth[i]).collect();
    let rescaled = |s: &[f64], what: &str| match rescale_max1(s) {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("{}: {what} series emitted unscaled: {e}", model.variable);
            None
        }
    };
    Ok(TrendReport {
        variable: model.variable.clone(),
        predicted_rescaled: rescaled(&predicted, "predicted"),
        truth_rescaled: rescaled(&truth, "truth"),
        years,
        predicted,
        truth,
        r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regress::Family;
    use proptest::prelude::*;

    fn flat_year(term: &str, year: i32, v: f64) -> MonthlyTermVolume {
        MonthlyTermVolume::new(term, (1..=12).map(|m| ((year, m), v))).unwrap()
    }

    fn yearly(term: &str, totals: &[(i32, f64)]) -> MonthlyTermVolume {
        MonthlyTermVolume::new(
            term,
            totals
                .iter()
                .flat_map(|&(y, t)| (1..=12).map(move |m| ((y, m), t / 12.0))),
        )
        .unwrap()
    }

    fn model(intercept: f64, coefs: &[(&str, f64)]) -> FittedModel {
        FittedModel {
            family: Family::Lasso,
            variable: "Gen".into(),
            intercept,
            coefficients: coefs.iter().map(|(t, c)| (t.to_string(), *c)).collect(),
            lambda: Some(0.1),
        }
    }

    #[test]
    fn annualize_sums_months() {
        let out = annualize(&flat_year("t", 2012, 1.0)).unwrap();
        assert_eq!(out[&2012], 12.0);
    }

    #[test]
    fn annualize_reports_missing_months() {
        let m = MonthlyTermVolume::new(
            "t",
            (1..=12).filter(|&m| m != 3).map(|m| ((2013, m), 1.0)),
        )
        .unwrap();
        match annualize(&m) {
            Err(Error::IncompleteYear { year, missing, .. }) => {
                assert_eq!(year, 2013);
                assert_eq!(missing, vec![3]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn monthly_validation() {
        assert!(MonthlyTermVolume::new("t", [((2010, 13), 1.0)]).is_err());
        assert!(MonthlyTermVolume::new("t", [((2010, 1), -1.0)]).is_err());
        assert!(MonthlyTermVolume::new("t", [((2010, 1), 1.0), ((2010, 1), 2.0)]).is_err());
    }

    #[test]
    fn annual_matrix_zscores_each_term() {
        let v = yearly("t", &[(2010, 10.0), (2011, 20.0), (2012, 30.0)]);
        let a = build_annual_matrix(&[v], &[2010, 2011, 2012]).unwrap();
        let col = a.column("t").unwrap();
        let e = 1.5f64.sqrt();
        assert!((col[0] + e).abs() < 1e-12 && col[1].abs() < 1e-12 && (col[2] - e).abs() < 1e-12);

        let flat = yearly("f", &[(2010, 5.0), (2011, 5.0)]);
        assert!(matches!(
            build_annual_matrix(&[flat], &[2010, 2011]),
            Err(Error::Degenerate { name }) if name == "f"
        ));
        let short = yearly("s", &[(2010, 5.0), (2011, 6.0)]);
        assert!(matches!(
            build_annual_matrix(&[short], &[2010, 2011, 2012]),
            Err(Error::MissingYear { year: 2012, .. })
        ));
    }

    #[test]
    fn scaling_monthly_volumes_leaves_column_unchanged() {
        let v = yearly("t", &[(2010, 3.0), (2011, 7.0), (2012, 4.0)]);
        let scaled = MonthlyTermVolume::new("t", v.samples().iter().map(|(k, x)| (*k, x * 100.0))).unwrap();
        let years = [2010, 2011, 2012];
        let a = build_annual_matrix(&[v], &years).unwrap();
        let b = build_annual_matrix(&[scaled], &years).unwrap();
        for (p, q) in a.column("t").unwrap().iter().zip(b.column("t").unwrap()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn apply_model_examples() {
        let a = AnnualTermMatrix {
            years: vec![2010, 2011, 2012],
            terms: vec!["a".into(), "b".into()],
            z_values: vec![vec![-1.0, 0.5], vec![0.0, 1.0], vec![1.0, -1.5]],
        };
        assert_eq!(apply_spatial_model(&model(54.0, &[("a", 0.0)]), &a).unwrap(), vec![54.0; 3]);
        assert_eq!(
            apply_spatial_model(&model(0.0, &[("a", 1.0)]), &a).unwrap(),
            a.column("a").unwrap()
        );
        let two = apply_spatial_model(&model(2.0, &[("a", 3.0), ("b", -2.0)]), &a).unwrap();
        assert_eq!(two, vec![2.0 - 3.0 - 1.0, 2.0 + 0.0 - 2.0, 2.0 + 3.0 + 3.0]);
        assert!(matches!(
            apply_spatial_model(&model(0.0, &[("zzz", 1.0)]), &a),
            Err(Error::MissingColumn(_))
        ));
    }

    #[test]
    fn rescale_examples() {
        assert_eq!(rescale_max1(&[2.0, 4.0, 8.0]).unwrap(), vec![0.25, 0.5, 1.0]);
        assert_eq!(rescale_max1(&[1.0]).unwrap(), vec![1.0]);
        assert!(matches!(rescale_max1(&[-1.0, 0.0]), Err(Error::NonPositiveMax { .. })));
    }

    #[test]
    fn trend_identity_correlates_perfectly() {
        let t = [54.0, 53.1, 52.0, 51.7];
        assert!((trend_correlation(&t, &t).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trend_report_sorts_years_ascending() {
        let a = AnnualTermMatrix {
            years: vec![2012, 2010, 2011],
            terms: vec!["a".into()],
            z_values: vec![vec![1.0], vec![-1.0], vec![0.0]],
        };
        let rep = trend_report(&model(10.0, &[("a", 1.0)]), &a, &[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(rep.years, vec![2010, 2011, 2012]);
        assert_eq!(rep.predicted, vec![9.0, 10.0, 11.0]);
        assert_eq!(rep.truth, vec![1.0, 2.0, 3.0]);
        assert!((rep.r - 1.0).abs() < 1e-12);
        assert_eq!(rep.predicted_rescaled.unwrap()[2], 1.0);

        let neg = trend_report(&model(-10.0, &[("a", 1.0)]), &a, &[3.0, 1.0, 2.0]).unwrap();
        assert!(neg.predicted_rescaled.is_none());
    }

    proptest! {
        #[test]
        fn rescaled_max_is_exactly_one(v in prop::collection::vec(0.001f64..1e6, 1..20)) {
            let out = rescale_max1(&v).unwrap();
            prop_assert_eq!(out.iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x)), 1.0);
        }

        #[test]
        fn trend_r_affine_invariant(
            p in prop::collection::vec(-10.0f64..10.0, 6),
            t in prop::collection::vec(40.0f64..60.0, 6),
            a in 0.01f64..100.0,
            b in -100.0f64..100.0,
        ) {
            prop_assume!(crate::series::std_dev(&p, StdDivisor::Population) > 1e-3);
            prop_assume!(crate::series::std_dev(&t, StdDivisor::Population) > 1e-3);
            let r = trend_correlation(&p, &t).unwrap();
            let moved: Vec<f64> = p.iter().map(|x| a * x + b).collect();
            let moved_t: Vec<f64> = t.iter().map(|x| a * x + b).collect();
            prop_assert!((trend_correlation(&moved, &t).unwrap() - r).abs() < 1e-9);
            prop_assert!((trend_correlation(&p, &moved_t).unwrap() - r).abs() < 1e-9);
        }

        #[test]
        fn annual_columns_are_normalized(totals in prop::collection::vec(0.0f64..1e4, 2..10)) {
            let years: Vec<i32> = (0..totals.len() as i32).map(|i| 2000 + i).collect();
            prop_assume!(crate::series::std_dev(&totals, StdDivisor::Population) > 1e-3);
            let v = yearly("t", &years.iter().copied().zip(totals.iter().copied()).collect::<Vec<_>>());
            let a = build_annual_matrix(&[v], &years).unwrap();
            let col = a.column("t").unwrap();
            prop_assert!(crate::series::mean(&col).abs() < 1e-9);
            prop_assert!((crate::series::std_dev(&col, StdDivisor::Population) - 1.0).abs() < 1e-9);
        }
    }
}
