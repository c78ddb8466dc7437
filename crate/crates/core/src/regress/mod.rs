//! The four model families: constant baseline, single-term OLS, all-terms
//! OLS with intercept, and LASSO by coordinate descent.

mod design;
pub mod lasso;
pub mod ols;

use std::fmt;
use std::str::FromStr;

pub use design::{Dataset, DesignMatrix};
pub use lasso::{
    fit_lasso, fit_lasso_warm, kkt_violation, lambda_grid, lambda_max, select_lambda,
    soft_threshold, LassoConfig,
};
pub use ols::fit_ols;

use crate::error::{Error, Result};
use crate::series::RegionSeries;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Constant,
    OlsSingle,
    OlsMulti,
    Lasso,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Constant,
        Family::OlsSingle,
        Family::OlsMulti,
        Family::Lasso,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Constant => "constant",
            Family::OlsSingle => "ols-single",
            Family::OlsMulti => "ols-multi",
            Family::Lasso => "lasso",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown model family `{s}`")))
    }
}

/// Intercept plus named slopes.
///
/// LASSO models keep every candidate term, with exact zeros for the
/// terms the penalty removed; OLS models list only the terms they used.
#[derive(Clone, Debug, PartialEq)]
pub struct FittedModel {
    pub family: Family,
    pub variable: String,
    pub intercept: f64,
    pub coefficients: Vec<(String, f64)>,
    pub lambda: Option<f64>,
}

impl FittedModel {
    pub fn active_terms(&self) -> Vec<&str> {
        self.coefficients
            .iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(t, _)| t.as_str())
            .collect()
    }

    /// Candidate terms with an exactly zero coefficient.
    pub fn removed_terms(&self) -> Vec<&str> {
        self.coefficients
            .iter()
            .filter(|(_, c)| *c == 0.0)
            .map(|(t, _)| t.as_str())
            .collect()
    }

    pub fn coefficient(&self, term: &str) -> Option<f64> {
        self.coefficients
            .iter()
            .find(|(t, _)| t == term)
            .map(|(_, c)| *c)
    }

    /// Flat `key=value` text, one coefficient per line. Numbers use the
    /// shortest representation that round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("family={}\n", self.family));
        out.push_str(&format!("variable={}\n", self.variable));
        out.push_str(&format!("intercept={}\n", self.intercept));
        if let Some(l) = self.lambda {
            out.push_str(&format!("lambda={l}\n"));
        }
        for (term, c) in &self.coefficients {
            out.push_str(&format!("coef:{term}={c}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::InvalidParameter(format!("model line {line}: {msg}"));
        let mut family = None;
        let mut variable = String::new();
        let mut intercept = None;
        let mut lambda = None;
        let mut coefficients = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            // the value is numeric, so the last '=' separates it even when
            // a term contains one
            let (key, value) = if line.starts_with("coef:") {
                line.rsplit_once('=')
            } else {
                line.split_once('=')
            }
            .ok_or_else(|| bad(i + 1, format!("expected key=value, got `{line}`")))?;
            let num = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| bad(i + 1, format!("bad number `{v}`")))
            };
            match key {
                "family" => family = Some(value.trim().parse::<Family>()?),
                "variable" => variable = value.to_string(),
                "intercept" => intercept = Some(num(value)?),
                "lambda" => lambda = Some(num(value)?),
                k => match k.strip_prefix("coef:") {
                    Some(term) => coefficients.push((term.to_string(), num(value)?)),
                    None => return Err(bad(i + 1, format!("unknown key `{k}`"))),
                },
            }
        }
        Ok(Self {
            family: family.ok_or_else(|| bad(0, "missing family".into()))?,
            variable,
            intercept: intercept.ok_or_else(|| bad(0, "missing intercept".into()))?,
            coefficients,
            lambda,
        })
    }
}

/// The state-wide average as a constant prediction.
pub fn fit_constant(ds: &Dataset) -> Result<FittedModel> {
    if ds.y.is_empty() {
        return Err(Error::Empty("constant model needs at least one value"));
    }
    Ok(FittedModel {
        family: Family::Constant,
        variable: ds.variable.clone(),
        intercept: crate::series::mean(&ds.y),
        coefficients: Vec::new(),
        lambda: None,
    })
}

/// `intercept + sum(coef * x)` for every row of `x`, looking columns up by
/// name. Terms with a zero coefficient may be absent from `x`.
pub fn predict(model: &FittedModel, x: &DesignMatrix) -> Result<Vec<f64>> {
    let mut used: Vec<(f64, &[f64])> = Vec::new();
    for (term, c) in &model.coefficients {
        if *c == 0.0 {
            continue;
        }
        let col = x
            .column_by_name(term)
            .ok_or_else(|| Error::MissingColumn(term.clone()))?;
        used.push((*c, col));
    }
    Ok((0..x.n_rows())
        .map(|i| {
            used.iter()
                .fold(model.intercept, |acc, (c, col)| acc + c * col[i])
        })
        .collect())
}

/// Predictions keyed by region.
pub fn predict_series(model: &FittedModel, x: &DesignMatrix) -> Result<RegionSeries> {
    let values = predict(model, x)?;
    RegionSeries::new(
        model.variable.clone(),
        x.rows().iter().cloned().zip(values),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn ds(y: &[f64]) -> Dataset {
        let rows: Vec<String> = (0..y.len()).map(|i| format!("R{i}")).collect();
        Dataset::from_parts("y", DesignMatrix::new(rows, vec![], vec![]).unwrap(), y.to_vec()).unwrap()
    }

    #[test]
    fn constant_fit_examples() {
        assert_eq!(fit_constant(&ds(&[1.0, 3.0])).unwrap().intercept, 2.0);
        assert_eq!(fit_constant(&ds(&[5.0])).unwrap().intercept, 5.0);
        let data = ds(&[1.0, 2.0, 6.0]);
        let m = fit_constant(&data).unwrap();
        assert!(m.coefficients.is_empty());
        let pred = predict(&m, &data.x).unwrap();
        assert_eq!(pred, vec![3.0; 3]);
        let resid: Vec<f64> = data.y.iter().zip(&pred).map(|(y, p)| y - p).collect();
        assert_eq!(resid, vec![-2.0, -1.0, 3.0]);
    }

    #[test]
    fn predict_uses_names_not_positions() {
        let x = DesignMatrix::new(
            names(&["A", "B"]),
            names(&["a", "b"]),
            vec![vec![1.0, 2.0], vec![10.0, 20.0]],
        )
        .unwrap();
        let swapped = x.select_columns(&["b", "a"]).unwrap();
        let m = FittedModel {
            family: Family::OlsMulti,
            variable: "v".into(),
            intercept: 0.5,
            coefficients: vec![("a".into(), 2.0), ("b".into(), -1.0)],
            lambda: None,
        };
        assert_eq!(predict(&m, &x).unwrap(), predict(&m, &swapped).unwrap());
        assert_eq!(predict(&m, &x).unwrap(), vec![0.5 + 2.0 - 10.0, 0.5 + 4.0 - 20.0]);

        let zero = FittedModel {
            coefficients: vec![("a".into(), 0.0), ("gone".into(), 0.0)],
            intercept: 3.0,
            ..m.clone()
        };
        assert_eq!(predict(&zero, &x).unwrap(), vec![3.0, 3.0]);

        let missing = FittedModel {
            coefficients: vec![("gone".into(), 1.0)],
            ..m
        };
        assert!(matches!(predict(&missing, &x), Err(Error::MissingColumn(_))));
    }

    #[test]
    fn model_text_round_trip() {
        let m = FittedModel {
            family: Family::Lasso,
            variable: "Gen".into(),
            intercept: 54.123456789012345,
            coefficients: vec![
                ("pregnancy workout".into(), 1.0 / 3.0),
                ("odd=term".into(), 0.0),
                ("tiny".into(), -1.5e-300),
            ],
            lambda: Some(0.012),
        };
        let back = FittedModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert!(FittedModel::from_text("family=nope\nintercept=1\n").is_err());
        assert!(FittedModel::from_text("family=lasso\n").is_err());
    }

    #[test]
    fn family_names() {
        for f in Family::ALL {
            assert_eq!(f.as_str().parse::<Family>().unwrap(), f);
        }
    }
}
