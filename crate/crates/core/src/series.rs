//! Region-keyed series, z-scoring and Pearson correlation.
//!
//! Tolerances used across the crate: absolute [`NORMALIZED_TOL`] for
//! normalized quantities (z-scores, correlations) and relative
//! [`RELATIVE_TOL`] elsewhere.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Absolute tolerance for normalized quantities.
pub const NORMALIZED_TOL: f64 = 1e-9;
/// Relative tolerance for everything else.
pub const RELATIVE_TOL: f64 = 1e-9;

/// Scale applied to rates in the fertility tables (births per 1,000 women).
pub const PER_THOUSAND: f64 = 1000.0;

/// Divisor used for the standard deviation in z-scoring.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StdDivisor {
    /// `1/n`. Makes `pearson_r(a, b) == dot(z(a), z(b)) / n` exact.
    #[default]
    Population,
    /// `1/(n-1)`, for exports produced with the sample convention.
    Sample,
}

impl StdDivisor {
    fn denominator(self, n: usize) -> f64 {
        match self {
            StdDivisor::Population => n as f64,
            StdDivisor::Sample => (n - 1) as f64,
        }
    }
}

/// One real value per region, keyed by an opaque region code.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionSeries {
    name: String,
    values: BTreeMap<String, f64>,
}

impl RegionSeries {
    pub const MIN_REGIONS: usize = 3;

    pub fn new<I, K>(name: impl Into<String>, values: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, f64)>,
        K: Into<String>,
    {
        let name = name.into();
        let mut map = BTreeMap::new();
        for (region, value) in values {
            let region = region.into();
            if !value.is_finite() {
                return Err(Error::NonFinite { name, region });
            }
            if map.insert(region.clone(), value).is_some() {
                return Err(Error::DuplicateRegion(region));
            }
        }
        if map.len() < Self::MIN_REGIONS {
            return Err(Error::TooFewValues {
                name,
                got: map.len(),
                min: Self::MIN_REGIONS,
            });
        }
        Ok(Self { name, values: map })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &BTreeMap<String, f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, region: &str) -> Option<f64> {
        self.values.get(region).copied()
    }

    pub fn regions(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    /// Values laid out in `order`. The region sets must match exactly.
    pub fn aligned(&self, order: &[String]) -> Result<Vec<f64>> {
        check_same_regions(&self.name, self.values.keys(), order.iter())?;
        Ok(order.iter().map(|r| self.values[r]).collect())
    }
}

/// Fails with a [`Error::RegionMismatch`] listing the symmetric difference.
pub(crate) fn check_same_regions<'a, 'b>(
    context: &str,
    left: impl Iterator<Item = &'a String>,
    right: impl Iterator<Item = &'b String>,
) -> Result<()> {
    let left: std::collections::BTreeSet<&String> = left.collect();
    let right: std::collections::BTreeSet<&String> = right.collect();
    if left == right {
        return Ok(());
    }
    Err(Error::RegionMismatch {
        context: context.to_string(),
        only_left: left.difference(&right).map(|s| s.to_string()).collect(),
        only_right: right.difference(&left).map(|s| s.to_string()).collect(),
    })
}

/// Birth counts and female population (15-50) for one fertility category.
#[derive(Clone, Debug, PartialEq)]
pub struct FertilityVariable {
    pub name: String,
    /// Survey year, when the source file carries one.
    pub year: Option<i32>,
    pub births: BTreeMap<String, f64>,
    pub women_15_50: BTreeMap<String, f64>,
}

/// `scale * births[r] / women_15_50[r]` for every region with births.
pub fn fertility_intensity(v: &FertilityVariable, scale: f64) -> Result<RegionSeries> {
    let mut out = Vec::with_capacity(v.births.len());
    for (region, &births) in &v.births {
        if !births.is_finite() {
            return Err(Error::NonFinite {
                name: v.name.clone(),
                region: region.clone(),
            });
        }
        if births < 0.0 {
            return Err(Error::NegativeCount {
                name: v.name.clone(),
                region: region.clone(),
            });
        }
        let women = *v
            .women_15_50
            .get(region)
            .ok_or_else(|| Error::MissingDenominator {
                name: v.name.clone(),
                region: region.clone(),
            })?;
        if !women.is_finite() || women <= 0.0 {
            return Err(Error::ZeroDenominator {
                name: v.name.clone(),
                region: region.clone(),
            });
        }
        out.push((region.clone(), scale * births / women));
    }
    RegionSeries::new(v.name.clone(), out)
}

/// National intensity: total births over total women across all regions.
pub fn national_intensity(v: &FertilityVariable, scale: f64) -> Result<f64> {
    // validates every region the same way the regional version does
    let mut births_total = 0.0;
    let mut women_total = 0.0;
    for (region, &births) in &v.births {
        if !births.is_finite() || births < 0.0 {
            return Err(Error::NegativeCount {
                name: v.name.clone(),
                region: region.clone(),
            });
        }
        let women = *v
            .women_15_50
            .get(region)
            .ok_or_else(|| Error::MissingDenominator {
                name: v.name.clone(),
                region: region.clone(),
            })?;
        if women.is_nan() || women <= 0.0 {
            return Err(Error::ZeroDenominator {
                name: v.name.clone(),
                region: region.clone(),
            });
        }
        births_total += births;
        women_total += women;
    }
    if v.births.is_empty() {
        return Err(Error::Empty("national intensity needs at least one region"));
    }
    Ok(scale * births_total / women_total)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Standard deviation with the given divisor (two-pass).
pub fn std_dev(values: &[f64], divisor: StdDivisor) -> f64 {
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / divisor.denominator(values.len())).sqrt()
}

pub(crate) fn is_degenerate(std: f64, mean: f64) -> bool {
    std.is_nan() || std < 1e-12 * mean.abs().max(1.0)
}

/// `(x - mean) / std` with the population divisor.
pub fn zscore(values: &[f64]) -> Result<Vec<f64>> {
    zscore_with(values, StdDivisor::Population)
}

pub fn zscore_with(values: &[f64], divisor: StdDivisor) -> Result<Vec<f64>> {
    zscore_named("series", values, divisor)
}

pub(crate) fn zscore_named(name: &str, values: &[f64], divisor: StdDivisor) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::TooFewValues {
            name: name.to_string(),
            got: values.len(),
            min: 2,
        });
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            name: name.to_string(),
            region: format!("#{i}"),
        });
    }
    let m = mean(values);
    let s = std_dev(values, divisor);
    if is_degenerate(s, m) {
        return Err(Error::degenerate(name));
    }
    Ok(values.iter().map(|v| (v - m) / s).collect())
}

/// Product-moment correlation of two equal-length vectors, clamped to `[-1, 1]`.
pub fn pearson_r(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::TooFewValues {
            name: "pearson_r input".into(),
            got: a.len(),
            min: 2,
        });
    }
    let ma = mean(a);
    let mb = mean(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let n = a.len() as f64;
    if is_degenerate((saa / n).sqrt(), ma) {
        return Err(Error::degenerate("first pearson_r input"));
    }
    if is_degenerate((sbb / n).sqrt(), mb) {
        return Err(Error::degenerate("second pearson_r input"));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// A region-keyed series normalized to mean 0 and standard deviation 1.
#[derive(Clone, Debug, PartialEq)]
pub struct ZScoredSeries {
    name: String,
    values: BTreeMap<String, f64>,
}

impl ZScoredSeries {
    pub fn from_series(series: &RegionSeries) -> Result<Self> {
        Self::from_series_with(series, StdDivisor::Population)
    }

    pub fn from_series_with(series: &RegionSeries, divisor: StdDivisor) -> Result<Self> {
        let raw: Vec<f64> = series.values.values().copied().collect();
        let z = zscore_named(&series.name, &raw, divisor)?;
        Ok(Self {
            name: series.name.clone(),
            values: series.values.keys().cloned().zip(z).collect(),
        })
    }

    /// Wraps values that are already z-scored, checking mean and standard
    /// deviation against `tol`. Returns a description of the violation.
    pub fn from_normalized(
        name: impl Into<String>,
        values: BTreeMap<String, f64>,
        divisor: StdDivisor,
        tol: f64,
    ) -> std::result::Result<Self, String> {
        let v: Vec<f64> = values.values().copied().collect();
        if v.len() < 2 {
            return Err(format!("need at least 2 values, got {}", v.len()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err("non-finite value".into());
        }
        let m = mean(&v);
        let s = std_dev(&v, divisor);
        if m.abs() > tol || (s - 1.0).abs() > tol {
            return Err(format!(
                "not z-scored: mean {m:.6}, std {s:.6} (tolerance {tol:e})"
            ));
        }
        Ok(Self {
            name: name.into(),
            values,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &BTreeMap<String, f64> {
        &self.values
    }

    pub fn get(&self, region: &str) -> Option<f64> {
        self.values.get(region).copied()
    }

    pub fn aligned(&self, order: &[String]) -> Result<Vec<f64>> {
        check_same_regions(&self.name, self.values.keys(), order.iter())?;
        Ok(order.iter().map(|r| self.values[r]).collect())
    }
}
