//! CSV readers and writers. All files are UTF-8, comma-separated, with a
//! header row; LF and CRLF line endings are both accepted.
//!
//! | file            | header                                              |
//! |-----------------|-----------------------------------------------------|
//! | ground truth    | `[year,]region,variable,births,women_15_50`         |
//! | raw corpus      | `term,<region>...`                                  |
//! | ranked terms    | `term,r,<region>...` (z-scores, the export shape)   |
//! | monthly trends  | `month,term,volume` with `month` as `YYYY-MM`       |
//! | selected terms  | `term,r`                                            |
//! | evaluation      | `variable,family,r,rmse,smape_pct,detail`           |
//! | trend summary   | `variable,r,predicted_rescaled,truth_rescaled`      |
//! | plot data       | `year,predicted,truth,predicted_rescaled,truth_rescaled` |
//! | sparsification  | `term,coefficient,removed`                          |
//! | dropped         | `variable,reason`                                   |

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::correlate::{Lexicon, RankedTerm};
use crate::error::{Error, Result};
use crate::eval::EvaluationReport;
use crate::regress::FittedModel;
use crate::series::{pearson_r, FertilityVariable, RegionSeries, StdDivisor, ZScoredSeries};
use crate::transfer::{MonthlyTermVolume, TrendReport};

/// Rows of an exported z-score file must be normalized to this tolerance.
pub const EXPORT_ZSCORE_TOL: f64 = 1e-3;

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?)
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?)
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn parse_f64(path: &Path, line: u64, field: &str, what: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| Error::parse(path, line, format!("bad {what} `{field}`")))?;
    if !v.is_finite() {
        return Err(Error::parse(path, line, format!("non-finite {what}")));
    }
    Ok(v)
}

fn expect_header(path: &Path, got: &csv::StringRecord, want: &[&str]) -> Result<()> {
    let got: Vec<&str> = got.iter().collect();
    if got != want {
        return Err(Error::parse(
            path,
            1,
            format!("expected header `{}`, got `{}`", want.join(","), got.join(",")),
        ));
    }
    Ok(())
}

fn check_width(path: &Path, rec: &csv::StringRecord, width: usize) -> Result<()> {
    if rec.len() != width {
        return Err(Error::parse(
            path,
            line_of(rec),
            format!("expected {width} fields, got {}", rec.len()),
        ));
    }
    Ok(())
}

/// Reads birth counts and female population per `(region, variable)`,
/// optionally per year. One [`FertilityVariable`] per `(variable, year)`,
/// in order of first appearance.
pub fn read_ground_truth(path: &Path) -> Result<Vec<FertilityVariable>> {
    let mut rdr = reader(path)?;
    let header = rdr.headers()?.clone();
    let with_year = header.get(0) == Some("year");
    if with_year {
        expect_header(path, &header, &["year", "region", "variable", "births", "women_15_50"])?;
    } else {
        expect_header(path, &header, &["region", "variable", "births", "women_15_50"])?;
    }
    let offset = usize::from(with_year);
    let mut out: Vec<FertilityVariable> = Vec::new();
    let mut index: HashMap<(String, Option<i32>), usize> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        check_width(path, &rec, 4 + offset)?;
        let year = if with_year {
            Some(
                rec[0]
                    .parse::<i32>()
                    .map_err(|_| Error::parse(path, line, format!("bad year `{}`", &rec[0])))?,
            )
        } else {
            None
        };
        let region = rec[offset].to_string();
        let variable = rec[offset + 1].to_string();
        if region.is_empty() || variable.is_empty() {
            return Err(Error::parse(path, line, "empty region or variable"));
        }
        let births = parse_f64(path, line, &rec[offset + 2], "births")?;
        let women = parse_f64(path, line, &rec[offset + 3], "women_15_50")?;
        if births < 0.0 || women < 0.0 {
            return Err(Error::parse(path, line, "negative count"));
        }
        let slot = *index.entry((variable.clone(), year)).or_insert_with(|| {
            out.push(FertilityVariable {
                name: variable.clone(),
                year,
                births: BTreeMap::new(),
                women_15_50: BTreeMap::new(),
            });
            out.len() - 1
        });
        let v = &mut out[slot];
        if v.births.insert(region.clone(), births).is_some() {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate record for ({region}, {variable})"),
            ));
        }
        v.women_15_50.insert(region, women);
    }
    if out.is_empty() {
        log::warn!("{}: no ground-truth records", path.display());
    }
    Ok(out)
}

pub fn write_ground_truth(path: &Path, variables: &[FertilityVariable]) -> Result<()> {
    let with_year = variables.iter().any(|v| v.year.is_some());
    let mut w = writer(path)?;
    if with_year {
        w.write_record(["year", "region", "variable", "births", "women_15_50"])?;
    } else {
        w.write_record(["region", "variable", "births", "women_15_50"])?;
    }
    for v in variables {
        for (region, births) in &v.births {
            let women = v.women_15_50.get(region).copied().unwrap_or(0.0);
            let mut rec = Vec::with_capacity(5);
            if with_year {
                rec.push(v.year.map(|y| y.to_string()).unwrap_or_default());
            }
            rec.extend([region.clone(), v.name.clone(), births.to_string(), women.to_string()]);
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Raw per-region term intensities, one row per term.
pub fn read_corpus(path: &Path) -> Result<Vec<(String, RegionSeries)>> {
    let mut rdr = reader(path)?;
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("term") || header.len() < 2 {
        return Err(Error::parse(path, 1, "expected header `term,<region>...`"));
    }
    let regions: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        check_width(path, &rec, regions.len() + 1)?;
        let values = regions
            .iter()
            .zip(rec.iter().skip(1))
            .map(|(r, f)| Ok((r.clone(), parse_f64(path, line, f, "intensity")?)))
            .collect::<Result<Vec<_>>>()?;
        let series = RegionSeries::new(&rec[0], values)
            .map_err(|e| Error::parse(path, line, e.to_string()))?;
        out.push((rec[0].to_string(), series));
    }
    Ok(out)
}

pub fn write_corpus(path: &Path, entries: &[(String, RegionSeries)]) -> Result<()> {
    let mut w = writer(path)?;
    let Some((_, first)) = entries.first() else {
        w.write_record(["term"])?;
        w.flush()?;
        return Ok(());
    };
    let regions: Vec<String> = first.regions().map(str::to_string).collect();
    w.write_record(std::iter::once("term").chain(regions.iter().map(String::as_str)))?;
    for (term, s) in entries {
        let vals = s.aligned(&regions)?;
        w.write_record(std::iter::once(term.clone()).chain(vals.iter().map(f64::to_string)))?;
    }
    w.flush()?;
    Ok(())
}

/// One accepted row of a ranked-term export.
#[derive(Clone, Debug, PartialEq)]
pub struct ExportRow {
    pub term: String,
    /// Correlation as stored in the file.
    pub r: f64,
    pub z: ZScoredSeries,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rejection {
    pub line: u64,
    pub term: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelateExport {
    pub regions: Vec<String>,
    pub rows: Vec<ExportRow>,
    pub rejected: Vec<Rejection>,
}

impl CorrelateExport {
    /// Accepted rows as ranked terms, using the stored correlations.
    pub fn ranked(&self) -> Vec<RankedTerm> {
        self.rows
            .iter()
            .map(|row| RankedTerm {
                term: row.term.clone(),
                r: row.r,
                z_series: row.z.clone(),
            })
            .collect()
    }

    pub fn check_regions<'a>(&self, truth_regions: impl Iterator<Item = &'a str>) -> Result<()> {
        let truth: Vec<String> = truth_regions.map(str::to_string).collect();
        crate::series::check_same_regions("export header vs ground truth", self.regions.iter(), truth.iter())
    }

    /// Rows whose stored r differs from the recomputed correlation with
    /// `target` by more than `tol`: `(term, stored, recomputed)`.
    pub fn cross_check(&self, target: &RegionSeries, tol: f64) -> Result<Vec<(String, f64, f64)>> {
        let t = target.aligned(&self.regions)?;
        let mut bad = Vec::new();
        for row in &self.rows {
            let z = row.z.aligned(&self.regions)?;
            let r = pearson_r(&t, &z)?;
            if (r - row.r).abs() > tol {
                bad.push((row.term.clone(), row.r, r));
            }
        }
        Ok(bad)
    }
}

/// Reads a `term,r,<region>...` file of z-scored series. Rows that are not
/// z-scored to [`EXPORT_ZSCORE_TOL`] under `divisor` are rejected and
/// listed rather than failing the whole file.
pub fn read_correlate_export(path: &Path, divisor: StdDivisor) -> Result<CorrelateExport> {
    let mut rdr = reader(path)?;
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("term") || header.get(1) != Some("r") || header.len() < 4 {
        return Err(Error::parse(path, 1, "expected header `term,r,<region>...`"));
    }
    let regions: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let mut seen = HashSet::new();
    for r in &regions {
        if !seen.insert(r.as_str()) {
            return Err(Error::parse(path, 1, format!("duplicate region `{r}`")));
        }
    }
    let mut rows = Vec::new();
    let mut rejected = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        check_width(path, &rec, regions.len() + 2)?;
        let term = rec[0].to_string();
        let r = parse_f64(path, line, &rec[1], "r")?;
        let values = regions
            .iter()
            .zip(rec.iter().skip(2))
            .map(|(reg, f)| Ok((reg.clone(), parse_f64(path, line, f, "z-score")?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        match ZScoredSeries::from_normalized(term.clone(), values, divisor, EXPORT_ZSCORE_TOL) {
            Ok(z) => rows.push(ExportRow { term, r, z }),
            Err(reason) => {
                log::warn!("{}:{line}: rejected `{term}`: {reason}", path.display());
                rejected.push(Rejection { line, term, reason });
            }
        }
    }
    Ok(CorrelateExport {
        regions,
        rows,
        rejected,
    })
}

pub fn write_ranked(path: &Path, ranked: &[RankedTerm]) -> Result<()> {
    let mut w = writer(path)?;
    let regions: Vec<String> = ranked
        .first()
        .map(|t| t.z_series.values().keys().cloned().collect())
        .unwrap_or_default();
    w.write_record(["term", "r"].into_iter().chain(regions.iter().map(String::as_str)))?;
    for t in ranked {
        let z = t.z_series.aligned(&regions)?;
        w.write_record(
            [t.term.clone(), t.r.to_string()]
                .into_iter()
                .chain(z.iter().map(f64::to_string)),
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_selected(path: &Path, selected: &[RankedTerm]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["term", "r"])?;
    for t in selected {
        w.write_record([t.term.clone(), t.r.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Term names from a `term,r` file, in file order.
pub fn read_selected(path: &Path) -> Result<Vec<(String, f64)>> {
    let mut rdr = reader(path)?;
    expect_header(path, &rdr.headers()?.clone(), &["term", "r"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        check_width(path, &rec, 2)?;
        out.push((rec[0].to_string(), parse_f64(path, line_of(&rec), &rec[1], "r")?));
    }
    Ok(out)
}

/// Monthly national volumes grouped per term, in order of first appearance.
pub fn read_trends_monthly(path: &Path) -> Result<Vec<MonthlyTermVolume>> {
    let mut rdr = reader(path)?;
    expect_header(path, &rdr.headers()?.clone(), &["month", "term", "volume"])?;
    let mut order: Vec<String> = Vec::new();
    let mut samples: HashMap<String, BTreeMap<(i32, u32), f64>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        check_width(path, &rec, 3)?;
        let (year, month) = parse_month(&rec[0])
            .ok_or_else(|| Error::parse(path, line, format!("bad month `{}` (want YYYY-MM)", &rec[0])))?;
        let term = rec[1].to_string();
        let volume = parse_f64(path, line, &rec[2], "volume")?;
        if volume < 0.0 {
            return Err(Error::parse(path, line, format!("negative volume {volume}")));
        }
        let entry = samples.entry(term.clone()).or_insert_with(|| {
            order.push(term.clone());
            BTreeMap::new()
        });
        if entry.insert((year, month), volume).is_some() {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate sample for `{term}` in {}", &rec[0]),
            ));
        }
    }
    order
        .into_iter()
        .map(|term| {
            let s = samples.remove(&term).unwrap_or_default();
            MonthlyTermVolume::new(term, s)
        })
        .collect()
}

fn parse_month(s: &str) -> Option<(i32, u32)> {
    let (y, m) = s.split_once('-')?;
    if y.len() != 4 || m.len() != 2 {
        return None;
    }
    let year: i32 = y.parse().ok()?;
    let month: u32 = m.parse().ok()?;
    (1..=12).contains(&month).then_some((year, month))
}

pub fn write_trends_monthly(path: &Path, volumes: &[MonthlyTermVolume]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["month", "term", "volume"])?;
    for v in volumes {
        for ((year, month), x) in v.samples() {
            w.write_record([format!("{year:04}-{month:02}"), v.term().to_string(), x.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_lexicon(path: &Path) -> Result<Lexicon> {
    Ok(Lexicon::parse(&std::fs::read_to_string(path)?))
}

/// One row of the evaluation table.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationRow<'a> {
    pub report: &'a EvaluationReport,
    /// Free-form note: chosen single term, selected λ.
    pub detail: String,
}

pub fn write_evaluation(path: &Path, rows: &[EvaluationRow<'_>]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["variable", "family", "r", "rmse", "smape_pct", "detail"])?;
    for row in rows {
        let m = &row.report.metrics;
        w.write_record([
            row.report.variable.clone(),
            row.report.family.to_string(),
            m.r.to_string(),
            m.rmse.to_string(),
            m.smape_pct.to_string(),
            row.detail.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_model(path: &Path, model: &FittedModel) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut f = File::create(path)?;
    f.write_all(model.to_text().as_bytes())?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<FittedModel> {
    FittedModel::from_text(&std::fs::read_to_string(path)?)
}

pub fn write_trend_summary(path: &Path, reports: &[TrendReport]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["variable", "r", "predicted_rescaled", "truth_rescaled"])?;
    for t in reports {
        w.write_record([
            t.variable.clone(),
            t.r.to_string(),
            t.predicted_rescaled.is_some().to_string(),
            t.truth_rescaled.is_some().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Year-by-year plot data. A series that could not be rescaled is written
/// unscaled; the trend summary flags it.
pub fn write_plot_data(path: &Path, t: &TrendReport) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["year", "predicted", "truth", "predicted_rescaled", "truth_rescaled"])?;
    let pr = t.predicted_rescaled.as_ref().unwrap_or(&t.predicted);
    let tr = t.truth_rescaled.as_ref().unwrap_or(&t.truth);
    for i in 0..t.years.len() {
        w.write_record([
            t.years[i].to_string(),
            t.predicted[i].to_string(),
            t.truth[i].to_string(),
            pr[i].to_string(),
            tr[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Every candidate term of a LASSO fit with its coefficient; `removed`
/// marks the terms the penalty set to exactly zero.
pub fn write_sparsification(path: &Path, model: &FittedModel) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["term", "coefficient", "removed"])?;
    for (term, coef) in &model.coefficients {
        w.write_record([term.clone(), coef.to_string(), (*coef == 0.0).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dropped(path: &Path, dropped: &[(String, String)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["variable", "reason"])?;
    for (variable, reason) in dropped {
        w.write_record([variable, reason])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn ground_truth_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "gt.csv",
            "region,variable,births,women_15_50\r\nUS-NY,Gen,54,1000\r\nUS-CA,Gen,60,1000\r\nUS-NY,Teen,3,1000\r\n",
        );
        let vars = read_ground_truth(&p).unwrap();
        assert_eq!(vars.len(), 2);
        assert_eq!(vars[0].name, "Gen");
        assert_eq!(vars[0].births.len(), 2);
        assert_eq!(vars[1].women_15_50["US-NY"], 1000.0);
        assert_eq!(vars[0].year, None);
    }

    #[test]
    fn ground_truth_duplicate_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "gt.csv",
            "region,variable,births,women_15_50\nUS-NY,Gen,54,1000\nUS-CA,Gen,60,1000\nUS-NY,Gen,1,2\n",
        );
        match read_ground_truth(&p) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 4);
                assert!(message.contains("duplicate"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ground_truth_malformed_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "bad.csv", "region,variable,births,women_15_50\nA,Gen,x,1\n");
        assert!(matches!(read_ground_truth(&p), Err(Error::Parse { line: 2, .. })));
        let p = write(&dir, "short.csv", "region,variable,births,women_15_50\nA,Gen,1\n");
        assert!(matches!(read_ground_truth(&p), Err(Error::Parse { line: 2, .. })));
        let p = write(&dir, "empty.csv", "region,variable,births,women_15_50\n");
        assert!(read_ground_truth(&p).unwrap().is_empty());
    }

    #[test]
    fn trends_parsing_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "t.csv", "month,term,volume\n2013-13,a,1\n");
        assert!(matches!(read_trends_monthly(&p), Err(Error::Parse { line: 2, .. })));
        let p = write(&dir, "t.csv", "month,term,volume\n2013-01,a,1\n2013-01,a,2\n");
        assert!(matches!(read_trends_monthly(&p), Err(Error::Parse { line: 3, .. })));
        let p = write(&dir, "t.csv", "month,term,volume\n2013-01,a,-1\n");
        assert!(matches!(read_trends_monthly(&p), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn trends_grouped_per_term() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("month,term,volume\n");
        for y in 2010..2016 {
            for m in 1..=12 {
                body.push_str(&format!("{y}-{m:02},increase breast milk,{}\n", y - 2000 + m));
            }
        }
        let p = write(&dir, "t.csv", &body);
        let v = read_trends_monthly(&p).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].samples().len(), 72);
        assert!(crate::transfer::annualize(&v[0]).unwrap().len() == 6);
    }

    #[test]
    fn export_rejects_unnormalized_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "e.csv",
            "term,r,A,B,C,D\npregnancy workout,0.88,-1,-1,1,1\nshifted,0.5,0,0,2,2\n",
        );
        let e = read_correlate_export(&p, StdDivisor::Population).unwrap();
        assert_eq!(e.rows.len(), 1);
        assert_eq!(e.rows[0].r, 0.88);
        assert_eq!(e.rejected.len(), 1);
        assert_eq!(e.rejected[0].line, 3);
        assert_eq!(e.rejected[0].term, "shifted");

        match e.check_regions(["A", "B", "C", "E"].into_iter()) {
            Err(Error::RegionMismatch {
                only_left,
                only_right,
                ..
            }) => {
                assert_eq!(only_left, vec!["D"]);
                assert_eq!(only_right, vec!["E"]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn export_cross_check_against_target() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "e.csv",
            "term,r,A,B,C,D\ngood,1.0,-1,-1,1,1\nwrong,0.9,1,-1,-1,1\n",
        );
        let e = read_correlate_export(&p, StdDivisor::Population).unwrap();
        let target = RegionSeries::new("t", [("A", 1.0), ("B", 1.0), ("C", 3.0), ("D", 3.0)]).unwrap();
        let bad = e.cross_check(&target, 0.01).unwrap();
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].0, "wrong");
    }
}
