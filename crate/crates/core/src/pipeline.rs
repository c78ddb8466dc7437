//! End-to-end orchestration and the stage functions the CLI subcommands
//! share with it.
//!
//! Per variable, `run_pipeline` writes into `<output_dir>/<variable>/`:
//! `ranked.csv`, `selected.csv`, `evaluation.csv`, `model.txt`,
//! `sparsification.csv` and, when trends are configured, `trend.csv` and
//! `plot.csv`. The output root also gets `table3.csv` (all evaluations),
//! `table4.csv` (all trend correlations) and `dropped.csv`.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use crate::correlate::{
    build_corpus_with, select_terms, top_k_correlated, RankedTerm, SelectionConfig, TermCorpus,
};
use crate::error::{Error, Result};
use crate::eval::{choose_model, fit_family, loocv, EvaluationReport, FamilySpec, SingleTermChoice};
use crate::io;
use crate::regress::{Dataset, DesignMatrix, Family, FittedModel, LassoConfig};
use crate::series::{fertility_intensity, FertilityVariable, RegionSeries, StdDivisor, PER_THOUSAND};
use crate::transfer::{build_annual_matrix, national_truth, trend_report, MonthlyTermVolume, TrendReport};

/// Environment variable that replaces the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "SEARCHCAST_OUTPUT_DIR";

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub reference_year: i32,
    pub ground_truth: PathBuf,
    pub corpus: PathBuf,
    pub trends: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub top_k: usize,
    pub selection: SelectionConfig,
    pub lasso: LassoConfig,
    pub single_term: SingleTermChoice,
    pub scale: f64,
    pub divisor: StdDivisor,
    /// Years for the temporal transfer; all years of the variable's
    /// ground truth when unset.
    pub years: Option<Vec<i32>>,
    /// Only these variables, in this order; all when unset.
    pub variables: Option<Vec<String>>,
    /// Recorded for provenance; only the generator consumes it.
    pub seed: Option<u64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            reference_year: 2015,
            ground_truth: PathBuf::from("ground_truth.csv"),
            corpus: PathBuf::from("corpus.csv"),
            trends: None,
            lexicon: None,
            output_dir: PathBuf::from("out"),
            top_k: 50,
            selection: SelectionConfig::default(),
            lasso: LassoConfig::default(),
            single_term: SingleTermChoice::default(),
            scale: PER_THOUSAND,
            divisor: StdDivisor::Population,
            years: None,
            variables: None,
            seed: None,
        }
    }
}

fn parse_years(v: &str) -> std::result::Result<Vec<i32>, String> {
    if let Some((a, b)) = v.split_once("..") {
        let a: i32 = a.trim().parse().map_err(|_| format!("bad year `{a}`"))?;
        let b: i32 = b.trim().parse().map_err(|_| format!("bad year `{b}`"))?;
        return Ok((a..=b).collect());
    }
    v.split(',')
        .map(|y| y.trim().parse().map_err(|_| format!("bad year `{y}`")))
        .collect()
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected a boolean, got `{v}`")),
    }
}

fn parse_num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("bad number `{v}`"))
}

impl PipelineConfig {
    /// Parses the flat `key=value` format. Relative paths are resolved
    /// against `base`. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        let mut seen = BTreeSet::new();
        let path = |v: &str| base.join(v);
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |m: String| Error::parse(base, i as u64 + 1, m);
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| bad(format!("expected key=value, got `{line}`")))?;
            if !seen.insert(key.to_string()) {
                return Err(bad(format!("duplicate key `{key}`")));
            }
            let set: std::result::Result<(), String> = (|| {
                match key {
                    "reference_year" => cfg.reference_year = parse_num(value)?,
                    "ground_truth" | "regions" => cfg.ground_truth = path(value),
                    "corpus" => cfg.corpus = path(value),
                    "trends" => cfg.trends = Some(path(value)),
                    "lexicon" => cfg.lexicon = Some(path(value)),
                    "output_dir" => cfg.output_dir = path(value),
                    "top_k" => cfg.top_k = parse_num(value)?,
                    "max_terms" => cfg.selection.max_terms = parse_num(value)?,
                    "dedup_plural" => cfg.selection.dedup_plural = parse_bool(value)?,
                    "min_r" => cfg.selection.min_r = Some(parse_num(value)?),
                    "lasso_grid_size" => cfg.lasso.grid_size = parse_num(value)?,
                    "lasso_grid_ratio" => cfg.lasso.grid_ratio = parse_num(value)?,
                    "lasso_max_sweeps" => cfg.lasso.max_sweeps = parse_num(value)?,
                    "lasso_tolerance" => cfg.lasso.tolerance = parse_num(value)?,
                    "single_term" => cfg.single_term = value.parse().map_err(|e: Error| e.to_string())?,
                    "scale" => cfg.scale = parse_num(value)?,
                    "std_divisor" => {
                        cfg.divisor = match value {
                            "population" => StdDivisor::Population,
                            "sample" => StdDivisor::Sample,
                            _ => return Err(format!("std_divisor must be population or sample, got `{value}`")),
                        }
                    }
                    "years" => cfg.years = Some(parse_years(value)?),
                    "variables" => {
                        cfg.variables = Some(value.split(',').map(|s| s.trim().to_string()).collect())
                    }
                    "seed" => cfg.seed = Some(parse_num(value)?),
                    _ => return Err(format!("unknown key `{key}`")),
                }
                Ok(())
            })();
            set.map_err(bad)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and applies the output-directory override from
    /// the environment.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let cfg = Self::parse(&text, base)?;
        Ok(cfg.with_output_override(std::env::var_os(OUTPUT_DIR_ENV)))
    }

    pub fn with_output_override(mut self, dir: Option<OsString>) -> Self {
        if let Some(dir) = dir.filter(|d| !d.is_empty()) {
            self.output_dir = PathBuf::from(dir);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.top_k == 0 {
            return bad("top_k must be >= 1");
        }
        if self.selection.max_terms == 0 {
            return bad("max_terms must be >= 1");
        }
        if self.lasso.grid_size == 0 || self.lasso.grid_ratio.is_nan() || self.lasso.grid_ratio <= 0.0 || self.lasso.grid_ratio > 1.0 {
            return bad("lasso grid needs size >= 1 and ratio in (0, 1]");
        }
        if !self.lasso.tolerance.is_finite() || self.lasso.tolerance <= 0.0 || self.lasso.max_sweeps == 0 {
            return bad("lasso tolerance and max_sweeps must be positive");
        }
        if !self.scale.is_finite() || self.scale <= 0.0 {
            return bad("scale must be positive");
        }
        Ok(())
    }
}

/// Record of a variable `name` in `year`. Records without a year match any
/// year; with no year requested the name must be unambiguous.
pub fn find_variable<'a>(
    truth: &'a [FertilityVariable],
    name: &str,
    year: Option<i32>,
) -> Result<&'a FertilityVariable> {
    let mut hits = truth
        .iter()
        .filter(|v| v.name == name && (year.is_none() || v.year.is_none() || v.year == year));
    let first = hits
        .next()
        .ok_or_else(|| Error::InvalidParameter(format!("no ground truth for `{name}`{}", year_note(year))))?;
    if hits.next().is_some() {
        return Err(Error::InvalidParameter(format!(
            "`{name}` has records for several years; pick one"
        )));
    }
    Ok(first)
}

fn year_note(year: Option<i32>) -> String {
    year.map(|y| format!(" in {y}")).unwrap_or_default()
}

/// Regional target intensity for one variable.
pub fn target_series(
    truth: &[FertilityVariable],
    name: &str,
    year: Option<i32>,
    scale: f64,
) -> Result<RegionSeries> {
    fertility_intensity(find_variable(truth, name, year)?, scale)
}

pub fn dataset_for(selected: &[RankedTerm], target: &RegionSeries) -> Result<Dataset> {
    Dataset::new(DesignMatrix::from_ranked(selected)?, target)
}

/// Leave-one-out reports for every family, in `Family::ALL` order.
pub fn evaluate_families(
    ds: &Dataset,
    single: SingleTermChoice,
    lasso: &LassoConfig,
) -> Result<Vec<EvaluationReport>> {
    Family::ALL
        .iter()
        .map(|&f| loocv(ds, &FamilySpec::new(f, single, lasso)))
        .collect()
}

/// Short description of a full-data fit for the evaluation table.
pub fn fit_detail(model: &FittedModel) -> String {
    match model.family {
        Family::Constant => String::new(),
        Family::OlsSingle => model
            .coefficients
            .first()
            .map(|(t, _)| format!("term={t}"))
            .unwrap_or_default(),
        Family::OlsMulti => format!("terms={}", model.coefficients.len()),
        Family::Lasso => format!(
            "lambda={};active={}",
            model.lambda.unwrap_or(0.0),
            model.active_terms().len()
        ),
    }
}

/// Applies `model` across `years` of national volumes and correlates the
/// result with the national ground truth of its variable.
pub fn transfer_stage(
    model: &FittedModel,
    volumes: &[MonthlyTermVolume],
    truth: &[FertilityVariable],
    years: &[i32],
    scale: f64,
) -> Result<TrendReport> {
    let needed: BTreeSet<&str> = model.active_terms().into_iter().collect();
    let used: Vec<MonthlyTermVolume> = volumes
        .iter()
        .filter(|v| needed.contains(v.term()))
        .cloned()
        .collect();
    let matrix = build_annual_matrix(&used, years)?;
    let national = national_truth(truth, &model.variable, years, scale)?;
    trend_report(model, &matrix, &national)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PipelineSummary {
    pub processed: Vec<(String, Family)>,
    /// Variable and reason.
    pub dropped: Vec<(String, String)>,
    pub trends: Vec<TrendReport>,
}

fn dir_name(variable: &str) -> String {
    variable
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn variable_order(truth: &[FertilityVariable], cfg: &PipelineConfig) -> Vec<String> {
    if let Some(v) = &cfg.variables {
        return v.clone();
    }
    let mut seen = BTreeSet::new();
    truth
        .iter()
        .filter(|v| seen.insert(v.name.clone()))
        .map(|v| v.name.clone())
        .collect()
}

fn variable_years(truth: &[FertilityVariable], name: &str) -> Vec<i32> {
    let years: BTreeSet<i32> = truth
        .iter()
        .filter(|v| v.name == name)
        .filter_map(|v| v.year)
        .collect();
    years.into_iter().collect()
}

struct Inputs {
    truth: Vec<FertilityVariable>,
    corpus: TermCorpus,
    trends: Option<Vec<MonthlyTermVolume>>,
}

fn load(cfg: &PipelineConfig) -> Result<Inputs> {
    let truth = io::read_ground_truth(&cfg.ground_truth)?;
    let corpus = build_corpus_with(io::read_corpus(&cfg.corpus)?, cfg.divisor)?;
    let trends = cfg.trends.as_deref().map(io::read_trends_monthly).transpose()?;
    Ok(Inputs { truth, corpus, trends })
}

/// Runs every stage for every variable. Variables whose term selection
/// comes back empty are skipped and listed in `dropped.csv`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineSummary> {
    cfg.validate()?;
    let inputs = load(cfg).map_err(|e| e.in_stage("ingest"))?;
    let mut selection = cfg.selection.clone();
    if let Some(path) = &cfg.lexicon {
        selection.relevance = io::read_lexicon(path).map_err(|e| e.in_stage("select"))?;
    }

    let mut summary = PipelineSummary::default();
    let mut evaluations: Vec<(EvaluationReport, String)> = Vec::new();
    for name in variable_order(&inputs.truth, cfg) {
        let out = cfg.output_dir.join(dir_name(&name));
        let outcome = run_variable(cfg, &inputs, &selection, &name, &out)?;
        match outcome {
            VariableOutcome::Dropped(reason) => {
                log::warn!("dropping `{name}`: {reason}");
                summary.dropped.push((name, reason));
            }
            VariableOutcome::Done { chosen, reports, trend } => {
                evaluations.extend(reports);
                summary.trends.extend(trend);
                summary.processed.push((name, chosen));
            }
        }
    }

    let rows: Vec<io::EvaluationRow<'_>> = evaluations
        .iter()
        .map(|(report, detail)| io::EvaluationRow {
            report,
            detail: detail.clone(),
        })
        .collect();
    let report = || -> Result<()> {
        io::write_evaluation(&cfg.output_dir.join("table3.csv"), &rows)?;
        if inputs.trends.is_some() {
            io::write_trend_summary(&cfg.output_dir.join("table4.csv"), &summary.trends)?;
        }
        io::write_dropped(&cfg.output_dir.join("dropped.csv"), &summary.dropped)
    };
    report().map_err(|e| e.in_stage("report"))?;
    Ok(summary)
}

enum VariableOutcome {
    Dropped(String),
    Done {
        chosen: Family,
        reports: Vec<(EvaluationReport, String)>,
        trend: Option<TrendReport>,
    },
}

fn run_variable(
    cfg: &PipelineConfig,
    inputs: &Inputs,
    selection: &SelectionConfig,
    name: &str,
    out: &Path,
) -> Result<VariableOutcome> {
    let correlate = || -> Result<Vec<RankedTerm>> {
        let target = target_series(&inputs.truth, name, Some(cfg.reference_year), cfg.scale)?;
        let ranked = top_k_correlated(&inputs.corpus, &target, cfg.top_k)?;
        io::write_ranked(&out.join("ranked.csv"), &ranked)?;
        Ok(ranked)
    };
    let ranked = correlate().map_err(|e| e.in_stage("correlate"))?;

    let selected = select_terms(&ranked, selection);
    io::write_selected(&out.join("selected.csv"), &selected).map_err(|e| e.in_stage("select"))?;
    if selected.is_empty() {
        return Ok(VariableOutcome::Dropped(format!(
            "no relevant term among the top {}",
            ranked.len()
        )));
    }

    let evaluate = || -> Result<(Dataset, Vec<EvaluationReport>)> {
        let target = target_series(&inputs.truth, name, Some(cfg.reference_year), cfg.scale)?;
        let ds = dataset_for(&selected, &target)?;
        let reports = evaluate_families(&ds, cfg.single_term, &cfg.lasso)?;
        Ok((ds, reports))
    };
    let (ds, reports) = evaluate().map_err(|e| e.in_stage("evaluate"))?;

    let fit = || -> Result<(Family, Vec<FittedModel>)> {
        let chosen = choose_model(&reports)?;
        let fits = Family::ALL
            .iter()
            .map(|&f| fit_family(&ds, &FamilySpec::new(f, cfg.single_term, &cfg.lasso)))
            .collect::<Result<Vec<_>>>()?;
        Ok((chosen, fits))
    };
    let (chosen, fits) = fit().map_err(|e| e.in_stage("fit"))?;
    let model = fits
        .iter()
        .find(|m| m.family == chosen)
        .expect("every family is fitted");
    let lasso = fits
        .iter()
        .find(|m| m.family == Family::Lasso)
        .expect("every family is fitted");

    let reports: Vec<(EvaluationReport, String)> = reports
        .into_iter()
        .zip(&fits)
        .map(|(r, m)| (r, fit_detail(m)))
        .collect();
    let write = || -> Result<()> {
        let rows: Vec<io::EvaluationRow<'_>> = reports
            .iter()
            .map(|(report, detail)| io::EvaluationRow {
                report,
                detail: detail.clone(),
            })
            .collect();
        io::write_evaluation(&out.join("evaluation.csv"), &rows)?;
        io::write_model(&out.join("model.txt"), model)?;
        io::write_sparsification(&out.join("sparsification.csv"), lasso)
    };
    write().map_err(|e| e.in_stage("fit"))?;

    let trend = match &inputs.trends {
        None => None,
        Some(volumes) => transfer_variable(cfg, inputs, volumes, model, name, out)
            .map_err(|e| e.in_stage("transfer"))?,
    };
    Ok(VariableOutcome::Done {
        chosen,
        reports,
        trend,
    })
}

fn transfer_variable(
    cfg: &PipelineConfig,
    inputs: &Inputs,
    volumes: &[MonthlyTermVolume],
    model: &FittedModel,
    name: &str,
    out: &Path,
) -> Result<Option<TrendReport>> {
    if model.active_terms().is_empty() {
        log::warn!("`{name}`: chosen model has no active term, trend is flat; skipping transfer");
        return Ok(None);
    }
    let years = cfg
        .years
        .clone()
        .unwrap_or_else(|| variable_years(&inputs.truth, name));
    let report = transfer_stage(model, volumes, &inputs.truth, &years, cfg.scale)?;
    io::write_trend_summary(&out.join("trend.csv"), std::slice::from_ref(&report))?;
    io::write_plot_data(&out.join("plot.csv"), &report)?;
    Ok(Some(report))
}
