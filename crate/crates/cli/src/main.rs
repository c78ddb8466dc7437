use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use searchcast::correlate::{build_corpus_with, select_terms, top_k_correlated, RankedTerm, SelectionConfig};
use searchcast::eval::{fit_family, FamilySpec, SingleTermChoice};
use searchcast::io;
use searchcast::pipeline::{
    dataset_for, evaluate_families, fit_detail, run_pipeline, target_series, transfer_stage, PipelineConfig,
};
use searchcast::regress::{Dataset, Family, LassoConfig};
use searchcast::series::{RegionSeries, StdDivisor, PER_THOUSAND};
use searchcast::synth::{synth_generate, write_synth, SynthConfig};

#[derive(Parser, Debug)]
#[command(name = "searchcast", version, about = "Nowcast regional fertility rates from search-term series")]
struct Cli {
    /// Worker threads (default: one per core). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rank corpus terms by spatial correlation with a target variable.
    Correlate(CorrelateArgs),
    /// Pick at most `--max-terms` relevant terms from a ranked list.
    Select(SelectArgs),
    /// Fit one model family on the selected terms.
    Fit(FitArgs),
    /// Leave-one-out evaluation of every model family.
    Evaluate(EvaluateArgs),
    /// Apply a fitted spatial model across years of national volumes.
    Transfer(TransferArgs),
    /// Generate a synthetic fixture with planted terms.
    Synth(SynthArgs),
    /// Run every stage from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args, Debug)]
struct TargetArgs {
    /// Ground-truth CSV (`[year,]region,variable,births,women_15_50`).
    #[arg(long)]
    truth: PathBuf,
    /// Variable name, e.g. `Gen`.
    #[arg(long)]
    target: String,
    /// Year of the ground-truth records to use.
    #[arg(long)]
    year: Option<i32>,
    #[arg(long, default_value_t = PER_THOUSAND)]
    scale: f64,
}

impl TargetArgs {
    fn series(&self) -> Result<RegionSeries> {
        let truth = io::read_ground_truth(&self.truth)?;
        Ok(target_series(&truth, &self.target, self.year, self.scale)?)
    }
}

#[derive(Args, Debug)]
struct CorrelateArgs {
    #[command(flatten)]
    target: TargetArgs,
    /// Raw corpus CSV (`term,<region>...`).
    #[arg(long)]
    corpus: PathBuf,
    #[arg(short, default_value_t = 50)]
    k: usize,
    /// Use the 1/(n-1) standard deviation for z-scores.
    #[arg(long)]
    sample_std: bool,
    #[arg(long, default_value = "ranked.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[arg(long, default_value = "ranked.csv")]
    ranked: PathBuf,
    /// Word-stem lexicon; every term passes without one.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    max_terms: usize,
    /// Keep both a term and its singular/plural sibling.
    #[arg(long)]
    no_dedup: bool,
    #[arg(long)]
    min_r: Option<f64>,
    #[arg(long, default_value = "selected.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DesignArgs {
    #[command(flatten)]
    target: TargetArgs,
    /// Ranked-term export holding the z-scored term series.
    #[arg(long, default_value = "ranked.csv")]
    ranked: PathBuf,
    /// Selected terms (`term,r`); all ranked terms when omitted.
    #[arg(long)]
    selected: Option<PathBuf>,
    #[arg(long)]
    sample_std: bool,
    /// How the single-term model picks its term: `cv` or `top`.
    #[arg(long, default_value = "cv")]
    single_term: SingleTermChoice,
    #[arg(long, default_value_t = 100)]
    grid_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    grid_ratio: f64,
}

impl DesignArgs {
    fn lasso(&self) -> LassoConfig {
        LassoConfig {
            grid_size: self.grid_size,
            grid_ratio: self.grid_ratio,
            ..Default::default()
        }
    }

    fn dataset(&self) -> Result<Dataset> {
        let divisor = if self.sample_std {
            StdDivisor::Sample
        } else {
            StdDivisor::Population
        };
        let target = self.target.series()?;
        let export = io::read_correlate_export(&self.ranked, divisor)?;
        export.check_regions(target.regions())?;
        for (term, stored, recomputed) in export.cross_check(&target, 0.01)? {
            log::warn!("`{term}`: stored r {stored} but recomputed {recomputed}");
        }
        let ranked = export.ranked();
        let terms: Vec<RankedTerm> = match &self.selected {
            None => ranked,
            Some(path) => io::read_selected(path)?
                .into_iter()
                .map(|(term, _)| {
                    ranked
                        .iter()
                        .find(|t| t.term == term)
                        .cloned()
                        .with_context(|| format!("selected term `{term}` is not in {}", self.ranked.display()))
                })
                .collect::<Result<_>>()?,
        };
        if terms.is_empty() {
            bail!("no terms to fit: the variable was dropped at selection");
        }
        Ok(dataset_for(&terms, &target)?)
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    family: Family,
    #[command(flatten)]
    design: DesignArgs,
    #[arg(long, default_value = "model.txt")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Leave-one-out over regions (the only protocol; accepted for clarity).
    #[arg(long)]
    loocv: bool,
    #[command(flatten)]
    design: DesignArgs,
    #[arg(long, default_value = "evaluation.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TransferArgs {
    /// Monthly national volumes (`month,term,volume`).
    #[arg(long)]
    trends: PathBuf,
    /// Ground truth with a `year` column.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value = "model.txt")]
    model: PathBuf,
    /// Years as `2010..2015` or `2010,2011,...`; all truth years by default.
    #[arg(long, value_parser = parse_years)]
    years: Option<Years>,
    #[arg(long, default_value_t = PER_THOUSAND)]
    scale: f64,
    /// Directory for `trend.csv` and `plot.csv`.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Clone, Debug)]
struct Years(Vec<i32>);

fn parse_years(s: &str) -> Result<Years, String> {
    let bad = |y: &str| format!("bad year `{y}`");
    if let Some((a, b)) = s.split_once("..") {
        let a: i32 = a.trim().parse().map_err(|_| bad(a))?;
        let b: i32 = b.trim().parse().map_err(|_| bad(b))?;
        return Ok(Years((a..=b).collect()));
    }
    s.split(',').map(|y| y.trim().parse().map_err(|_| bad(y))).collect::<Result<_, _>>().map(Years)
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 2015)]
    seed: u64,
    #[arg(long, default_value_t = 51)]
    regions: usize,
    #[arg(long, default_value_t = 200)]
    terms: usize,
    /// Planted terms per variable.
    #[arg(long, default_value_t = 3)]
    planted: usize,
    #[arg(long, default_value_t = 0.62)]
    noise: f64,
    #[arg(long, default_value = "synth")]
    out: PathBuf,
}

fn correlate(a: &CorrelateArgs) -> Result<()> {
    let divisor = if a.sample_std {
        StdDivisor::Sample
    } else {
        StdDivisor::Population
    };
    let target = a.target.series()?;
    let corpus = build_corpus_with(io::read_corpus(&a.corpus)?, divisor)?;
    let ranked = top_k_correlated(&corpus, &target, a.k)?;
    io::write_ranked(&a.out, &ranked)?;
    println!("{} terms ranked -> {}", ranked.len(), a.out.display());
    Ok(())
}

fn select(a: &SelectArgs) -> Result<()> {
    let export = io::read_correlate_export(&a.ranked, StdDivisor::Population)?;
    let cfg = SelectionConfig {
        max_terms: a.max_terms,
        relevance: a.lexicon.as_deref().map(io::read_lexicon).transpose()?.unwrap_or_default(),
        dedup_plural: !a.no_dedup,
        min_r: a.min_r,
    };
    if cfg.max_terms == 0 {
        bail!("--max-terms must be at least 1");
    }
    let selected = select_terms(&export.ranked(), &cfg);
    io::write_selected(&a.out, &selected)?;
    if selected.is_empty() {
        log::warn!("no term passed selection; the variable is dropped");
    }
    for t in &selected {
        println!("{} ({:.2})", t.term, t.r);
    }
    Ok(())
}

fn fit(a: &FitArgs) -> Result<()> {
    let ds = a.design.dataset()?;
    let spec = FamilySpec::new(a.family, a.design.single_term, &a.design.lasso());
    let model = fit_family(&ds, &spec)?;
    io::write_model(&a.out, &model)?;
    print!("{}", model.to_text());
    let removed = model.removed_terms();
    if model.family == Family::Lasso && !removed.is_empty() {
        println!("removed by lasso: {}", removed.join(", "));
    }
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let ds = a.design.dataset()?;
    let lasso = a.design.lasso();
    let reports = evaluate_families(&ds, a.design.single_term, &lasso)?;
    let details = Family::ALL
        .iter()
        .map(|&f| Ok(fit_detail(&fit_family(&ds, &FamilySpec::new(f, a.design.single_term, &lasso))?)))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<io::EvaluationRow<'_>> = reports
        .iter()
        .zip(details)
        .map(|(report, detail)| io::EvaluationRow { report, detail })
        .collect();
    io::write_evaluation(&a.out, &rows)?;
    for r in &reports {
        println!(
            "{:<10} r={:.3} rmse={:.3} smape={:.2}%",
            r.family, r.metrics.r, r.metrics.rmse, r.metrics.smape_pct
        );
    }
    println!("chosen: {}", searchcast::eval::choose_model(&reports)?);
    Ok(())
}

fn transfer(a: &TransferArgs) -> Result<()> {
    let model = io::read_model(&a.model)?;
    let truth = io::read_ground_truth(&a.truth)?;
    let volumes = io::read_trends_monthly(&a.trends)?;
    let years = match &a.years {
        Some(y) => y.0.clone(),
        None => {
            let set: std::collections::BTreeSet<i32> = truth
                .iter()
                .filter(|v| v.name == model.variable)
                .filter_map(|v| v.year)
                .collect();
            set.into_iter().collect()
        }
    };
    let report = transfer_stage(&model, &volumes, &truth, &years, a.scale)?;
    io::write_trend_summary(&a.out.join("trend.csv"), std::slice::from_ref(&report))?;
    io::write_plot_data(&a.out.join("plot.csv"), &report)?;
    println!("{}: trend r = {:.3}", report.variable, report.r);
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        seed: a.seed,
        n_regions: a.regions,
        n_terms: a.terms,
        n_planted: a.planted,
        noise_level: a.noise,
        ..Default::default()
    };
    let data = synth_generate(&cfg)?;
    write_synth(&a.out, &cfg, &data)?;
    println!("fixture written to {}", a.out.display());
    Ok(())
}

fn run(config: &Path) -> Result<()> {
    let cfg = PipelineConfig::from_file(config).with_context(|| format!("reading {}", config.display()))?;
    let summary = run_pipeline(&cfg)?;
    for (variable, family) in &summary.processed {
        println!("{variable}: chose {family}");
    }
    for (variable, reason) in &summary.dropped {
        println!("{variable}: dropped ({reason})");
    }
    for t in &summary.trends {
        println!("{}: trend r = {:.3}", t.variable, t.r);
    }
    println!("artifacts in {}", cfg.output_dir.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Correlate(a) => correlate(a).context("correlate"),
        Command::Select(a) => select(a).context("select"),
        Command::Fit(a) => fit(a).context("fit"),
        Command::Evaluate(a) => evaluate(a).context("evaluate"),
        Command::Transfer(a) => transfer(a).context("transfer"),
        Command::Synth(a) => synth(a).context("synth"),
        Command::Run { config } => run(config),
    }
}
