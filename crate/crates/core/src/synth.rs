//! Deterministic synthetic fixtures with planted term signals.
//!
//! Each planted term is `offset + slope * (z(target) + noise_level * e)`
//! over regions, where `z(target)` is the z-scored reference-year intensity
//! of its variable and `e` is standard normal. With unit-variance `z`, a
//! planted term's expected correlation with its target is
//! `1 / sqrt(1 + noise_level^2)`. National monthly volumes follow the same
//! construction over years.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::correlate::Lexicon;
use crate::error::{Error, Result};
use crate::series::{fertility_intensity, national_intensity, zscore, FertilityVariable, RegionSeries, PER_THOUSAND};
use crate::transfer::MonthlyTermVolume;

/// One synthetic fertility category.
#[derive(Clone, Debug, PartialEq)]
pub struct VariableSpec {
    pub name: String,
    /// Mean and spread of the reference-year intensity across regions (per 1,000).
    pub mean: f64,
    pub sd: f64,
    /// Yearly change of every region's rate (per 1,000).
    pub drift: f64,
    /// Loading on a latent regional factor shared by all variables, in
    /// [-1, 1]; sets how strongly the variables co-vary across regions.
    pub loading: f64,
    /// Whether planted terms get names the bundled lexicon accepts.
    pub relevant: bool,
}

impl VariableSpec {
    fn new(name: &str, mean: f64, sd: f64, drift: f64, loading: f64, relevant: bool) -> Self {
        Self {
            name: name.into(),
            mean,
            sd,
            drift,
            loading,
            relevant,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_regions: usize,
    /// Corpus size, planted terms included.
    pub n_terms: usize,
    /// Planted terms per variable.
    pub n_planted: usize,
    pub noise_level: f64,
    pub first_year: i32,
    pub reference_year: i32,
    pub variables: Vec<VariableSpec>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 2015,
            n_regions: 51,
            n_terms: 200,
            n_planted: 3,
            // expected planted r of about 0.85
            noise_level: 0.62,
            first_year: 2010,
            reference_year: 2015,
            variables: vec![
                VariableSpec::new("Gen", 54.0, 6.5, -0.6, 0.8, true),
                VariableSpec::new("Teen", 2.6, 0.8, -0.25, 0.8, true),
                VariableSpec::new("Poor", 14.0, 3.2, -0.1, -0.8, false),
            ],
        }
    }
}

impl SynthConfig {
    pub fn years(&self) -> Vec<i32> {
        (self.first_year..=self.reference_year).collect()
    }

    fn validate(&self) -> Result<()> {
        let planted = self.n_planted * self.variables.len();
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_regions < RegionSeries::MIN_REGIONS {
            return bad(format!("n_regions must be >= {}", RegionSeries::MIN_REGIONS));
        }
        if planted > self.n_terms {
            return bad(format!(
                "{planted} planted terms do not fit in a corpus of {}",
                self.n_terms
            ));
        }
        if !self.noise_level.is_finite() || self.noise_level < 0.0 {
            return bad(format!("noise_level must be >= 0, got {}", self.noise_level));
        }
        if self.first_year >= self.reference_year {
            return bad("need at least two years".into());
        }
        if self.variables.is_empty() {
            return bad("no variables".into());
        }
        if let Some(v) = self.variables.iter().find(|v| v.loading.is_nan() || v.loading.abs() > 1.0) {
            return bad(format!("{}: loading must lie in [-1, 1]", v.name));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedTerm {
    pub variable: String,
    pub term: String,
    pub slope: f64,
    pub offset: f64,
}

#[derive(Clone, Debug)]
pub struct SynthData {
    pub regions: Vec<String>,
    pub ground_truth: Vec<FertilityVariable>,
    pub corpus: Vec<(String, RegionSeries)>,
    pub trends: Vec<MonthlyTermVolume>,
    pub planted: Vec<PlantedTerm>,
    pub lexicon: Lexicon,
}

const FERTILITY_WORDS: [&str; 10] = [
    "baby", "pregnancy", "stroller", "nursing", "crib", "potty", "diaper", "newborn", "toddler",
    "infant",
];
const OFF_TOPIC_WORDS: [&str; 5] = ["mortgage", "car", "visa", "flight", "loan"];
const FILLER_WORDS: [&str; 10] = [
    "weather", "football", "recipe", "lottery", "guitar", "movie", "garden", "insurance", "truck",
    "hotel",
];

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let width = cfg.n_regions.to_string().len().max(2);
    let regions: Vec<String> = (1..=cfg.n_regions).map(|i| format!("R{i:0width$}")).collect();
    let years = cfg.years();

    let women_base: Vec<f64> = regions
        .iter()
        .map(|_| rng.random_range(100_000.0f64..4_000_000.0).round())
        .collect();

    let latent: Vec<f64> = regions.iter().map(|_| normal(&mut rng)).collect();

    let mut ground_truth = Vec::new();
    let mut targets: Vec<(RegionSeries, Vec<f64>)> = Vec::new();
    for spec in &cfg.variables {
        let own = (1.0 - spec.loading * spec.loading).sqrt();
        let base: Vec<f64> = latent
            .iter()
            .map(|f| {
                let u = spec.loading * f + own * normal(&mut rng);
                (spec.mean + spec.sd * u).max(0.05 * spec.mean)
            })
            .collect();
        let mut national = Vec::with_capacity(years.len());
        let mut reference = None;
        for &year in &years {
            let dt = (year - cfg.reference_year) as f64;
            let mut births = BTreeMap::new();
            let mut women = BTreeMap::new();
            for (i, region) in regions.iter().enumerate() {
                let w = (women_base[i] * (1.0 + 0.004 * dt)).round();
                let rate = (base[i] + spec.drift * dt + 0.05 * spec.sd * normal(&mut rng)).max(0.01);
                births.insert(region.clone(), (rate / PER_THOUSAND * w).round());
                women.insert(region.clone(), w);
            }
            let var = FertilityVariable {
                name: spec.name.clone(),
                year: Some(year),
                births,
                women_15_50: women,
            };
            national.push(national_intensity(&var, PER_THOUSAND)?);
            if year == cfg.reference_year {
                reference = Some(fertility_intensity(&var, PER_THOUSAND)?);
            }
            ground_truth.push(var);
        }
        let reference = reference.expect("reference year is within the year range");
        targets.push((reference, zscore(&national)?));
    }

    let mut corpus = Vec::with_capacity(cfg.n_terms);
    let mut trends = Vec::with_capacity(cfg.n_terms);
    let mut planted = Vec::new();
    let season: Vec<f64> = (0..12)
        .map(|m| 1.0 + 0.15 * (2.0 * std::f64::consts::PI * m as f64 / 12.0).sin())
        .collect();
    let monthly = |rng: &mut ChaCha8Rng, term: &str, levels: &[f64]| -> Result<MonthlyTermVolume> {
        let mut samples = Vec::with_capacity(levels.len() * 12);
        for (&year, &level) in years.iter().zip(levels) {
            for (m, s) in season.iter().enumerate() {
                let v = (level * s * (1.0 + 0.01 * normal(rng))).max(0.0);
                samples.push(((year, m as u32 + 1), v));
            }
        }
        MonthlyTermVolume::new(term, samples)
    };

    for (spec, (target, national_z)) in cfg.variables.iter().zip(&targets) {
        let target_z = zscore(&target.values().values().copied().collect::<Vec<_>>())?;
        for k in 0..cfg.n_planted {
            let word = if spec.relevant {
                FERTILITY_WORDS[(planted.len() + k) % FERTILITY_WORDS.len()]
            } else {
                OFF_TOPIC_WORDS[k % OFF_TOPIC_WORDS.len()]
            };
            let term = format!("{word} {} {}", spec.name.to_lowercase(), k + 1);
            let slope = rng.random_range(0.5..2.0);
            let offset = slope * (5.0 + 5.0 * cfg.noise_level) + rng.random_range(0.0..1.0);
            let values: Vec<(String, f64)> = regions
                .iter()
                .zip(&target_z)
                .map(|(r, z)| {
                    let e = normal(&mut rng);
                    (r.clone(), offset + slope * (z + cfg.noise_level * e))
                })
                .collect();
            corpus.push((term.clone(), RegionSeries::new(term.clone(), values)?));
            let levels: Vec<f64> = national_z
                .iter()
                .map(|z| 20.0 * (offset + slope * (z + cfg.noise_level * normal(&mut rng))))
                .collect();
            trends.push(monthly(&mut rng, &term, &levels)?);
            planted.push(PlantedTerm {
                variable: spec.name.clone(),
                term,
                slope,
                offset,
            });
        }
    }

    let n_noise = cfg.n_terms - corpus.len();
    for i in 0..n_noise {
        let term = format!("{} {:04}", FILLER_WORDS[i % FILLER_WORDS.len()], i + 1);
        let center = rng.random_range(5.0..20.0);
        let spread = rng.random_range(0.5..3.0);
        let values: Vec<(String, f64)> = regions
            .iter()
            .map(|r| (r.clone(), center + spread * normal(&mut rng)))
            .collect();
        corpus.push((term.clone(), RegionSeries::new(term.clone(), values)?));
        let mut level = 20.0 * center;
        let levels: Vec<f64> = years
            .iter()
            .map(|_| {
                level *= 1.0 + 0.05 * normal(&mut rng);
                level
            })
            .collect();
        trends.push(monthly(&mut rng, &term, &levels)?);
    }

    let lexicon = Lexicon {
        allow: FERTILITY_WORDS.iter().map(|s| s.to_string()).collect(),
        block: Default::default(),
    };
    Ok(SynthData {
        regions,
        ground_truth,
        corpus,
        trends,
        planted,
        lexicon,
    })
}

/// Writes `ground_truth.csv`, `corpus.csv`, `trends.csv`, `manifest.csv`,
/// `lexicon.txt` and a `pipeline.conf` wired to them into `dir`.
pub fn write_synth(dir: &Path, cfg: &SynthConfig, data: &SynthData) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    crate::io::write_ground_truth(&dir.join("ground_truth.csv"), &data.ground_truth)?;
    crate::io::write_corpus(&dir.join("corpus.csv"), &data.corpus)?;
    crate::io::write_trends_monthly(&dir.join("trends.csv"), &data.trends)?;

    let mut manifest = String::from("variable,term,slope,offset,noise_level\n");
    for p in &data.planted {
        writeln!(
            manifest,
            "{},{},{},{},{}",
            p.variable, p.term, p.slope, p.offset, cfg.noise_level
        )
        .expect("writing to a String");
    }
    std::fs::write(dir.join("manifest.csv"), manifest)?;

    let mut lex = String::from("# allowed word stems\n");
    for stem in &data.lexicon.allow {
        lex.push_str(stem);
        lex.push('\n');
    }
    for stem in &data.lexicon.block {
        lex.push('-');
        lex.push_str(stem);
        lex.push('\n');
    }
    std::fs::write(dir.join("lexicon.txt"), lex)?;

    let conf = format!(
        "# generated with seed {}\n\
         reference_year={}\n\
         ground_truth=ground_truth.csv\n\
         corpus=corpus.csv\n\
         trends=trends.csv\n\
         lexicon=lexicon.txt\n\
         output_dir=out\n\
         seed={}\n",
        cfg.seed, cfg.reference_year, cfg.seed
    );
    std::fs::write(dir.join("pipeline.conf"), conf)?;
    Ok(())
}
