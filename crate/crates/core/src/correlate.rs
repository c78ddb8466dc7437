//! Exact top-k correlation search of a regional target against a corpus of
//! term series, and the term-selection walk that follows it.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::series::{check_same_regions, RegionSeries, StdDivisor, ZScoredSeries};

#[derive(Clone, Debug)]
pub struct CorpusTerm {
    pub term: String,
    pub raw: RegionSeries,
    pub z: ZScoredSeries,
}

/// Term series sharing one region set, with z-scores precomputed.
#[derive(Clone, Debug)]
pub struct TermCorpus {
    region_order: Vec<String>,
    divisor: StdDivisor,
    terms: Vec<CorpusTerm>,
    // term-major, each row aligned to region_order
    z_matrix: Vec<f64>,
}

impl TermCorpus {
    pub fn region_order(&self) -> &[String] {
        &self.region_order
    }

    pub fn terms(&self) -> &[CorpusTerm] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn divisor(&self) -> StdDivisor {
        self.divisor
    }

    fn z_row(&self, i: usize) -> &[f64] {
        let n = self.region_order.len();
        &self.z_matrix[i * n..(i + 1) * n]
    }
}

pub fn build_corpus(entries: Vec<(String, RegionSeries)>) -> Result<TermCorpus> {
    build_corpus_with(entries, StdDivisor::Population)
}

pub fn build_corpus_with(
    entries: Vec<(String, RegionSeries)>,
    divisor: StdDivisor,
) -> Result<TermCorpus> {
    let Some((_, first)) = entries.first() else {
        return Err(Error::Empty("corpus has no terms"));
    };
    let region_order: Vec<String> = first.regions().map(str::to_string).collect();
    let mut seen = HashSet::new();
    let mut terms = Vec::with_capacity(entries.len());
    let mut z_matrix = Vec::with_capacity(entries.len() * region_order.len());
    for (term, raw) in entries {
        if !seen.insert(term.to_lowercase()) {
            return Err(Error::DuplicateTerm(term));
        }
        check_same_regions(
            &format!("corpus term `{term}`"),
            raw.values().keys(),
            region_order.iter(),
        )?;
        let z = ZScoredSeries::from_series_with(&raw, divisor).map_err(|e| match e {
            Error::Degenerate { .. } => Error::Degenerate { name: term.clone() },
            other => other,
        })?;
        z_matrix.extend(z.values().values());
        terms.push(CorpusTerm { term, raw, z });
    }
    Ok(TermCorpus {
        region_order,
        divisor,
        terms,
        z_matrix,
    })
}

/// A corpus term with its correlation against a target.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedTerm {
    pub term: String,
    pub r: f64,
    pub z_series: ZScoredSeries,
}

/// Descending by `r`, ties broken by term.
pub fn rank_order(a: &RankedTerm, b: &RankedTerm) -> Ordering {
    b.r.total_cmp(&a.r).then_with(|| a.term.cmp(&b.term))
}

/// The `k` corpus terms whose regional series correlate most strongly
/// (signed, descending) with `target`.
pub fn top_k_correlated(
    corpus: &TermCorpus,
    target: &RegionSeries,
    k: usize,
) -> Result<Vec<RankedTerm>> {
    let aligned = target.aligned(&corpus.region_order)?;
    let target_z = crate::series::zscore_named(target.name(), &aligned, corpus.divisor)?;
    let n = corpus.region_order.len();
    let denom = match corpus.divisor {
        StdDivisor::Population => n as f64,
        StdDivisor::Sample => (n - 1) as f64,
    };
    let mut scored: Vec<(usize, f64)> = (0..corpus.terms.len())
        .into_par_iter()
        .map(|i| {
            let dot: f64 = corpus
                .z_row(i)
                .iter()
                .zip(&target_z)
                .map(|(a, b)| a * b)
                .sum();
            (i, (dot / denom).clamp(-1.0, 1.0))
        })
        .collect();
    scored.sort_by(|(i, ri), (j, rj)| {
        rj.total_cmp(ri)
            .then_with(|| corpus.terms[*i].term.cmp(&corpus.terms[*j].term))
    });
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(i, r)| RankedTerm {
            term: corpus.terms[i].term.clone(),
            r,
            z_series: corpus.terms[i].z.clone(),
        })
        .collect())
}

/// Word-stem relevance filter standing in for manual review of terms.
///
/// A term passes when no word starts with a blocked stem and, if any allow
/// stems are given, at least one word starts with an allowed stem.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Lexicon {
    pub allow: BTreeSet<String>,
    pub block: BTreeSet<String>,
}

impl Lexicon {
    /// One stem per line; `-stem` blocks, `+stem` or a bare stem allows,
    /// `#` starts a comment.
    pub fn parse(text: &str) -> Self {
        let mut lex = Lexicon::default();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(stem) = line.strip_prefix('-') {
                lex.block.insert(stem.trim().to_lowercase());
            } else {
                let stem = line.strip_prefix('+').unwrap_or(line);
                lex.allow.insert(stem.trim().to_lowercase());
            }
        }
        lex
    }

    pub fn passes(&self, term: &str) -> bool {
        let lower = term.to_lowercase();
        let words: Vec<&str> = lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .collect();
        let hit = |stems: &BTreeSet<String>| {
            words
                .iter()
                .any(|w| stems.iter().any(|s| w.starts_with(s.as_str())))
        };
        if hit(&self.block) {
            return false;
        }
        self.allow.is_empty() || hit(&self.allow)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectionConfig {
    pub max_terms: usize,
    pub relevance: Lexicon,
    pub dedup_plural: bool,
    /// Terms below this correlation are dropped; `None` keeps everything.
    pub min_r: Option<f64>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            max_terms: 5,
            relevance: Lexicon::default(),
            dedup_plural: true,
            min_r: None,
        }
    }
}

/// True when one term equals the other after stripping a trailing
/// "s" or "es" (case-folded).
pub fn plural_siblings(a: &str, b: &str) -> bool {
    let a = a.to_lowercase();
    let b = b.to_lowercase();
    if a == b {
        return false;
    }
    let strips_to = |x: &str, y: &str| {
        x.strip_suffix("es") == Some(y) || x.strip_suffix('s') == Some(y)
    };
    strips_to(&a, &b) || strips_to(&b, &a)
}

/// Walks `ranked` in order, keeping relevant terms until `max_terms` are
/// selected. An empty result is valid: the variable has no usable terms.
pub fn select_terms(ranked: &[RankedTerm], cfg: &SelectionConfig) -> Vec<RankedTerm> {
    let mut selected: Vec<RankedTerm> = Vec::new();
    for cand in ranked {
        if selected.len() >= cfg.max_terms.max(1) {
            break;
        }
        if cfg.min_r.is_some_and(|min| cand.r < min) {
            continue;
        }
        if !cfg.relevance.passes(&cand.term) {
            continue;
        }
        if cfg.dedup_plural && selected.iter().any(|s| plural_siblings(&s.term, &cand.term)) {
            log::debug!("skipping `{}`: singular/plural of a selected term", cand.term);
            continue;
        }
        selected.push(cand.clone());
    }
    selected
}

/// Correlation of each ranked term keyed by name, for report cross-checks.
pub fn r_by_term(ranked: &[RankedTerm]) -> BTreeMap<&str, f64> {
    ranked.iter().map(|t| (t.term.as_str(), t.r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::pearson_r;
    use proptest::prelude::*;

    fn series(name: &str, vals: &[f64]) -> RegionSeries {
        RegionSeries::new(
            name,
            vals.iter()
                .enumerate()
                .map(|(i, v)| (format!("R{i:02}"), *v)),
        )
        .unwrap()
    }

    fn ranked(term: &str, r: f64) -> RankedTerm {
        RankedTerm {
            term: term.into(),
            r,
            z_series: ZScoredSeries::from_series(&series(term, &[1.0, 2.0, 3.0])).unwrap(),
        }
    }

    #[test]
    fn corpus_fixes_sorted_region_order() {
        let a = RegionSeries::new("a", [("C", 1.0), ("A", 2.0), ("B", 4.0)]).unwrap();
        let b = RegionSeries::new("b", [("B", 1.0), ("C", 2.0), ("A", 0.0)]).unwrap();
        let c = build_corpus(vec![("a".into(), a), ("b".into(), b)]).unwrap();
        assert_eq!(c.region_order(), ["A", "B", "C"]);
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn corpus_errors() {
        let s = series("x", &[1.0, 2.0, 3.0]);
        let err = build_corpus(vec![
            ("potty train".into(), s.clone()),
            ("Potty Train".into(), s.clone()),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateTerm(_)));

        let flat = series("flat", &[2.0, 2.0, 2.0]);
        match build_corpus(vec![("ok".into(), s.clone()), ("flat term".into(), flat)]) {
            Err(Error::Degenerate { name }) => assert_eq!(name, "flat term"),
            other => panic!("unexpected {other:?}"),
        }

        let other = RegionSeries::new("o", [("R00", 1.0), ("R01", 2.0), ("X", 3.0)]).unwrap();
        assert!(matches!(
            build_corpus(vec![("a".into(), s), ("b".into(), other)]),
            Err(Error::RegionMismatch { .. })
        ));
    }

    #[test]
    fn affine_copy_first_and_negation_last() {
        let target = series("t", &[3.0, 1.0, 4.0, 1.5, 5.0, 9.0, 2.0, 6.0]);
        let vals: Vec<f64> = target.values().values().copied().collect();
        let copy: Vec<f64> = vals.iter().map(|v| 2.0 * v + 7.0).collect();
        let neg: Vec<f64> = vals.iter().map(|v| -v).collect();
        let other = [1.0, 2.0, 1.0, 3.0, 1.0, 2.0, 5.0, 1.0];
        let corpus = build_corpus(vec![
            ("neg".into(), series("neg", &neg)),
            ("other".into(), series("other", &other)),
            ("copy".into(), series("copy", &copy)),
        ])
        .unwrap();
        let top = top_k_correlated(&corpus, &target, 50).unwrap();
        assert_eq!(top.len(), 3);
        assert_eq!(top[0].term, "copy");
        assert!((top[0].r - 1.0).abs() < 1e-12);
        assert_eq!(top[2].term, "neg");
        assert!((top[2].r + 1.0).abs() < 1e-12);
        let direct = pearson_r(&vals, &other).unwrap();
        assert!((top[1].r - direct).abs() < 1e-12);
    }

    #[test]
    fn target_must_cover_corpus_regions() {
        let corpus = build_corpus(vec![("a".into(), series("a", &[1.0, 2.0, 4.0]))]).unwrap();
        let target = RegionSeries::new("t", [("R00", 1.0), ("R01", 2.0), ("Z", 3.0)]).unwrap();
        assert!(matches!(
            top_k_correlated(&corpus, &target, 5),
            Err(Error::RegionMismatch { .. })
        ));
        let flat = series("t", &[1.0, 1.0, 1.0]);
        assert!(matches!(
            top_k_correlated(&corpus, &flat, 5),
            Err(Error::Degenerate { .. })
        ));
    }

    #[test]
    fn equal_r_ties_break_by_term() {
        let s = series("x", &[1.0, 2.0, 4.0]);
        let corpus = build_corpus(vec![
            ("zeta".into(), s.clone()),
            ("alpha".into(), s.clone()),
            ("mid".into(), s.clone()),
        ])
        .unwrap();
        let top = top_k_correlated(&corpus, &s, 3).unwrap();
        let names: Vec<&str> = top.iter().map(|t| t.term.as_str()).collect();
        assert_eq!(names, ["alpha", "mid", "zeta"]);
    }

    #[test]
    fn plural_rule() {
        assert!(plural_siblings("biblical names", "biblical name"));
        assert!(plural_siblings("Nursing Pad", "nursing pads"));
        assert!(plural_siblings("box", "boxes"));
        assert!(!plural_siblings("potty train", "how to potty train"));
        assert!(!plural_siblings("same", "same"));
    }

    #[test]
    fn dedup_keeps_higher_correlated_sibling() {
        let list = vec![ranked("biblical names", 0.77), ranked("biblical name", 0.70)];
        let out = select_terms(&list, &SelectionConfig::default());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].term, "biblical names");

        let no_dedup = SelectionConfig {
            dedup_plural: false,
            ..Default::default()
        };
        assert_eq!(select_terms(&list, &no_dedup).len(), 2);
    }

    #[test]
    fn cap_at_max_terms() {
        let list: Vec<RankedTerm> = (0..7)
            .map(|i| ranked(&format!("baby thing {i}"), 0.9 - i as f64 * 0.01))
            .collect();
        let out = select_terms(&list, &SelectionConfig::default());
        assert_eq!(out.len(), 5);
        assert_eq!(out, list[..5].to_vec());
    }

    #[test]
    fn all_blocked_gives_empty_selection() {
        let list = vec![ranked("used cars", 0.8), ranked("car dealer", 0.7)];
        let cfg = SelectionConfig {
            relevance: Lexicon::parse("baby\npregnan\n-car\n"),
            ..Default::default()
        };
        assert!(select_terms(&list, &cfg).is_empty());
    }

    #[test]
    fn lexicon_matching() {
        let lex = Lexicon::parse("# fertility\n+pregnan\nbaby\n-real\n");
        assert!(lex.passes("flying while pregnant"));
        assert!(lex.passes("Baby Stuffy Nose"));
        assert!(!lex.passes("real baby estate"));
        assert!(!lex.passes("used cars"));
        assert!(Lexicon::default().passes("anything at all"));
    }

    #[test]
    fn min_r_threshold() {
        let list = vec![ranked("a", 0.9), ranked("b", 0.2), ranked("c", -0.1)];
        let cfg = SelectionConfig {
            min_r: Some(0.5),
            ..Default::default()
        };
        assert_eq!(select_terms(&list, &cfg).len(), 1);
        assert_eq!(select_terms(&list, &SelectionConfig::default()).len(), 3);
    }

    fn corpus_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
        (5usize..12, 2usize..25).prop_flat_map(|(n, m)| {
            (
                prop::collection::vec(prop::collection::vec(-10.0f64..10.0, n), m),
                prop::collection::vec(-10.0f64..10.0, n),
            )
        })
    }

    fn make_corpus(rows: &[Vec<f64>]) -> Option<TermCorpus> {
        let entries = rows
            .iter()
            .enumerate()
            .map(|(i, r)| (format!("term {i:03}"), series("t", r)))
            .collect();
        build_corpus(entries).ok()
    }

    proptest! {
        #[test]
        fn topk_prefix_and_permutation((rows, target) in corpus_strategy(), k1 in 1usize..10) {
            let Some(corpus) = make_corpus(&rows) else { return Ok(()) };
            let target = series("target", &target);
            prop_assume!(crate::series::zscore(&target.values().values().copied().collect::<Vec<_>>()).is_ok());
            let all = top_k_correlated(&corpus, &target, corpus.len()).unwrap();
            let mut names: Vec<&str> = all.iter().map(|t| t.term.as_str()).collect();
            names.sort();
            let mut expected: Vec<&str> = corpus.terms().iter().map(|t| t.term.as_str()).collect();
            expected.sort();
            prop_assert_eq!(names, expected);
            let k1 = k1.min(corpus.len());
            let part = top_k_correlated(&corpus, &target, k1).unwrap();
            prop_assert_eq!(&all[..k1], &part[..]);
        }

        #[test]
        fn topk_affine_target_invariance((rows, target) in corpus_strategy(), a in 0.01f64..100.0, b in -100.0f64..100.0) {
            let Some(corpus) = make_corpus(&rows) else { return Ok(()) };
            let t = series("target", &target);
            prop_assume!(crate::series::zscore(&target).map(|_| ()).is_ok());
            prop_assume!(crate::series::std_dev(&target, StdDivisor::Population) > 1e-3);
            let moved = series("target", &target.iter().map(|x| a * x + b).collect::<Vec<_>>());
            let base = top_k_correlated(&corpus, &t, corpus.len()).unwrap();
            let other = top_k_correlated(&corpus, &moved, corpus.len()).unwrap();
            for (p, q) in base.iter().zip(&other) {
                prop_assert!((p.r - q.r).abs() < 1e-9);
            }
            // order can only differ among near-ties
            for w in other.windows(2) {
                prop_assert!(w[0].r >= w[1].r);
            }
        }

        #[test]
        fn selection_invariants(rs in prop::collection::vec(-1.0f64..1.0, 0..30), max_terms in 1usize..8) {
            let mut list: Vec<RankedTerm> = rs.iter().enumerate()
                .map(|(i, r)| ranked(&format!("{} {i}", if i % 3 == 0 { "car" } else { "baby" }), *r))
                .collect();
            list.sort_by(rank_order);
            let cfg = SelectionConfig {
                max_terms,
                relevance: Lexicon::parse("-car"),
                ..Default::default()
            };
            let out = select_terms(&list, &cfg);
            prop_assert!(out.len() <= max_terms);
            prop_assert!(out.windows(2).all(|w| w[0].r >= w[1].r));
            prop_assert!(out.iter().all(|t| cfg.relevance.passes(&t.term)));
        }
    }
}
