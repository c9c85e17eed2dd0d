//! Bias statistics and classification scores.
//!
//! `r_m(a)` is the share of nouns described by adjective `a` that are
//! masculine, counted by profile membership only. Two languages are compared
//! by the cosine of their `r_m` vectors over adjectives that describe at least
//! `min_support` nouns in both.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::describe::AdjectiveProfile;
use crate::error::{Error, Result};
use crate::lexicon::{Gender, LanguageCode};

pub const DEFAULT_MIN_SUPPORT: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenderRatio {
    pub adjective: String,
    pub r_m: f64,
    /// Distinct nouns whose profile contains the adjective.
    pub support: usize,
    pub masculine_support: usize,
}

impl GenderRatio {
    fn from_counts(adjective: &str, masculine: usize, support: usize) -> Self {
        GenderRatio {
            adjective: adjective.to_string(),
            r_m: masculine as f64 / support as f64,
            support,
            masculine_support: masculine,
        }
    }
}

pub fn masculine_ratio(profiles: &[AdjectiveProfile], adjective: &str) -> Result<GenderRatio> {
    let mut support = 0;
    let mut masculine = 0;
    for profile in profiles.iter().filter(|p| p.contains(adjective)) {
        support += 1;
        if profile.noun.gender == Gender::Masculine {
            masculine += 1;
        }
    }
    if support == 0 {
        return Err(Error::Validation(format!(
            "adjective {adjective:?} describes no noun; its ratio is undefined"
        )));
    }
    Ok(GenderRatio::from_counts(adjective, masculine, support))
}

/// Ratios for every adjective present in any profile, keyed by adjective.
pub fn gender_ratios(profiles: &[AdjectiveProfile]) -> BTreeMap<String, GenderRatio> {
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for profile in profiles {
        let masculine = usize::from(profile.noun.gender == Gender::Masculine);
        for adjective in profile.entries.keys() {
            let slot = counts.entry(adjective).or_default();
            slot.0 += masculine;
            slot.1 += 1;
        }
    }
    counts
        .into_iter()
        .map(|(a, (m, s))| (a.to_string(), GenderRatio::from_counts(a, m, s)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub language: LanguageCode,
    pub adjectives: Vec<String>,
    pub sigma: Vec<f64>,
}

/// Cosine similarity, or `None` when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    // IEEE products commute and the sums run in index order, so the result
    // is symmetric bit for bit
    Some(dot / (na * nb))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Similarity {
    Defined {
        score: f64,
        sigma_p: ScoreVector,
        sigma_q: ScoreVector,
    },
    /// No adjective meets the support threshold in both languages.
    NoOverlap,
}

impl Similarity {
    pub fn score(&self) -> Option<f64> {
        match self {
            Similarity::Defined { score, .. } => Some(*score),
            Similarity::NoOverlap => None,
        }
    }

    pub fn shared(&self) -> &[String] {
        match self {
            Similarity::Defined { sigma_p, .. } => &sigma_p.adjectives,
            Similarity::NoOverlap => &[],
        }
    }
}

/// Adjectives with at least `min_support` nouns in both ratio tables, sorted.
pub fn shared_adjectives(
    ratios_p: &BTreeMap<String, GenderRatio>,
    ratios_q: &BTreeMap<String, GenderRatio>,
    min_support: usize,
) -> Vec<String> {
    ratios_p
        .values()
        .filter(|r| r.support >= min_support)
        .filter(|r| ratios_q.get(&r.adjective).is_some_and(|q| q.support >= min_support))
        .map(|r| r.adjective.clone())
        .collect()
}

pub fn similarity_from_ratios(
    (lang_p, ratios_p): (LanguageCode, &BTreeMap<String, GenderRatio>),
    (lang_q, ratios_q): (LanguageCode, &BTreeMap<String, GenderRatio>),
    min_support: usize,
) -> Result<Similarity> {
    let shared = shared_adjectives(ratios_p, ratios_q, min_support);
    if shared.is_empty() {
        return Ok(Similarity::NoOverlap);
    }
    let sigma = |ratios: &BTreeMap<String, GenderRatio>| -> Vec<f64> { shared.iter().map(|a| ratios[a].r_m).collect() };
    let (sp, sq) = (sigma(ratios_p), sigma(ratios_q));
    let score = cosine(&sp, &sq).ok_or_else(|| {
        Error::UndefinedSimilarity(format!(
            "{lang_p}/{lang_q}: a score vector over {} shared adjectives is all zero",
            shared.len()
        ))
    })?;
    Ok(Similarity::Defined {
        score: score.clamp(0.0, 1.0),
        sigma_p: ScoreVector {
            language: lang_p,
            adjectives: shared.clone(),
            sigma: sp,
        },
        sigma_q: ScoreVector {
            language: lang_q,
            adjectives: shared,
            sigma: sq,
        },
    })
}

pub fn similarity(
    profiles_p: &[AdjectiveProfile],
    profiles_q: &[AdjectiveProfile],
    min_support: usize,
) -> Result<Similarity> {
    let language = |profiles: &[AdjectiveProfile]| {
        profiles
            .first()
            .map(|p| p.noun.language)
            .ok_or_else(|| Error::Validation("similarity needs at least one profile per language".into()))
    };
    let (lp, lq) = (language(profiles_p)?, language(profiles_q)?);
    similarity_from_ratios(
        (lp, &gender_ratios(profiles_p)),
        (lq, &gender_ratios(profiles_q)),
        min_support,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Defined,
    NoOverlap,
    Undefined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityCell {
    pub status: CellStatus,
    pub score: Option<f64>,
    pub shared_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub languages: Vec<LanguageCode>,
    pub min_support: usize,
    /// Row-major, `languages.len()` squared.
    pub cells: Vec<Vec<SimilarityCell>>,
}

impl SimilarityMatrix {
    pub fn get(&self, p: LanguageCode, q: LanguageCode) -> Option<&SimilarityCell> {
        let i = self.languages.iter().position(|&l| l == p)?;
        let j = self.languages.iter().position(|&l| l == q)?;
        Some(&self.cells[i][j])
    }
}

/// Full symmetric matrix. Each unordered pair is computed once and mirrored.
pub fn similarity_matrix(
    ratios: &[(LanguageCode, BTreeMap<String, GenderRatio>)],
    min_support: usize,
) -> SimilarityMatrix {
    let n = ratios.len();
    let blank = SimilarityCell {
        status: CellStatus::NoOverlap,
        score: None,
        shared_count: 0,
    };
    let mut cells = vec![vec![blank; n]; n];
    for i in 0..n {
        for j in i..n {
            let (lp, rp) = (ratios[i].0, &ratios[i].1);
            let (lq, rq) = (ratios[j].0, &ratios[j].1);
            let shared_count = shared_adjectives(rp, rq, min_support).len();
            let cell = match similarity_from_ratios((lp, rp), (lq, rq), min_support) {
                Ok(Similarity::Defined { score, .. }) => SimilarityCell {
                    status: CellStatus::Defined,
                    score: Some(score),
                    shared_count,
                },
                Ok(Similarity::NoOverlap) => SimilarityCell {
                    status: CellStatus::NoOverlap,
                    score: None,
                    shared_count,
                },
                Err(_) => SimilarityCell {
                    status: CellStatus::Undefined,
                    score: None,
                    shared_count,
                },
            };
            cells[j][i] = cell.clone();
            cells[i][j] = cell;
        }
    }
    SimilarityMatrix {
        languages: ratios.iter().map(|(l, _)| *l).collect(),
        min_support,
        cells,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub n: usize,
    pub overall_accuracy: f64,
    /// Zero when there are no masculine items.
    pub masculine_accuracy: f64,
    /// Zero when there are no feminine items.
    pub feminine_accuracy: f64,
    pub f1_feminine: f64,
    pub f1_masculine: f64,
    pub f1_macro: f64,
    pub support_masculine: usize,
    pub support_feminine: usize,
    pub correct_masculine: usize,
    pub correct_feminine: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn classification_metrics(predicted: &[Gender], truths: &[Gender]) -> Result<EvalMetrics> {
    if predicted.len() != truths.len() {
        return Err(Error::Validation(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truths.len()
        )));
    }
    if truths.is_empty() {
        return Err(Error::Validation("cannot score an empty evaluation set".into()));
    }
    // mm: true m predicted m, mf: true m predicted f, ...
    let (mut mm, mut mf, mut fm, mut ff) = (0, 0, 0, 0);
    for (p, t) in predicted.iter().zip(truths) {
        match (t, p) {
            (Gender::Masculine, Gender::Masculine) => mm += 1,
            (Gender::Masculine, Gender::Feminine) => mf += 1,
            (Gender::Feminine, Gender::Masculine) => fm += 1,
            (Gender::Feminine, Gender::Feminine) => ff += 1,
        }
    }
    let f1_feminine = f1(ff, mf, fm);
    let f1_masculine = f1(mm, fm, mf);
    Ok(EvalMetrics {
        n: truths.len(),
        overall_accuracy: ratio(mm + ff, truths.len()),
        masculine_accuracy: ratio(mm, mm + mf),
        feminine_accuracy: ratio(ff, ff + fm),
        f1_feminine,
        f1_masculine,
        f1_macro: (f1_feminine + f1_masculine) / 2.0,
        support_masculine: mm + mf,
        support_feminine: ff + fm,
        correct_masculine: mm,
        correct_feminine: ff,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Validation(format!("{}: {other:?}", path.display())),
    }
}

/// `adjective,r_m,support` rows in adjective order.
pub fn write_ratios_csv<'a>(path: &Path, ratios: impl IntoIterator<Item = &'a GenderRatio>) -> Result<()> {
    let mut w = csv_writer(path)?;
    let io = |e| csv_error(path, e);
    w.write_record(["adjective", "r_m", "support"]).map_err(io)?;
    for r in ratios {
        w.write_record([r.adjective.clone(), r.r_m.to_string(), r.support.to_string()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `lang_p,lang_q,S,shared_count` for every ordered pair; undefined scores are
/// left empty and marked in a status column.
pub fn write_similarity_csv(path: &Path, matrix: &SimilarityMatrix) -> Result<()> {
    let mut w = csv_writer(path)?;
    let io = |e| csv_error(path, e);
    w.write_record(["lang_p", "lang_q", "S", "shared_count", "status"])
        .map_err(io)?;
    for (i, p) in matrix.languages.iter().enumerate() {
        for (j, q) in matrix.languages.iter().enumerate() {
            let cell = &matrix.cells[i][j];
            let status = serde_json::to_value(cell.status)?;
            w.write_record([
                p.to_string(),
                q.to_string(),
                cell.score.map(|s| s.to_string()).unwrap_or_default(),
                cell.shared_count.to_string(),
                status.as_str().unwrap_or_default().to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Distinct adjectives across a set of profiles.
pub fn vocabulary(profiles: &[AdjectiveProfile]) -> BTreeSet<String> {
    profiles.iter().flat_map(|p| p.entries.keys().cloned()).collect()
}
