//! Embedding tables and classifier input features.
//!
//! A noun's feature is the weighted sum of its pivot adjectives' embeddings,
//! each weighted by `f' = -30 / ln(min(f, 0.98))`.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::describe::AdjectiveProfile;
use crate::error::{Error, Result};
use crate::lexicon::Noun;

/// Frequencies are capped here before scaling; `ln(1) = 0` would otherwise
/// give an infinite weight.
pub const FREQUENCY_CAP: f64 = 0.98;
pub const SCALE_NUMERATOR: f64 = 30.0;
pub const DEFAULT_OOV_WARNING: f64 = 0.5;

/// Plain-text embeddings: `token v1 ... vD` per line, no header.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dimension: usize,
    index: HashMap<String, usize>,
    tokens: Vec<String>,
    data: Vec<f32>,
    source_path: Option<PathBuf>,
}

/// Equal contents in equal order; where the table was loaded from is ignored.
impl PartialEq for EmbeddingTable {
    fn eq(&self, other: &Self) -> bool {
        self.dimension == other.dimension && self.tokens == other.tokens && self.data == other.data
    }
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Self {
        EmbeddingTable {
            dimension,
            index: HashMap::new(),
            tokens: Vec::new(),
            data: Vec::new(),
            source_path: None,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn source_path(&self) -> Option<&Path> {
        self.source_path.as_deref()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.index
            .get(token)
            .map(|&row| &self.data[row * self.dimension..(row + 1) * self.dimension])
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Insert or replace a vector.
    pub fn insert(&mut self, token: &str, vector: &[f32]) -> Result<()> {
        if vector.len() != self.dimension {
            return Err(Error::Dimension {
                expected: self.dimension,
                actual: vector.len(),
            });
        }
        match self.index.get(token) {
            Some(&row) => self.data[row * self.dimension..(row + 1) * self.dimension].copy_from_slice(vector),
            None => {
                self.index.insert(token.to_string(), self.tokens.len());
                self.tokens.push(token.to_string());
                self.data.extend_from_slice(vector);
            }
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut out = std::io::BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        for token in &self.tokens {
            let mut line = token.clone();
            for v in self.get(token).expect("indexed") {
                line.push(' ');
                line.push_str(&v.to_string());
            }
            line.push('\n');
            out.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Load a text embedding file. The dimension is taken from the first line.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut table: Option<EmbeddingTable> = None;
    let mut values: Vec<f32> = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().expect("non-empty line");
        values.clear();
        for field in fields {
            let v: f32 = field
                .parse()
                .map_err(|_| Error::parse(path, line_no, format!("non-numeric component {field:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(path, line_no, format!("non-finite component {field:?}")));
            }
            values.push(v);
        }
        let table = table.get_or_insert_with(|| EmbeddingTable::new(values.len()));
        if values.is_empty() || values.len() != table.dimension {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected {} components, found {}", table.dimension, values.len()),
            ));
        }
        table.insert(token, &values)?;
    }
    let mut table = table.ok_or_else(|| Error::Validation(format!("{}: empty embedding file", path.display())))?;
    table.source_path = Some(path.to_path_buf());
    Ok(table)
}

/// `-30 / ln(min(f, 0.98))` for `f` in `(0, 1]`.
pub fn scale_frequency(f: f64) -> Result<f64> {
    if !(f > 0.0 && f <= 1.0) {
        return Err(Error::Domain(format!("frequency {f} is outside (0, 1]")));
    }
    Ok(-SCALE_NUMERATOR / f.min(FREQUENCY_CAP).ln())
}

/// How profile frequencies weight the embeddings.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// `f'` from [`scale_frequency`].
    #[default]
    Scaled,
    /// The raw frequency `f`.
    Raw,
}

impl Weighting {
    pub fn weight(self, f: f64) -> Result<f64> {
        match self {
            Weighting::Scaled => scale_frequency(f),
            Weighting::Raw if f > 0.0 && f <= 1.0 => Ok(f),
            Weighting::Raw => Err(Error::Domain(format!("frequency {f} is outside (0, 1]"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub noun: Noun,
    pub values: Vec<f64>,
    /// Sum of `f` over adjectives that had an embedding.
    pub covered_mass: f64,
    pub oov_tokens: Vec<String>,
    /// Number of adjectives in the source profile.
    pub profile_len: usize,
}

impl FeatureVector {
    pub fn new(noun: Noun, values: Vec<f64>) -> Self {
        FeatureVector {
            noun,
            values,
            covered_mass: 0.0,
            oov_tokens: Vec::new(),
            profile_len: 0,
        }
    }

    /// True when no adjective had an embedding (the vector is then zero).
    pub fn all_oov(&self) -> bool {
        self.profile_len == self.oov_tokens.len()
    }

    pub fn oov_ratio(&self) -> f64 {
        if self.profile_len == 0 {
            0.0
        } else {
            self.oov_tokens.len() as f64 / self.profile_len as f64
        }
    }
}

/// Weighted sum of adjective embeddings. Out-of-vocabulary adjectives are
/// skipped and recorded.
pub fn featurize(profile: &AdjectiveProfile, table: &EmbeddingTable, weighting: Weighting) -> Result<FeatureVector> {
    if !profile.is_pivot() {
        return Err(Error::Validation(format!(
            "profile of {:?} holds {} adjectives; translate it to the pivot first",
            profile.noun.surface, profile.adjective_language
        )));
    }
    let mut values = vec![0.0f64; table.dimension()];
    let mut covered_mass = 0.0;
    let mut oov_tokens = Vec::new();
    for (adjective, &f) in &profile.entries {
        let weight = weighting.weight(f)?;
        match table.get(adjective) {
            Some(vector) => {
                for (acc, &v) in values.iter_mut().zip(vector) {
                    *acc += weight * f64::from(v);
                }
                covered_mass += f;
            }
            None => oov_tokens.push(adjective.clone()),
        }
    }
    Ok(FeatureVector {
        noun: profile.noun.clone(),
        values,
        covered_mass,
        oov_tokens,
        profile_len: profile.entries.len(),
    })
}
