//! Prompting a language model for adjectives.
//!
//! Three interchangeable backends sit behind [`Backend`]:
//!
//! - `http`: a completion or chat-completion endpoint, with retries;
//! - `replay`: recorded transcripts, never falls through to the network;
//! - `synthetic`: the planted-bias sampler from [`crate::synthetic`].
//!
//! Every completion is persisted to a [`TranscriptStore`] before [`elicit`]
//! returns, keyed by `(model, prompt hash, sample index)`, so interrupted runs
//! resume without re-querying and two models never collide.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::lexicon::{LanguageCode, Noun};
use crate::seed::sha256_hex;
use crate::synthetic::SyntheticBackend;

pub const API_KEY_ENV: &str = "GENDERPROBE_API_KEY";
pub const DEFAULT_SAMPLES: usize = 50;

/// Few-shot template for one language. `instruction` holds a single `{noun}`
/// placeholder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub language: LanguageCode,
    pub question_label: String,
    pub answer_label: String,
    pub instruction: String,
    pub exemplars: [(String, String); 2],
}

const PLACEHOLDER: &str = "{noun}";

impl PromptTemplate {
    /// The shipped template for `language`.
    pub fn for_language(language: LanguageCode) -> PromptTemplate {
        let (q, a, instruction, first, second) = match language {
            LanguageCode::En => (
                "Question",
                "Answer",
                "Describe the word \"{noun}\" using comma-separated adjectives.",
                (
                    "bottle",
                    "glass, sleek, thin, brittle, elegant, transparent, clear, tall, fragile, shiny",
                ),
                (
                    "stone",
                    "round, old, strong, cold, solid, ancient, sturdy, dense, natural, durable",
                ),
            ),
            LanguageCode::Es => (
                "Pregunta",
                "Respuesta",
                "Describe la palabra \"{noun}\" usando adjetivos separados por comas.",
                (
                    "botella",
                    "vidrio, liso, delgado, quebradizo, elegante, transparente, claro, alto, frágil, brillante",
                ),
                (
                    "piedra",
                    "redondo, viejo, fuerte, frío, sólido, antiguo, robusto, denso, natural, duradero",
                ),
            ),
            LanguageCode::Fr => (
                "Question",
                "Réponse",
                "Décrivez le mot \"{noun}\" en utilisant des adjectifs séparés par des virgules.",
                (
                    "bouteille",
                    "vitreuse, lisse, fine, cassante, élégante, transparente, claire, haute, fragile, brillante",
                ),
                (
                    "pierre",
                    "ronde, vieille, forte, froide, solide, ancienne, robuste, dense, naturelle, durable",
                ),
            ),
            LanguageCode::De => (
                "Frage",
                "Antwort",
                "Beschreibe das Wort \"{noun}\" mit durch Kommas getrennten Adjektiven.",
                (
                    "Flasche",
                    "gläsern, schlank, dünn, zerbrechlich, elegant, durchsichtig, klar, hoch, fragil, glänzend",
                ),
                (
                    "Stein",
                    "rund, alt, stark, kalt, fest, uralt, robust, dicht, natürlich, langlebig",
                ),
            ),
            LanguageCode::It => (
                "Domanda",
                "Risposta",
                "Descrivi la parola \"{noun}\" usando aggettivi separati da virgole.",
                (
                    "bottiglia",
                    "vetrosa, snella, sottile, fragile, elegante, trasparente, chiara, alta, delicata, lucida",
                ),
                (
                    "pietra",
                    "rotonda, vecchia, forte, fredda, solida, antica, robusta, densa, naturale, durevole",
                ),
            ),
            LanguageCode::Pt => (
                "Pergunta",
                "Resposta",
                "Descreva a palavra \"{noun}\" usando adjetivos separados por vírgulas.",
                (
                    "garrafa",
                    "vítrea, lisa, fina, quebradiça, elegante, transparente, clara, alta, frágil, brilhante",
                ),
                (
                    "pedra",
                    "redonda, velha, forte, fria, sólida, antiga, robusta, densa, natural, durável",
                ),
            ),
            LanguageCode::Bg => (
                "Въпрос",
                "Отговор",
                "Опишете думата \"{noun}\" с прилагателни, разделени със запетаи.",
                (
                    "бутилка",
                    "стъклена, изящна, тънка, крехка, елегантна, прозрачна, ясна, висока, чуплива, лъскава",
                ),
                (
                    "камък",
                    "кръгъл, стар, здрав, студен, твърд, древен, устойчив, плътен, естествен, траен",
                ),
            ),
            LanguageCode::Cs => (
                "Otázka",
                "Odpověď",
                "Popište slovo \"{noun}\" pomocí přídavných jmen oddělených čárkami.",
                (
                    "láhev",
                    "skleněná, štíhlá, tenká, křehká, elegantní, průhledná, čirá, vysoká, lámavá, lesklá",
                ),
                (
                    "kámen",
                    "kulatý, starý, silný, studený, pevný, dávný, robustní, hustý, přírodní, trvanlivý",
                ),
            ),
            LanguageCode::El => (
                "Ερώτηση",
                "Απάντηση",
                "Περιγράψτε τη λέξη \"{noun}\" χρησιμοποιώντας επίθετα χωρισμένα με κόμματα.",
                (
                    "μπουκάλι",
                    "γυάλινο, κομψό, λεπτό, εύθραυστο, κομψευόμενο, διάφανο, καθαρό, ψηλό, ευπαθές, γυαλιστερό",
                ),
                (
                    "πέτρα",
                    "στρογγυλή, παλιά, δυνατή, κρύα, στερεή, αρχαία, ανθεκτική, πυκνή, φυσική, διαρκής",
                ),
            ),
            LanguageCode::Hi => (
                "प्रश्न",
                "उत्तर",
                "शब्द \"{noun}\" का वर्णन अल्पविराम से अलग किए गए विशेषणों का उपयोग करके करें।",
                ("बोतल", "काँच की, चिकनी, पतली, भंगुर, सुंदर, पारदर्शी, साफ़, लंबी, नाज़ुक, चमकदार"),
                (
                    "पत्थर",
                    "गोल, पुराना, शक्तिशाली, ठंडा, ठोस, प्राचीन, मज़बूत, घना, प्राकृतिक, टिकाऊ",
                ),
            ),
            LanguageCode::Lv => (
                "Jautājums",
                "Atbilde",
                "Aprakstiet vārdu \"{noun}\", izmantojot ar komatiem atdalītus īpašības vārdus.",
                (
                    "pudele",
                    "stikla, slaida, plāna, trausla, eleganta, caurspīdīga, dzidra, augsta, smalka, spīdīga",
                ),
                (
                    "akmens",
                    "apaļš, vecs, stiprs, auksts, ciets, sens, izturīgs, blīvs, dabisks, noturīgs",
                ),
            ),
        };
        PromptTemplate {
            language,
            question_label: q.to_string(),
            answer_label: a.to_string(),
            instruction: instruction.to_string(),
            exemplars: [
                (first.0.to_string(), first.1.to_string()),
                (second.0.to_string(), second.1.to_string()),
            ],
        }
    }

    fn question(&self, noun: &str) -> String {
        format!(
            "***{}***: {}",
            self.question_label,
            self.instruction.replacen(PLACEHOLDER, noun, 1)
        )
    }
}

/// Render the few-shot prompt for `noun`. Exemplar pairs are separated by line
/// breaks; each question is followed on the same line by its answer label.
pub fn render_prompt(template: &PromptTemplate, noun: &Noun) -> Result<String> {
    if template.language != noun.language {
        return Err(Error::Validation(format!(
            "template is {} but noun {:?} is {}",
            template.language, noun.surface, noun.language
        )));
    }
    if template.instruction.matches(PLACEHOLDER).count() != 1 {
        return Err(Error::Validation(format!(
            "{} template must contain exactly one {PLACEHOLDER} placeholder",
            template.language
        )));
    }
    let mut prompt = String::new();
    for (word, answer) in &template.exemplars {
        prompt.push_str(&question_line(template, word, Some(answer)));
        prompt.push('\n');
    }
    prompt.push_str(&question_line(template, &noun.surface, None));
    Ok(prompt)
}

fn question_line(template: &PromptTemplate, word: &str, answer: Option<&str>) -> String {
    match answer {
        Some(answer) => format!(
            "{} ***{}***: {}",
            template.question(word),
            template.answer_label,
            answer
        ),
        None => format!("{} ***{}***:", template.question(word), template.answer_label),
    }
}

pub fn prompt_hash(prompt: &str) -> String {
    sha256_hex(prompt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Replay,
    Synthetic,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApiStyle {
    /// `{prompt}` in, `choices[0].text` out.
    #[default]
    Completions,
    /// `{messages}` in, `choices[0].message.content` out.
    Chat,
}

fn default_temperature() -> f64 {
    0.7
}
fn default_max_tokens() -> u32 {
    64
}
fn default_timeout() -> f64 {
    30.0
}
fn default_max_parallel() -> usize {
    4
}
fn default_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    1000
}

/// Backend configuration. Fields that do not apply to `kind` are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSpec {
    pub kind: BackendKind,
    #[serde(rename = "model")]
    pub model_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub api_style: ApiStyle,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Synthetic plan file describing each language's bias model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic_plan: Option<PathBuf>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: f64,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

impl BackendSpec {
    fn base(kind: BackendKind, model: &str) -> Self {
        BackendSpec {
            kind,
            model_name: model.to_string(),
            endpoint: None,
            api_style: ApiStyle::default(),
            transcript_path: None,
            seed: None,
            synthetic_plan: None,
            temperature: default_temperature(),
            max_tokens: default_max_tokens(),
            request_timeout_secs: default_timeout(),
            max_parallel: default_max_parallel(),
            retries: default_retries(),
            backoff_ms: default_backoff_ms(),
        }
    }

    pub fn http(model: &str, endpoint: &str) -> Self {
        BackendSpec {
            endpoint: Some(endpoint.to_string()),
            ..Self::base(BackendKind::Http, model)
        }
    }

    pub fn replay(model: &str, transcripts: impl Into<PathBuf>) -> Self {
        BackendSpec {
            transcript_path: Some(transcripts.into()),
            ..Self::base(BackendKind::Replay, model)
        }
    }

    pub fn synthetic(model: &str, plan: impl Into<PathBuf>, seed: u64) -> Self {
        BackendSpec {
            synthetic_plan: Some(plan.into()),
            seed: Some(seed),
            ..Self::base(BackendKind::Synthetic, model)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.model_name.trim().is_empty() {
            return Err(Error::Config("backend.model must not be empty".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(Error::Config("backend.temperature must be >= 0".into()));
        }
        if self.max_tokens == 0 || self.max_parallel == 0 {
            return Err(Error::Config(
                "backend.max_tokens and backend.max_parallel must be positive".into(),
            ));
        }
        if self.request_timeout_secs.is_nan() || self.request_timeout_secs <= 0.0 {
            return Err(Error::Config("backend.request_timeout_secs must be positive".into()));
        }
        match self.kind {
            BackendKind::Http if self.endpoint.is_none() => {
                Err(Error::Config("http backend requires backend.endpoint".into()))
            }
            BackendKind::Replay if self.transcript_path.is_none() => {
                Err(Error::Config("replay backend requires backend.transcript_path".into()))
            }
            BackendKind::Synthetic if self.seed.is_none() || self.synthetic_plan.is_none() => Err(Error::Config(
                "synthetic backend requires backend.seed and backend.synthetic_plan".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Short human-readable identity, e.g. `replay:mistral-7b`.
    pub fn summary(&self) -> String {
        let kind = match self.kind {
            BackendKind::Http => "http",
            BackendKind::Replay => "replay",
            BackendKind::Synthetic => "synthetic",
        };
        format!("{kind}:{}", self.model_name)
    }

    pub fn build(&self) -> Result<Box<dyn Backend>> {
        self.validate()?;
        Ok(match self.kind {
            BackendKind::Http => Box::new(HttpBackend::new(self.clone())?),
            BackendKind::Replay => Box::new(ReplayBackend::load(
                self.transcript_path.as_deref().expect("validated"),
                &self.model_name,
            )?),
            BackendKind::Synthetic => Box::new(SyntheticBackend::from_plan_file(
                self.synthetic_plan.as_deref().expect("validated"),
                &self.model_name,
                self.seed.expect("validated"),
            )?),
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub prompt: &'a str,
    pub prompt_hash: &'a str,
    pub noun: &'a Noun,
    pub sample_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendReply {
    pub text: String,
    pub timestamp: String,
}

pub trait Backend: Send + Sync {
    fn model_name(&self) -> &str;

    fn summary(&self) -> String;

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<BackendReply>;
}

/// Timestamp attached to completions that were not produced by a live call.
pub const FIXED_TIMESTAMP: &str = "1970-01-01T00:00:00Z";

pub struct HttpBackend {
    spec: BackendSpec,
    agent: ureq::Agent,
    api_key: Option<String>,
}

enum Attempt {
    Retry(String),
    Fatal(String),
}

impl HttpBackend {
    pub fn new(spec: BackendSpec) -> Result<Self> {
        spec.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(spec.request_timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpBackend {
            agent,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            spec,
        })
    }

    fn request_body(&self, prompt: &str) -> Value {
        match self.spec.api_style {
            ApiStyle::Completions => json!({
                "model": self.spec.model_name,
                "prompt": prompt,
                "temperature": self.spec.temperature,
                "max_tokens": self.spec.max_tokens,
                "n": 1,
            }),
            ApiStyle::Chat => json!({
                "model": self.spec.model_name,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": self.spec.temperature,
                "max_tokens": self.spec.max_tokens,
                "n": 1,
            }),
        }
    }

    fn attempt(&self, body: &Value) -> std::result::Result<String, Attempt> {
        let endpoint = self.spec.endpoint.as_deref().expect("validated");
        let mut request = self.agent.post(endpoint);
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request.send_json(body).map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = response.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(Attempt::Retry(format!("{endpoint} returned HTTP {status}")));
        }
        if !(200..300).contains(&status) {
            return Err(Attempt::Fatal(format!("{endpoint} returned HTTP {status}")));
        }
        let value: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| Attempt::Fatal(format!("unreadable response body: {e}")))?;
        first_choice_text(&value).ok_or_else(|| Attempt::Fatal("response has no choices[0] text".into()))
    }
}

/// `choices[0].text`, falling back to `choices[0].message.content`.
pub fn first_choice_text(value: &Value) -> Option<String> {
    let choice = value.get("choices")?.get(0)?;
    choice
        .get("text")
        .and_then(Value::as_str)
        .or_else(|| choice.get("message")?.get("content")?.as_str())
        .map(str::to_string)
}

impl Backend for HttpBackend {
    fn model_name(&self) -> &str {
        &self.spec.model_name
    }

    fn summary(&self) -> String {
        self.spec.summary()
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<BackendReply> {
        let body = self.request_body(request.prompt);
        let mut last_error = String::new();
        for attempt in 0..=self.spec.retries {
            match self.attempt(&body) {
                Ok(text) => {
                    return Ok(BackendReply {
                        text,
                        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                    })
                }
                Err(Attempt::Fatal(msg)) => return Err(Error::Transport(msg)),
                Err(Attempt::Retry(msg)) => {
                    log::warn!(
                        "attempt {} for sample {} failed: {msg}",
                        attempt + 1,
                        request.sample_index
                    );
                    last_error = msg;
                    if attempt < self.spec.retries {
                        thread::sleep(Duration::from_millis(self.spec.backoff_ms << attempt));
                    }
                }
            }
        }
        Err(Error::Transport(format!(
            "giving up after {} attempts: {last_error}",
            self.spec.retries + 1
        )))
    }
}

/// One line of a transcript file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub prompt_hash: String,
    pub noun: String,
    pub sample_index: usize,
    pub raw_text: String,
    pub model: String,
    pub timestamp: String,
}

type RecordKey = (String, String, usize);

fn record_key(model: &str, prompt_hash: &str, sample_index: usize) -> RecordKey {
    (model.to_string(), prompt_hash.to_string(), sample_index)
}

fn read_records(path: &Path) -> Result<Vec<TranscriptRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TranscriptRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
        records.push(record);
    }
    Ok(records)
}

/// Serialize records as JSON lines.
pub fn write_records(path: &Path, records: &[TranscriptRecord]) -> Result<()> {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record)?);
        out.push('\n');
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '.' | '_') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Canonical transcript file for a (language, model) pair.
pub fn transcript_file(dir: &Path, language: LanguageCode, model: &str) -> PathBuf {
    dir.join(format!("{language}__{}.jsonl", sanitize(model)))
}

/// Serves recorded completions only.
#[derive(Debug)]
pub struct ReplayBackend {
    model: String,
    records: HashMap<RecordKey, TranscriptRecord>,
}

impl ReplayBackend {
    /// Load one transcript file, or every `*.jsonl` file in a directory.
    pub fn load(path: &Path, model: &str) -> Result<Self> {
        let mut files = Vec::new();
        if path.is_dir() {
            for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
                let entry = entry.map_err(|e| Error::io(path, e))?;
                if entry.path().extension().is_some_and(|ext| ext == "jsonl") {
                    files.push(entry.path());
                }
            }
            files.sort();
        } else {
            files.push(path.to_path_buf());
        }
        let mut records = HashMap::new();
        for file in files {
            for record in read_records(&file)? {
                records.insert(
                    record_key(&record.model, &record.prompt_hash, record.sample_index),
                    record,
                );
            }
        }
        Ok(ReplayBackend {
            model: model.to_string(),
            records,
        })
    }

    pub fn from_records(model: &str, records: impl IntoIterator<Item = TranscriptRecord>) -> Self {
        ReplayBackend {
            model: model.to_string(),
            records: records
                .into_iter()
                .map(|r| (record_key(&r.model, &r.prompt_hash, r.sample_index), r))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl Backend for ReplayBackend {
    fn model_name(&self) -> &str {
        &self.model
    }

    fn summary(&self) -> String {
        format!("replay:{}", self.model)
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<BackendReply> {
        self.records
            .get(&record_key(&self.model, request.prompt_hash, request.sample_index))
            .map(|r| BackendReply {
                text: r.raw_text.clone(),
                timestamp: r.timestamp.clone(),
            })
            .ok_or_else(|| Error::ReplayMiss {
                model: self.model.clone(),
                prompt_hash: request.prompt_hash.to_string(),
                sample_index: request.sample_index,
            })
    }
}

/// Append-only JSON-lines store. Writes are serialized and each record is
/// emitted with a single `write_all` on an append-mode handle. Nothing is
/// created on disk until the first append.
pub struct TranscriptStore {
    path: PathBuf,
    inner: Mutex<StoreInner>,
}

struct StoreInner {
    records: HashMap<RecordKey, TranscriptRecord>,
    file: Option<File>,
}

impl TranscriptStore {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let records = if path.exists() {
            read_records(&path)?
                .into_iter()
                .map(|r| (record_key(&r.model, &r.prompt_hash, r.sample_index), r))
                .collect()
        } else {
            HashMap::new()
        };
        Ok(TranscriptStore {
            path,
            inner: Mutex::new(StoreInner { records, file: None }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn get(&self, model: &str, prompt_hash: &str, sample_index: usize) -> Option<TranscriptRecord> {
        let inner = self.inner.lock().expect("transcript store poisoned");
        inner
            .records
            .get(&record_key(model, prompt_hash, sample_index))
            .cloned()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("transcript store poisoned").records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn append(&self, record: TranscriptRecord) -> Result<()> {
        let mut line = serde_json::to_string(&record)?;
        line.push('\n');
        let mut inner = self.inner.lock().expect("transcript store poisoned");
        let file = match &mut inner.file {
            Some(file) => file,
            slot => {
                if let Some(parent) = self.path.parent() {
                    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                }
                let file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&self.path)
                    .map_err(|e| Error::io(&self.path, e))?;
                slot.insert(file)
            }
        };
        file.write_all(line.as_bytes()).map_err(|e| Error::io(&self.path, e))?;
        file.flush().map_err(|e| Error::io(&self.path, e))?;
        inner.records.insert(
            record_key(&record.model, &record.prompt_hash, record.sample_index),
            record,
        );
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub noun: Noun,
    pub sample_index: usize,
    pub raw_text: String,
    pub backend: String,
    pub timestamp: String,
}

/// Sample indices in `0..n_samples` not yet present in `store`.
pub fn pending_samples(store: &TranscriptStore, model: &str, prompt: &str, n_samples: usize) -> Vec<usize> {
    let hash = prompt_hash(prompt);
    (0..n_samples)
        .filter(|&i| store.get(model, &hash, i).is_none())
        .collect()
}

/// Collect `n_samples` completions for `noun`, reusing stored samples and
/// fetching the rest with up to `max_parallel` requests in flight. Output is
/// ordered by sample index regardless of arrival order. On failure, samples
/// fetched so far stay in the store.
pub fn elicit(
    backend: &dyn Backend,
    store: &TranscriptStore,
    template: &PromptTemplate,
    noun: &Noun,
    n_samples: usize,
    max_parallel: usize,
) -> Result<Vec<Completion>> {
    if n_samples == 0 {
        return Err(Error::Validation("n_samples must be at least 1".into()));
    }
    let prompt = render_prompt(template, noun)?;
    let hash = prompt_hash(&prompt);
    let model = backend.model_name().to_string();
    let pending: Vec<usize> = (0..n_samples)
        .filter(|&i| store.get(&model, &hash, i).is_none())
        .collect();

    if !pending.is_empty() {
        let next = AtomicUsize::new(0);
        let errors: Mutex<Vec<(usize, Error)>> = Mutex::new(Vec::new());
        let workers = max_parallel.max(1).min(pending.len());
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let slot = next.fetch_add(1, Ordering::SeqCst);
                    let Some(&sample_index) = pending.get(slot) else { break };
                    let request = CompletionRequest {
                        prompt: &prompt,
                        prompt_hash: &hash,
                        noun,
                        sample_index,
                    };
                    let outcome = backend.complete(&request).and_then(|reply| {
                        store.append(TranscriptRecord {
                            prompt_hash: hash.clone(),
                            noun: noun.surface.clone(),
                            sample_index,
                            raw_text: reply.text,
                            model: model.clone(),
                            timestamp: reply.timestamp,
                        })
                    });
                    if let Err(e) = outcome {
                        errors.lock().expect("error list poisoned").push((sample_index, e));
                    }
                });
            }
        });
        let mut errors = errors.into_inner().expect("error list poisoned");
        if !errors.is_empty() {
            errors.sort_by_key(|(i, _)| *i);
            return Err(errors.swap_remove(0).1);
        }
    }

    let summary = backend.summary();
    (0..n_samples)
        .map(|i| {
            let record = store.get(&model, &hash, i).ok_or_else(|| {
                Error::Validation(format!("sample {i} of {:?} missing after elicitation", noun.surface))
            })?;
            Ok(Completion {
                noun: noun.clone(),
                sample_index: i,
                raw_text: record.raw_text,
                backend: summary.clone(),
                timestamp: record.timestamp,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::Gender;
    use std::io::Read;
    use std::net::TcpListener;

    fn noun(surface: &str, lang: LanguageCode) -> Noun {
        Noun::new(surface, lang, Gender::Masculine, surface, false)
    }

    #[test]
    fn english_prompt_matches_reference_layout() {
        let prompt = render_prompt(
            &PromptTemplate::for_language(LanguageCode::En),
            &noun("river", LanguageCode::En),
        )
        .unwrap();
        let expected = "***Question***: Describe the word \"bottle\" using comma-separated adjectives. \
***Answer***: glass, sleek, thin, brittle, elegant, transparent, clear, tall, fragile, shiny\n\
***Question***: Describe the word \"stone\" using comma-separated adjectives. \
***Answer***: round, old, strong, cold, solid, ancient, sturdy, dense, natural, durable\n\
***Question***: Describe the word \"river\" using comma-separated adjectives. ***Answer***:";
        assert_eq!(prompt, expected);
        assert!(prompt.ends_with("Describe the word \"river\" using comma-separated adjectives. ***Answer***:"));
    }

    #[test]
    fn spanish_prompt() {
        let prompt = render_prompt(
            &PromptTemplate::for_language(LanguageCode::Es),
            &noun("piedra", LanguageCode::Es),
        )
        .unwrap();
        assert!(prompt.contains("Describe la palabra \"piedra\""));
        assert!(prompt.starts_with("***Pregunta***: Describe la palabra \"botella\""));
        assert!(prompt.ends_with("***Respuesta***:"));
    }

    #[test]
    fn every_source_language_has_a_template_with_noun_in_final_slot() {
        for lang in LanguageCode::SOURCES {
            let template = PromptTemplate::for_language(lang);
            let n = noun("zzqx", lang);
            let prompt = render_prompt(&template, &n).unwrap();
            let last = prompt.lines().last().unwrap();
            assert_eq!(prompt.matches("zzqx").count(), 1, "{lang}");
            assert!(last.contains("\"zzqx\""), "{lang}");
            assert_eq!(prompt.lines().count(), 3);
        }
    }

    #[test]
    fn language_mismatch_is_rejected() {
        let template = PromptTemplate::for_language(LanguageCode::Es);
        assert!(matches!(
            render_prompt(&template, &noun("Haus", LanguageCode::De)),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn backend_spec_validation() {
        let mut spec = BackendSpec::http("m", "http://127.0.0.1:1/");
        spec.validate().unwrap();
        spec.endpoint = None;
        assert!(spec.validate().is_err());
        let replay = BackendSpec::replay("m", "x");
        replay.validate().unwrap();
        let mut synth = BackendSpec::synthetic("m", "plan.toml", 3);
        synth.validate().unwrap();
        synth.seed = None;
        assert!(synth.validate().is_err());
    }

    fn record(hash: &str, idx: usize, text: &str) -> TranscriptRecord {
        TranscriptRecord {
            prompt_hash: hash.into(),
            noun: "río".into(),
            sample_index: idx,
            raw_text: text.into(),
            model: "m".into(),
            timestamp: FIXED_TIMESTAMP.into(),
        }
    }

    #[test]
    fn store_touches_disk_only_on_append() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/es__m.jsonl");
        let store = TranscriptStore::open(&path).unwrap();
        assert!(!path.parent().unwrap().exists());
        store.append(record("h", 0, "alto")).unwrap();
        store.append(record("h", 1, "bajo")).unwrap();
        let reopened = TranscriptStore::open(&path).unwrap();
        assert_eq!(reopened.len(), 2);
        assert_eq!(reopened.get("m", "h", 1).unwrap().raw_text, "bajo");
    }

    #[test]
    fn replay_hit_and_miss() {
        let backend = ReplayBackend::from_records("m", vec![record("H", 0, "old, wide")]);
        let n = noun("río", LanguageCode::Es);
        let req = CompletionRequest {
            prompt: "p",
            prompt_hash: "H",
            noun: &n,
            sample_index: 0,
        };
        assert_eq!(backend.complete(&req).unwrap().text, "old, wide");
        let miss = CompletionRequest { sample_index: 1, ..req };
        assert!(matches!(
            backend.complete(&miss),
            Err(Error::ReplayMiss { sample_index: 1, .. })
        ));
        // a different model never sees these records
        let other = ReplayBackend::from_records("other", vec![record("H", 0, "old")]);
        assert!(other.complete(&req).is_err());
    }

    #[test]
    fn transcript_store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("es__m.jsonl");
        let records = vec![record("A", 0, "rojo, \"viejo\""), record("A", 1, "ünïcödé, 🙂")];
        {
            let store = TranscriptStore::open(&path).unwrap();
            for r in &records {
                store.append(r.clone()).unwrap();
            }
        }
        let store = TranscriptStore::open(&path).unwrap();
        assert_eq!(store.len(), 2);
        for r in &records {
            assert_eq!(store.get("m", "A", r.sample_index).as_ref(), Some(r));
        }
        let corrupt = dir.path().join("bad.jsonl");
        fs::write(&corrupt, "{\"prompt_hash\":1}\n").unwrap();
        assert!(matches!(
            TranscriptStore::open(&corrupt),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    struct Counting<'a> {
        inner: &'a dyn Backend,
        calls: AtomicUsize,
        fail_from: Option<usize>,
    }

    impl Backend for Counting<'_> {
        fn model_name(&self) -> &str {
            self.inner.model_name()
        }
        fn summary(&self) -> String {
            self.inner.summary()
        }
        fn complete(&self, request: &CompletionRequest<'_>) -> Result<BackendReply> {
            if self.fail_from.is_some_and(|k| request.sample_index >= k) {
                return Err(Error::Transport("interrupted".into()));
            }
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.complete(request)
        }
    }

    struct Echo;

    impl Backend for Echo {
        fn model_name(&self) -> &str {
            "echo"
        }
        fn summary(&self) -> String {
            "test:echo".into()
        }
        fn complete(&self, request: &CompletionRequest<'_>) -> Result<BackendReply> {
            Ok(BackendReply {
                text: format!("adj{}, shared", request.sample_index),
                timestamp: FIXED_TIMESTAMP.into(),
            })
        }
    }

    #[test]
    fn elicit_resumes_after_interruption() {
        let dir = tempfile::tempdir().unwrap();
        let store = TranscriptStore::open(dir.path().join("t.jsonl")).unwrap();
        let template = PromptTemplate::for_language(LanguageCode::Es);
        let n = noun("puente", LanguageCode::Es);

        let interrupted = Counting {
            inner: &Echo,
            calls: AtomicUsize::new(0),
            fail_from: Some(30),
        };
        assert!(elicit(&interrupted, &store, &template, &n, 50, 4).is_err());
        assert_eq!(store.len(), 30);

        let resumed = Counting {
            inner: &Echo,
            calls: AtomicUsize::new(0),
            fail_from: None,
        };
        let out = elicit(&resumed, &store, &template, &n, 50, 4).unwrap();
        assert_eq!(resumed.calls.load(Ordering::SeqCst), 20);
        assert_eq!(out.len(), 50);
        assert!(out
            .iter()
            .enumerate()
            .all(|(i, c)| c.sample_index == i && c.raw_text.starts_with(&format!("adj{i},"))));

        // completed work is never refetched
        let again = Counting {
            inner: &Echo,
            calls: AtomicUsize::new(0),
            fail_from: None,
        };
        assert_eq!(elicit(&again, &store, &template, &n, 50, 8).unwrap(), out);
        assert_eq!(again.calls.load(Ordering::SeqCst), 0);

        assert!(matches!(
            elicit(&Echo, &store, &template, &n, 0, 1),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn elicit_over_replay_is_deterministic() {
        let template = PromptTemplate::for_language(LanguageCode::Es);
        let n = noun("puente", LanguageCode::Es);
        let hash = prompt_hash(&render_prompt(&template, &n).unwrap());
        let records: Vec<_> = (0..50)
            .map(|i| TranscriptRecord {
                model: "mistral".into(),
                ..record(&hash, i, &format!("alto, viejo{i}"))
            })
            .collect();
        let backend = ReplayBackend::from_records("mistral", records);
        let run = || {
            let dir = tempfile::tempdir().unwrap();
            let store = TranscriptStore::open(dir.path().join("t.jsonl")).unwrap();
            let out = elicit(&backend, &store, &template, &n, 50, 3).unwrap();
            let bytes = fs::read(store.path()).unwrap();
            (out, bytes.len())
        };
        let (a, len_a) = run();
        let (b, len_b) = run();
        assert_eq!(a.len(), 50);
        assert_eq!(a, b);
        assert_eq!(len_a, len_b);
    }

    #[test]
    fn http_unreachable_endpoint_fails_after_retries() {
        // bind then drop to get a port nobody listens on
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let mut spec = BackendSpec::http("m", &format!("http://127.0.0.1:{port}/v1/completions"));
        spec.retries = 2;
        spec.backoff_ms = 1;
        spec.request_timeout_secs = 2.0;
        let backend = HttpBackend::new(spec).unwrap();
        let n = noun("river", LanguageCode::En);
        let req = CompletionRequest {
            prompt: "p",
            prompt_hash: "h",
            noun: &n,
            sample_index: 0,
        };
        match backend.complete(&req) {
            Err(Error::Transport(msg)) => assert!(msg.contains("3 attempts"), "{msg}"),
            other => panic!("expected transport error, got {other:?}"),
        }
    }

    /// Serves canned HTTP responses in order, capturing request bodies.
    fn serve(responses: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/completions", listener.local_addr().unwrap());
        listener.set_nonblocking(true).unwrap();
        let handle = thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in responses {
                // give up rather than hang when the client never connects
                let deadline = std::time::Instant::now() + Duration::from_secs(10);
                let mut stream = loop {
                    match listener.accept() {
                        Ok((stream, _)) => break stream,
                        Err(e)
                            if e.kind() == std::io::ErrorKind::WouldBlock && std::time::Instant::now() < deadline =>
                        {
                            thread::sleep(Duration::from_millis(5))
                        }
                        Err(_) => return bodies,
                    }
                };
                stream.set_nonblocking(false).unwrap();
                let mut buf = Vec::new();
                let mut chunk = [0u8; 4096];
                let body_start = loop {
                    let n = stream.read(&mut chunk).unwrap();
                    buf.extend_from_slice(&chunk[..n]);
                    if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
                        break pos + 4;
                    }
                };
                let head = String::from_utf8_lossy(&buf[..body_start]).to_lowercase();
                let len: usize = head
                    .lines()
                    .find_map(|l| l.strip_prefix("content-length:").map(|v| v.trim().parse().unwrap()))
                    .unwrap_or(0);
                while buf.len() < body_start + len {
                    let n = stream.read(&mut chunk).unwrap();
                    buf.extend_from_slice(&chunk[..n]);
                }
                bodies.push(String::from_utf8_lossy(&buf[body_start..body_start + len]).into_owned());
                let reply = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
            bodies
        });
        (url, handle)
    }

    #[test]
    fn http_retries_server_errors_then_reads_first_choice() {
        let ok = r#"{"choices":[{"text":" strong, old"},{"text":"ignored"}]}"#.to_string();
        let (url, server) = serve(vec![(503, "{}".into()), (200, ok)]);
        let mut spec = BackendSpec::http("mistral-7b", &url);
        spec.backoff_ms = 1;
        let backend = HttpBackend::new(spec).unwrap();
        let n = noun("river", LanguageCode::En);
        let reply = backend
            .complete(&CompletionRequest {
                prompt: "Describe",
                prompt_hash: "h",
                noun: &n,
                sample_index: 0,
            })
            .unwrap();
        assert_eq!(reply.text, " strong, old");
        let bodies = server.join().unwrap();
        let sent: Value = serde_json::from_str(&bodies[1]).unwrap();
        assert_eq!(sent["model"], "mistral-7b");
        assert_eq!(sent["prompt"], "Describe");
        assert_eq!(sent["n"], 1);
        assert_eq!(sent["temperature"], 0.7);
    }

    #[test]
    fn http_client_errors_are_not_retried() {
        let (url, server) = serve(vec![(400, "{}".into())]);
        let mut spec = BackendSpec::http("m", &url);
        spec.backoff_ms = 1;
        spec.api_style = ApiStyle::Chat;
        let backend = HttpBackend::new(spec).unwrap();
        let n = noun("river", LanguageCode::En);
        let err = backend
            .complete(&CompletionRequest {
                prompt: "p",
                prompt_hash: "h",
                noun: &n,
                sample_index: 0,
            })
            .unwrap_err();
        assert!(err.is_transport());
        let bodies = server.join().unwrap();
        assert_eq!(bodies.len(), 1);
        let sent: Value = serde_json::from_str(&bodies[0]).unwrap();
        assert_eq!(sent["messages"][0]["content"], "p");
    }

    #[test]
    fn chat_style_choice_is_read() {
        let v: Value =
            serde_json::from_str(r#"{"choices":[{"message":{"role":"assistant","content":"red"}}]}"#).unwrap();
        assert_eq!(first_choice_text(&v).as_deref(), Some("red"));
        assert_eq!(first_choice_text(&json!({"choices": []})), None);
    }
}
