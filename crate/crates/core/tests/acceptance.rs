//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! Runs without the libtest harness so every line is printed even when an
//! earlier criterion fails; the process exits non-zero if any criterion fails.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::E;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{Binomial, DiscreteCDF};

use genderprobe::classify::{loss, loss_and_gradients, Activation, ClassifierParams};
use genderprobe::config::ExperimentConfig;
use genderprobe::describe::{aggregate, AdjectiveProfile, AdjectiveSet};
use genderprobe::embed::{scale_frequency, FREQUENCY_CAP};
use genderprobe::experiments::{run_same_language, run_similarity, run_transfer, EvalReport, Setting};
use genderprobe::gateway::BackendSpec;
use genderprobe::metrics::{gender_ratios, masculine_ratio, similarity_from_ratios, GenderRatio};
use genderprobe::seed::rng;
use genderprobe::synthetic::{LanguagePlan, SyntheticPlan};
use genderprobe::{Gender, LanguageCode, Noun};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Verdict;

const Z_99: f64 = 2.576;
const LIVE_ENV: &str = "GENDERPROBE_LIVE_CONFIG";

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> (bool, String) {
    let ok = elapsed < Duration::from_secs(limit_secs);
    (ok, format!("{:.2}s (limit {limit_secs}s)", elapsed.as_secs_f64()))
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn noun(i: usize, gender: Gender) -> Noun {
    Noun::new(
        format!("noun{i:04}"),
        LanguageCode::Es,
        gender,
        format!("gloss{i}"),
        false,
    )
}

fn random_gender(r: &mut impl Rng) -> Gender {
    if r.random_bool(0.5) {
        Gender::Masculine
    } else {
        Gender::Feminine
    }
}

fn random_token(r: &mut impl Rng) -> String {
    let len = r.random_range(1..=3);
    (0..len).map(|_| char::from(b'a' + r.random_range(0..4u8))).collect()
}

/// Frequencies by indicator counting, independent of the library's
/// hash-and-sort implementation.
fn aggregate_oracle(sets: &[Vec<String>], vocab: &[String], p: usize) -> Vec<(String, usize)> {
    let mut counted: Vec<(String, usize)> = Vec::new();
    for token in vocab {
        let mut count = 0;
        for set in sets {
            let mut present = false;
            for adj in set {
                if adj == token {
                    present = true;
                }
            }
            if present {
                count += 1;
            }
        }
        if count > 0 {
            counted.push((token.clone(), count));
        }
    }
    counted.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    counted.truncate(p);
    counted
}

fn check_aggregate_oracle() -> Verdict {
    let start = Instant::now();
    let mut r = rng(101);
    let mut mismatches = Vec::new();
    for collection in 0..200 {
        let n = r.random_range(1..=60);
        let p = r.random_range(1..=40);
        let vocab: Vec<String> = (0..r.random_range(1..=40))
            .map(|_| random_token(&mut r))
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        let target = noun(collection, random_gender(&mut r));
        let raw: Vec<Vec<String>> = (0..n)
            .map(|_| {
                (0..r.random_range(0..=12))
                    .map(|_| vocab.choose(&mut r).unwrap().clone())
                    .collect()
            })
            .collect();
        let sets: Vec<AdjectiveSet> = raw
            .iter()
            .enumerate()
            .map(|(i, adjectives)| AdjectiveSet {
                noun: target.clone(),
                sample_index: i,
                adjectives: adjectives.clone(),
            })
            .collect();
        let profile = match aggregate(&sets, n, p) {
            Ok(profile) => profile,
            Err(e) => return Verdict::Fail(format!("collection {collection}: {e}")),
        };
        let expected = aggregate_oracle(&raw, &vocab, p);
        let same_keys =
            profile.entries.len() == expected.len() && expected.iter().all(|(t, _)| profile.entries.contains_key(t));
        let same_ratios = expected.iter().all(|(t, count)| {
            profile
                .entries
                .get(t)
                .is_some_and(|&f| f.to_bits() == (*count as f64 / n as f64).to_bits())
        });
        if !(same_keys && same_ratios) {
            mismatches.push(collection);
        }
    }
    let (fast, timing) = within(start.elapsed(), 5);
    verdict(
        mismatches.is_empty() && fast,
        format!("200 collections, mismatches {mismatches:?}, {timing}"),
    )
}

fn random_profiles(r: &mut impl RngCore, count: usize, vocab: &[String]) -> Vec<AdjectiveProfile> {
    (0..count)
        .map(|i| {
            let keep = r.random_range(0.02..0.4);
            let entries: BTreeMap<String, f64> = vocab
                .iter()
                .filter_map(|a| {
                    if r.random_bool(keep) {
                        Some((a.clone(), r.random_range(1..=10) as f64 / 10.0))
                    } else {
                        None
                    }
                })
                .collect();
            AdjectiveProfile {
                noun: noun(i, random_gender(r)),
                adjective_language: LanguageCode::En,
                n_samples: 10,
                truncated_to: 50,
                entries,
            }
        })
        .collect()
}

fn check_masculine_ratio_oracle() -> Verdict {
    let start = Instant::now();
    let mut r = rng(202);
    let vocab: Vec<String> = (0..120).map(|i| format!("adj{i:03}")).collect();
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for corpus in 0..4 {
        let profiles = random_profiles(&mut r, 500, &vocab);
        let table = gender_ratios(&profiles);
        for adjective in &vocab {
            let (mut masculine, mut support) = (0usize, 0usize);
            for profile in &profiles {
                for key in profile.entries.keys() {
                    if key == adjective {
                        support += 1;
                        if profile.noun.gender == Gender::Masculine {
                            masculine += 1;
                        }
                    }
                }
            }
            let got = masculine_ratio(&profiles, adjective);
            let ok = if support == 0 {
                got.is_err() && !table.contains_key(adjective)
            } else {
                let expect = masculine as f64 / support as f64;
                compared += 1;
                got.as_ref().is_ok_and(|g| g.r_m == expect && g.support == support)
                    && table
                        .get(adjective)
                        .is_some_and(|g| g.r_m == expect && g.support == support)
            };
            if !ok {
                mismatches.push(format!("corpus {corpus}/{adjective}"));
            }
        }
    }
    let (fast, timing) = within(start.elapsed(), 5);
    verdict(
        mismatches.is_empty() && fast,
        format!("4 corpora x 500 profiles, {compared} adjectives compared, mismatches {mismatches:?}, {timing}"),
    )
}

fn random_ratios(r: &mut impl Rng, vocab: &[String]) -> BTreeMap<String, GenderRatio> {
    vocab
        .iter()
        .filter_map(|a| {
            if !r.random_bool(0.7) {
                return None;
            }
            let support = r.random_range(15..60);
            let masculine = r.random_range(1..=support);
            let ratio = GenderRatio {
                adjective: a.clone(),
                r_m: masculine as f64 / support as f64,
                support,
                masculine_support: masculine,
            };
            Some((a.clone(), ratio))
        })
        .collect()
}

fn synthetic_config(dir: &Path, plan: &SyntheticPlan, seed: u64) -> ExperimentConfig {
    let plan_path = dir.join("plan.toml");
    fs::write(&plan_path, plan.to_toml().unwrap()).unwrap();
    let languages = plan.languages.iter().map(|l| l.code).collect();
    let mut config = ExperimentConfig::new(languages, BackendSpec::synthetic("synthetic", &plan_path, seed));
    config.transcripts_dir = dir.join("transcripts");
    config.out_dir = dir.join("out");
    config.seed = seed;
    config
}

fn pair_plan(n_nouns: usize, beta: f64, disjoint: bool, swap: bool) -> SyntheticPlan {
    let mut es = LanguagePlan::new(LanguageCode::Es);
    let mut it = LanguagePlan::new(LanguageCode::It);
    for l in [&mut es, &mut it] {
        l.n_nouns = n_nouns;
        l.bias_strength = beta;
    }
    it.inflect = true;
    it.synonyms = 2;
    it.swap_gender_pools = swap;
    if disjoint {
        it.semantic_group = "disjoint".into();
    }
    SyntheticPlan::new(vec![es, it])
}

fn planted_similarity(swap: bool) -> Result<f64, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut config = synthetic_config(dir.path(), &pair_plan(80, 1.0, false, swap), 11);
    config.n_samples = 10;
    let report = run_similarity(&config).map_err(|e| e.to_string())?;
    let matrix = report.similarity.ok_or("similarity report without a matrix")?;
    let cell = matrix
        .get(LanguageCode::Es, LanguageCode::It)
        .ok_or("missing es/it cell")?;
    cell.score.ok_or_else(|| format!("es/it cell is {:?}", cell.status))
}

fn check_similarity() -> Verdict {
    let start = Instant::now();
    let mut r = rng(303);
    let vocab: Vec<String> = (0..80).map(|i| format!("adj{i:02}")).collect();
    let (mut worst_self, mut asymmetric) = (0.0f64, 0usize);
    for _ in 0..100 {
        let p = random_ratios(&mut r, &vocab);
        let q = random_ratios(&mut r, &vocab);
        let own = similarity_from_ratios((LanguageCode::Es, &p), (LanguageCode::Es, &p), 15);
        match own.map(|s| s.score()) {
            Ok(Some(s)) => worst_self = worst_self.max((s - 1.0).abs()),
            other => return Verdict::Fail(format!("self-similarity not defined: {other:?}")),
        }
        let pq = similarity_from_ratios((LanguageCode::Es, &p), (LanguageCode::It, &q), 15).map(|s| s.score());
        let qp = similarity_from_ratios((LanguageCode::It, &q), (LanguageCode::Es, &p), 15).map(|s| s.score());
        match (pq, qp) {
            (Ok(a), Ok(b)) if a.map(f64::to_bits) == b.map(f64::to_bits) => {}
            _ => asymmetric += 1,
        }
    }
    let identical = match planted_similarity(false) {
        Ok(s) => s,
        Err(e) => return Verdict::Fail(format!("planted identical: {e}")),
    };
    let anti = match planted_similarity(true) {
        Ok(s) => s,
        Err(e) => return Verdict::Fail(format!("planted anti-correlated: {e}")),
    };
    let (fast, timing) = within(start.elapsed(), 5);
    verdict(
        worst_self <= 1e-9 && asymmetric == 0 && identical >= 0.98 && anti <= 0.2 && fast,
        format!(
            "|S_pp-1| max {worst_self:.1e}, asymmetric pairs {asymmetric}/100, identical S={identical:.4} (>=0.98), \
             anti-correlated S={anti:.4} (<=0.2), {timing}"
        ),
    )
}

fn check_scaling() -> Verdict {
    let at = |f: f64| scale_frequency(f).unwrap_or(f64::NAN);
    let one = at(E.powi(-1));
    let thirty = at((-30.0f64).exp());
    let grid: Vec<f64> = (1..=1000).map(|k| at(FREQUENCY_CAP * k as f64 / 1000.0)).collect();
    let monotone = grid.windows(2).all(|w| w[1] > w[0]);
    verdict(
        (one - 30.0).abs() <= 1e-9 && (thirty - 1.0).abs() <= 1e-9 && monotone,
        format!("f'(e^-1)={one:.12}, f'(e^-30)={thirty:.12}, strictly increasing on 1000-point grid: {monotone}"),
    )
}

fn check_gradients() -> Verdict {
    let start = Instant::now();
    let mut r = rng(404);
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut normal = || -> f64 { StandardNormal.sample(&mut r) };
    let mut sizes = rng(405);
    for _ in 0..20 {
        let d = sizes.random_range(2..=6);
        let hidden = sizes.random_range(2..=6);
        let n = sizes.random_range(3..=10);
        let l2 = sizes.random_range(0.0..0.1);
        let mut params = ClassifierParams::zeros(d, hidden, Activation::Relu);
        params.w1.iter_mut().for_each(|w| *w = 0.7 * normal());
        params.b1.iter_mut().for_each(|b| *b = 0.3 * normal());
        params.w2.iter_mut().for_each(|w| *w = 0.7 * normal());
        params.b2 = 0.3 * normal();
        let inputs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| normal()).collect()).collect();
        let targets: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();

        let (_, grads) = loss_and_gradients(&params, &inputs, &targets, l2).unwrap();
        let analytic: Vec<f64> = grads
            .w1
            .iter()
            .chain(&grads.b1)
            .chain(&grads.w2)
            .chain(std::iter::once(&grads.b2))
            .copied()
            .collect();
        let numeric: Vec<f64> = (0..analytic.len())
            .map(|k| {
                let shifted = |delta: f64| {
                    let mut p = params.clone();
                    let slot = parameter_mut(&mut p, k);
                    *slot += delta;
                    loss(&p, &inputs, &targets, l2).unwrap()
                };
                (shifted(h) - shifted(-h)) / (2.0 * h)
            })
            .collect();
        for (a, num) in analytic.iter().zip(&numeric) {
            let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    let (fast, timing) = within(start.elapsed(), 10);
    verdict(
        worst <= 1e-4 && fast,
        format!("20 instances, max relative error {worst:.2e} (<=1e-4), {timing}"),
    )
}

/// The `k`-th parameter in the order w1, b1, w2, b2.
fn parameter_mut(p: &mut ClassifierParams, k: usize) -> &mut f64 {
    let (a, b, c) = (p.w1.len(), p.b1.len(), p.w2.len());
    if k < a {
        &mut p.w1[k]
    } else if k < a + b {
        &mut p.b1[k - a]
    } else if k < a + b + c {
        &mut p.w2[k - a - b]
    } else {
        &mut p.b2
    }
}

fn noise_band(n: usize) -> f64 {
    Z_99 * (0.25 / n as f64).sqrt()
}

fn single_language(beta: f64) -> Result<(f64, usize), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut es = LanguagePlan::new(LanguageCode::Es);
    es.n_nouns = 500;
    es.bias_strength = beta;
    let config = synthetic_config(dir.path(), &SyntheticPlan::new(vec![es]), 21);
    let report = run_same_language(&config).map_err(|e| e.to_string())?;
    let row = report.row(LanguageCode::Es, Setting::Same).ok_or("no es row")?;
    Ok((row.metrics.overall_accuracy, row.n_test))
}

fn check_end_to_end() -> Verdict {
    let start = Instant::now();
    let (biased, n_biased) = match single_language(1.0) {
        Ok(v) => v,
        Err(e) => return Verdict::Fail(format!("beta=1: {e}")),
    };
    let (flat, n_flat) = match single_language(0.0) {
        Ok(v) => v,
        Err(e) => return Verdict::Fail(format!("beta=0: {e}")),
    };
    let band = noise_band(n_flat);
    let (fast, timing) = within(start.elapsed(), 60);
    verdict(
        biased >= 0.95 && (flat - 0.5).abs() <= band && fast,
        format!(
            "500 nouns, N=50: beta=1 accuracy {biased:.3} on {n_biased} (>=0.95), beta=0 accuracy {flat:.3} on {n_flat} \
             (0.5±{band:.3}), {timing}"
        ),
    )
}

fn transfer_accuracies(disjoint: bool) -> Result<Vec<(LanguageCode, f64, usize)>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = synthetic_config(dir.path(), &pair_plan(200, 1.0, disjoint, false), 31);
    let report: EvalReport = run_transfer(&config).map_err(|e| e.to_string())?;
    Ok(report
        .rows
        .iter()
        .map(|r| (r.language, r.metrics.overall_accuracy, r.n_test))
        .collect())
}

fn check_transfer() -> Verdict {
    let start = Instant::now();
    let shared = match transfer_accuracies(false) {
        Ok(v) => v,
        Err(e) => return Verdict::Fail(format!("shared map: {e}")),
    };
    let disjoint = match transfer_accuracies(true) {
        Ok(v) => v,
        Err(e) => return Verdict::Fail(format!("disjoint maps: {e}")),
    };
    let shared_ok = shared.iter().all(|&(_, acc, _)| acc >= 0.90);
    let disjoint_ok = disjoint.iter().all(|&(_, acc, n)| (acc - 0.5).abs() <= noise_band(n));
    let show = |rows: &[(LanguageCode, f64, usize)]| {
        rows.iter()
            .map(|(l, a, n)| format!("{l}={a:.3}/{n}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let (fast, timing) = within(start.elapsed(), 60);
    verdict(
        shared_ok && disjoint_ok && fast,
        format!(
            "shared map {} (>=0.90), disjoint maps {} (0.5±{:.3}), {timing}",
            show(&shared),
            show(&disjoint),
            noise_band(200)
        ),
    )
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_genderprobe"))
        .args(args)
        .output()
        .expect("run genderprobe")
}

fn check_determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let config = fixtures().join("configs/replay.toml");
    let first = cli(&["eval", "same", "--config", config.to_str().unwrap(), "--out-dir", out]);
    if !first.status.success() {
        return Verdict::Fail(format!("first run: {}", String::from_utf8_lossy(&first.stderr)));
    }
    let json = dir.path().join("same_language__replay-synthetic__seed7.json");
    let snapshot = dir.path().join("same_language__replay-synthetic__seed7.config.toml");
    let (Ok(a), true) = (fs::read(&json), snapshot.exists()) else {
        return Verdict::Fail("report or config snapshot missing after the first run".into());
    };
    let second = cli(&["eval", "same", "--config", snapshot.to_str().unwrap(), "--out-dir", out]);
    if !second.status.success() {
        return Verdict::Fail(format!("second run: {}", String::from_utf8_lossy(&second.stderr)));
    }
    let b = fs::read(&json).unwrap_or_default();
    verdict(a == b, format!("report JSON {} bytes, identical: {}", a.len(), a == b))
}

/// Recursive copy; the namespace cannot see the build tree, so the binary
/// and fixtures are staged in a temp dir.
fn copy_tree(from: &Path, to: &Path) -> std::io::Result<()> {
    fs::create_dir_all(to)?;
    for entry in fs::read_dir(from)? {
        let entry = entry?;
        let target = to.join(entry.file_name());
        if entry.file_type()?.is_dir() {
            copy_tree(&entry.path(), &target)?;
        } else {
            fs::copy(entry.path(), target)?;
        }
    }
    Ok(())
}

fn in_netns(binary: &Path, args: &[&str]) -> std::process::Output {
    Command::new("unshare")
        .arg("-rn")
        .arg(binary)
        .args(args)
        .output()
        .expect("run unshare")
}

fn check_hermeticity() -> Verdict {
    let probe = Command::new("unshare").args(["-rn", "true"]).status();
    if !probe.is_ok_and(|s| s.success()) {
        return Verdict::Skip("no network namespace support (unshare -rn); run the suite offline by hand".into());
    }
    let dir = tempfile::tempdir().unwrap();
    let binary = dir.path().join("genderprobe");
    let root = dir.path().join("fixtures");
    fs::copy(env!("CARGO_BIN_EXE_genderprobe"), &binary).unwrap();
    copy_tree(&fixtures(), &root).unwrap();

    let http = dir.path().join("http.toml");
    fs::write(
        &http,
        "languages = [\"es\"]\nlexicon_dir = \"fixtures/synthetic/lexicons\"\ndictionary_path = \"fixtures/synthetic/dictionary.tsv\"\n\
         embeddings_path = \"fixtures/synthetic/embeddings.txt\"\n[backend]\nkind = \"http\"\nmodel = \"m\"\n\
         endpoint = \"http://192.0.2.1/v1/completions\"\nretries = 0\n",
    )
    .unwrap();
    let control = in_netns(&binary, &["elicit", "--config", http.to_str().unwrap()]);
    if control.status.code() != Some(2) {
        return Verdict::Fail(format!(
            "control: http elicitation without network exited {:?}, expected transport failure 2: {}",
            control.status.code(),
            String::from_utf8_lossy(&control.stderr).trim()
        ));
    }

    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let replay = root.join("configs/replay.toml");
    let synth = root.join("configs/synth.toml");
    let (replay, synth) = (replay.to_str().unwrap(), synth.to_str().unwrap());
    let runs: Vec<Vec<&str>> = vec![
        vec!["verify", "--root", root.to_str().unwrap()],
        vec!["eval", "same", "--config", replay, "--out-dir", out],
        vec!["eval", "transfer", "--config", replay, "--out-dir", out],
        vec!["eval", "similarity", "--config", replay, "--out-dir", out],
        vec!["elicit", "--config", synth, "--out-dir", out],
        vec!["eval", "same", "--config", synth, "--out-dir", out],
    ];
    let mut failed = Vec::new();
    for args in &runs {
        let output = in_netns(&binary, args);
        if !output.status.success() {
            failed.push(format!(
                "{}: {}",
                args[..2].join(" "),
                String::from_utf8_lossy(&output.stderr).trim()
            ));
        }
    }
    verdict(
        failed.is_empty(),
        format!(
            "network namespace confirmed offline (http backend exits 2); {} offline pipeline runs, failures {failed:?}",
            runs.len()
        ),
    )
}

fn check_live() -> Verdict {
    let Ok(path) = std::env::var(LIVE_ENV) else {
        return Verdict::Skip(format!("set {LIVE_ENV} to a config with a live backend"));
    };
    let config = match ExperimentConfig::load(Path::new(&path)) {
        Ok(c) => c,
        Err(e) => return Verdict::Fail(format!("{path}: {e}")),
    };
    let report = match run_same_language(&config) {
        Ok(r) => r,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let mut all = true;
    let mut parts = Vec::new();
    for row in &report.rows {
        let n = row.n_test as u64;
        let correct = (row.metrics.overall_accuracy * n as f64).round() as u64;
        // P(X >= correct) under guessing
        let p_value = if correct == 0 {
            1.0
        } else {
            Binomial::new(0.5, n).map(|b| b.sf(correct - 1)).unwrap_or(1.0)
        };
        all &= p_value < 0.05;
        parts.push(format!(
            "{}={:.1}% (p={p_value:.3})",
            row.language,
            100.0 * row.metrics.overall_accuracy
        ));
    }
    verdict(all, parts.join(" "))
}

fn main() {
    let checks: [(&str, Check); 10] = [
        ("aggregate matches indicator-count oracle", check_aggregate_oracle),
        (
            "masculine ratio matches nested-loop oracle",
            check_masculine_ratio_oracle,
        ),
        (
            "similarity: self, symmetry, planted identical and anti-correlated",
            check_similarity,
        ),
        ("frequency scaling f'", check_scaling),
        ("MLP gradient check", check_gradients),
        ("end-to-end synthetic recovery", check_end_to_end),
        ("transfer recovery", check_transfer),
        ("determinism of eval same on replay fixtures", check_determinism),
        ("hermeticity without network", check_hermeticity),
        ("live backend beats chance (optional)", check_live),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (name, check) in checks {
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::Fail(format!("panicked: {msg}"))
        });
        match result {
            Verdict::Pass(detail) => println!("PASS  {name}: {detail}"),
            Verdict::Skip(detail) => println!("SKIP  {name}: {detail}"),
            Verdict::Fail(detail) => {
                failures += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
