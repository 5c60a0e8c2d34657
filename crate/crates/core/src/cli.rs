//! Config files and the `run`, `bench` and `trace` commands.
//!
//! Configs are TOML with unknown keys rejected. A run config has four
//! tables:
//!
//! ```toml
//! [target]
//! kind = "neural"          # neural | table
//! vocab_size = 256
//! hidden_dim = 64
//! context = 4
//! seed = 1
//!
//! [draft]
//! kind = "perturbed"       # perturbed | neural | table
//! epsilon = 0.3
//! seed = 2
//!
//! [engine]
//! criterion = "dropmatch_js"   # lossless | greedy_match | naive | dropmatch_js
//! draft_length = 5
//! heads = 5
//! p_drop = 0.3
//! seed = 7
//! max_tokens = 64
//!
//! [prompts]
//! count = 8
//! length = 4
//! seed = 3
//! ```
//!
//! A sweep file is a run config plus a `[sweep]` table of value lists.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acceptance::{self, AcceptanceDecision, Branch, Criterion, DraftToken};
use crate::engine::{self, EngineConfig};
use crate::error::{Error, Result};
use crate::mc_head::{HeadAgreement, McHead};
use crate::metrics::{self, MetricsAccumulator, RunSummary};
use crate::models::{self, make_draft_of, LanguageModel, NeuralLm, NeuralLmConfig, TableLm, TraceReplay};
use crate::rng::{self, Domain};

pub const DEFAULT_SWEEP_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Neural(NeuralLmConfig),
    Table {
        vocab_size: usize,
        #[serde(default = "default_order")]
        order: usize,
        #[serde(default = "default_sharpness")]
        sharpness: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Draft only: the neural target with relative noise `epsilon`.
    Perturbed {
        epsilon: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_order() -> usize {
    2
}

fn default_sharpness() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSpec {
    #[serde(default = "default_prompt_count")]
    pub count: usize,
    #[serde(default = "default_prompt_length")]
    pub length: usize,
    #[serde(default)]
    pub seed: u64,
    /// Literal prompts; when present `count`, `length` and `seed` are ignored.
    #[serde(default)]
    pub explicit: Option<Vec<Vec<usize>>>,
}

fn default_prompt_count() -> usize {
    1
}

fn default_prompt_length() -> usize {
    4
}

impl Default for PromptSpec {
    fn default() -> Self {
        Self {
            count: default_prompt_count(),
            length: default_prompt_length(),
            seed: 0,
            explicit: None,
        }
    }
}

impl PromptSpec {
    pub fn build(&self, vocab: usize) -> Result<Vec<Vec<usize>>> {
        if let Some(list) = &self.explicit {
            if list.is_empty() || list.iter().any(Vec::is_empty) {
                return Err(Error::config("prompts.explicit", "prompts must be non-empty"));
            }
            if list.iter().flatten().any(|&t| t >= vocab) {
                return Err(Error::config("prompts.explicit", "token outside the vocabulary"));
            }
            return Ok(list.clone());
        }
        if self.count == 0 {
            return Err(Error::config("prompts.count", "must be at least 1"));
        }
        if self.length == 0 {
            return Err(Error::config("prompts.length", "must be at least 1"));
        }
        Ok(random_prompts(self.count, self.length, vocab, self.seed))
    }
}

/// `count` uniform random prompts of `length` tokens.
pub fn random_prompts(count: usize, length: usize, vocab: usize, seed: u64) -> Vec<Vec<usize>> {
    (0..count as u64)
        .map(|i| {
            let mut r = rng::stream(seed, Domain::Prompt, i, 0);
            (0..length).map(|_| r.random_range(0..vocab)).collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub target: ModelSpec,
    pub draft: ModelSpec,
    pub engine: EngineConfig,
    #[serde(default)]
    pub prompts: PromptSpec,
}

/// Built models for one run.
pub struct ModelPair {
    pub target: Box<dyn LanguageModel>,
    pub draft: Box<dyn LanguageModel>,
}

impl std::fmt::Debug for ModelPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelPair")
            .field("vocab", &self.target.vocab_size())
            .finish()
    }
}

fn build_table(field: &str, vocab_size: usize, order: usize, sharpness: f64, seed: u64) -> Result<TableLm> {
    if !sharpness.is_finite() || sharpness <= 0.0 {
        return Err(Error::config(format!("{field}.sharpness"), "must be positive"));
    }
    TableLm::random(vocab_size, order, sharpness, seed).map_err(|e| Error::config(field, e.to_string()))
}

fn build_neural(field: &str, cfg: &NeuralLmConfig) -> Result<NeuralLm> {
    NeuralLm::random(cfg).map_err(|e| match e {
        Error::InvalidConfig { field: f, reason } => Error::config(format!("{field}.{f}"), reason),
        e => e,
    })
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.engine.validate()?;
        if matches!(self.target, ModelSpec::Perturbed { .. }) {
            return Err(Error::config("target.kind", "`perturbed` is only valid for the draft"));
        }
        if let ModelSpec::Perturbed { epsilon, .. } = self.draft {
            if !matches!(self.target, ModelSpec::Neural(_)) {
                return Err(Error::config("draft.kind", "`perturbed` needs a neural target"));
            }
            if !epsilon.is_finite() || epsilon < 0.0 {
                return Err(Error::config("draft.epsilon", "must be finite and >= 0"));
            }
        }
        Ok(())
    }

    pub fn build_target(&self) -> Result<Box<dyn LanguageModel>> {
        Ok(match &self.target {
            ModelSpec::Neural(c) => Box::new(build_neural("target", c)?),
            ModelSpec::Table {
                vocab_size,
                order,
                sharpness,
                seed,
            } => Box::new(build_table("target", *vocab_size, *order, *sharpness, *seed)?),
            ModelSpec::Perturbed { .. } => {
                return Err(Error::config("target.kind", "`perturbed` is only valid for the draft"))
            }
        })
    }

    pub fn build(&self) -> Result<ModelPair> {
        let draft: Box<dyn LanguageModel> = match (&self.draft, &self.target) {
            (ModelSpec::Perturbed { epsilon, seed }, ModelSpec::Neural(t)) => {
                Box::new(make_draft_of(&build_neural("target", t)?, *epsilon, *seed)?)
            }
            (ModelSpec::Perturbed { .. }, _) => {
                return Err(Error::config("draft.kind", "`perturbed` needs a neural target"))
            }
            (ModelSpec::Neural(c), _) => Box::new(build_neural("draft", c)?),
            (
                ModelSpec::Table {
                    vocab_size,
                    order,
                    sharpness,
                    seed,
                },
                _,
            ) => Box::new(build_table("draft", *vocab_size, *order, *sharpness, *seed)?),
        };
        let target = self.build_target()?;
        self.engine.validate_for(draft.as_ref(), target.as_ref())?;
        Ok(ModelPair { target, draft })
    }

    pub fn epsilon(&self) -> Option<f64> {
        match self.draft {
            ModelSpec::Perturbed { epsilon, .. } => Some(epsilon),
            _ => None,
        }
    }
}

/// Decodes every prompt and summarises the merged streams.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunSummary> {
    let models = cfg.build()?;
    let prompts = cfg.prompts.build(models.target.vocab_size())?;
    let outputs = engine::decode_streams(models.draft.as_ref(), models.target.as_ref(), &prompts, &cfg.engine)?;
    metrics::summarize(&outputs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepLists {
    #[serde(default)]
    pub criterion: Option<Vec<Criterion>>,
    #[serde(default)]
    pub epsilon: Option<Vec<f64>>,
    #[serde(default)]
    pub draft_length: Option<Vec<usize>>,
    #[serde(default)]
    pub heads: Option<Vec<usize>>,
    #[serde(default)]
    pub p_drop: Option<Vec<f64>>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn default_repetitions() -> usize {
    1
}

fn default_cap() -> usize {
    DEFAULT_SWEEP_CAP
}

/// A base run config and the value lists to sweep over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub target: ModelSpec,
    pub draft: ModelSpec,
    pub engine: EngineConfig,
    #[serde(default)]
    pub prompts: PromptSpec,
    pub sweep: SweepLists,
}

/// One point of the sweep grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub index: usize,
    pub repetition: usize,
    pub config: RunConfig,
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::config("sweep", e.to_string()))?;
        spec.base().validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    fn base(&self) -> RunConfig {
        RunConfig {
            target: self.target.clone(),
            draft: self.draft.clone(),
            engine: self.engine.clone(),
            prompts: self.prompts.clone(),
        }
    }

    /// Cartesian product in the order criterion, epsilon, draft_length,
    /// heads, p_drop, repetition (last varies fastest). Missing lists fall
    /// back to the base config value. The engine seed of a cell is
    /// `base_seed + repetition`, so cells that differ only in a swept
    /// parameter share their random streams.
    pub fn cells(&self) -> Result<Vec<SweepCell>> {
        let s = &self.sweep;
        let base = self.base();
        let criteria = s.criterion.clone().unwrap_or_else(|| vec![base.engine.criterion]);
        let epsilons: Vec<Option<f64>> = match (&s.epsilon, base.epsilon()) {
            (Some(list), Some(_)) => list.iter().copied().map(Some).collect(),
            (Some(_), None) => {
                return Err(Error::config("sweep.epsilon", "needs a `perturbed` draft"));
            }
            (None, eps) => vec![eps],
        };
        let lengths = s.draft_length.clone().unwrap_or_else(|| vec![base.engine.draft_length]);
        let heads = s.heads.clone().unwrap_or_else(|| vec![base.engine.heads]);
        let drops = s.p_drop.clone().unwrap_or_else(|| vec![base.engine.p_drop]);
        if s.repetitions == 0 {
            return Err(Error::config("sweep.repetitions", "must be at least 1"));
        }
        let lists = [
            ("criterion", criteria.len()),
            ("epsilon", epsilons.len()),
            ("draft_length", lengths.len()),
            ("heads", heads.len()),
            ("p_drop", drops.len()),
        ];
        if let Some((name, _)) = lists.iter().find(|(_, n)| *n == 0) {
            return Err(Error::config(format!("sweep.{name}"), "list must not be empty"));
        }
        let size = lists.iter().map(|(_, n)| *n).product::<usize>() * s.repetitions;
        if size > s.cap {
            return Err(Error::config(
                "sweep.cap",
                format!("sweep has {size} cells, cap is {}", s.cap),
            ));
        }

        let mut cells = Vec::with_capacity(size);
        for &criterion in &criteria {
            for &eps in &epsilons {
                for &l in &lengths {
                    for &k in &heads {
                        for &p in &drops {
                            for rep in 0..s.repetitions {
                                let mut cfg = base.clone();
                                cfg.engine.criterion = criterion;
                                cfg.engine.draft_length = l;
                                cfg.engine.heads = k;
                                cfg.engine.p_drop = p;
                                cfg.engine.seed = s.base_seed.wrapping_add(rep as u64);
                                if let (Some(e), ModelSpec::Perturbed { epsilon, .. }) = (eps, &mut cfg.draft) {
                                    *epsilon = e;
                                }
                                cfg.validate()?;
                                cells.push(SweepCell {
                                    index: cells.len(),
                                    repetition: rep,
                                    config: cfg,
                                });
                            }
                        }
                    }
                }
            }
        }
        Ok(cells)
    }
}

pub const CSV_COLUMNS: [&str; 13] = [
    "criterion",
    "p_drop",
    "K",
    "L",
    "epsilon",
    "seed",
    "steps",
    "tau_draft_only",
    "tau_with_bonus",
    "tokens_emitted",
    "tokens_per_second",
    "head_time_fraction",
    "unanimity_ratio",
];

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub cell: SweepCell,
    pub summary: RunSummary,
}

impl BenchRow {
    fn fields(&self) -> Vec<String> {
        let e = &self.cell.config.engine;
        let s = &self.summary;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            e.criterion.to_string(),
            e.p_drop.to_string(),
            e.heads.to_string(),
            e.draft_length.to_string(),
            opt(self.cell.config.epsilon()),
            e.seed.to_string(),
            s.steps.to_string(),
            s.tau_draft_only.to_string(),
            s.tau_with_bonus.to_string(),
            s.tokens_emitted.to_string(),
            s.tokens_per_second.to_string(),
            s.head_time_fraction.to_string(),
            opt(s.unanimity_ratio),
        ]
    }
}

/// Runs every sweep cell on the current rayon pool; rows come back in
/// sweep order.
pub fn cmd_bench(spec: &SweepSpec) -> Result<Vec<BenchRow>> {
    let cells = spec.cells()?;
    let n = cells.len();
    cells
        .into_par_iter()
        .map(|cell| {
            let summary = cmd_run(&cell.config)?;
            eprintln!("bench: cell {}/{} done", cell.index + 1, n);
            Ok(BenchRow { cell, summary })
        })
        .collect()
}

pub fn write_csv<W: Write>(out: W, rows: &[BenchRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::io("<csv>", std::io::Error::other(e));
    w.write_record(CSV_COLUMNS).map_err(to_err)?;
    for r in rows {
        w.write_record(r.fields()).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

/// Replays recorded hidden states through the sampled head and the
/// configured criterion. Positions are regrouped into verification rounds
/// using `draft_length`: a round closes at a rejection or after
/// `draft_length` acceptances. Timing fields of the summary are zero.
pub fn cmd_trace(trace_path: impl AsRef<Path>, cfg: &RunConfig) -> Result<RunSummary> {
    let trace = models::load_trace(trace_path)?;
    let target = match &cfg.target {
        ModelSpec::Neural(c) => build_neural("target", c)?,
        _ => return Err(Error::config("target.kind", "trace replay needs a neural target head")),
    };
    let head = target.head().expect("neural LM has a head").clone();
    let replay = TraceReplay::new(trace, head)?;
    replay_summary(&replay, &cfg.engine)
}

pub fn replay_summary(replay: &TraceReplay, cfg: &EngineConfig) -> Result<RunSummary> {
    cfg.validate()?;
    if replay.trace.records.is_empty() {
        return Err(Error::Validation("trace has no steps".into()));
    }
    let mc = McHead::new(cfg.heads, cfg.p_drop)?;
    let mut acc = MetricsAccumulator::new();
    let mut in_round = 0usize;
    for rec in &replay.trace.records {
        let draft = DraftToken::new(rec.draft_token, rec.draft_dist()?)?;
        let samples = mc.sample(&replay.head, &rec.hidden, cfg.seed, rec.step)?;
        let (decision, agreement): (AcceptanceDecision, Option<HeadAgreement>) = match cfg.criterion {
            Criterion::DropmatchJs => (
                acceptance::dropmatch_accept(&draft, &samples, cfg.majority)?,
                Some(samples.agreement()),
            ),
            Criterion::Naive => (acceptance::naive_match(&draft, &samples), Some(samples.agreement())),
            Criterion::GreedyMatch => (acceptance::greedy_match(&draft, &samples.deterministic_dist), None),
            Criterion::Lossless => {
                let mut s = rng::stream(cfg.seed, Domain::Lossless, rec.step, 0);
                let out = acceptance::lossless_accept(&draft, &samples.deterministic_dist, cfg.mode, &mut s)?;
                let d = AcceptanceDecision {
                    accepted: out.accepted,
                    branch: if out.accepted {
                        Branch::LosslessPass
                    } else {
                        Branch::Rejected
                    },
                    js_draft_to_centroid: None,
                    max_js_head_to_centroid: None,
                    mean_js_head_to_centroid: None,
                };
                (d, None)
            }
        };
        acc.add_decision(&decision, agreement.as_ref())?;
        if decision.accepted {
            in_round += 1;
            if in_round == cfg.draft_length {
                acc.add_round(in_round, in_round + 1);
                in_round = 0;
            }
        } else {
            acc.add_round(in_round, in_round + 1);
            in_round = 0;
        }
    }
    if in_round > 0 {
        acc.add_round(in_round, in_round + 1);
    }
    Ok(acc.finish())
}

#[derive(Debug, Parser)]
#[command(
    name = "dropmatch",
    version,
    about = "Speculative decoding with MC-dropout head acceptance"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Overrides the engine seed (the sweep base seed for `bench`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decode the configured prompts and print a JSON run summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a parameter sweep and write one CSV row per cell.
    Bench {
        #[arg(long)]
        sweep: PathBuf,
        /// Output CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Replay a JSONL trace and print a JSON run summary.
    Trace {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if threads == 0 {
        return Err(Error::config("threads", "must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config("threads", e.to_string()))?;
    pool.install(f)
}

fn print_json<W: Write>(out: &mut W, summary: &RunSummary) -> Result<()> {
    let text = serde_json::to_string_pretty(summary).expect("summary serialises");
    writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e))
}

/// Executes a parsed command, writing machine-readable results to `out`.
pub fn execute<W: Write>(cli: Cli, out: &mut W) -> Result<()> {
    match cli.command {
        Command::Run { config, common } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(seed) = common.seed {
                cfg.engine.seed = seed;
            }
            let summary = with_threads(common.threads, || cmd_run(&cfg))?;
            print_json(out, &summary)
        }
        Command::Bench {
            sweep,
            out: path,
            common,
        } => {
            let mut spec = SweepSpec::load(&sweep)?;
            if let Some(seed) = common.seed {
                spec.sweep.base_seed = seed;
            }
            let rows = with_threads(common.threads, || cmd_bench(&spec))?;
            match path {
                Some(p) => {
                    let file = std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
                    write_csv(file, &rows).map_err(|e| match e {
                        Error::Io { source, .. } => Error::io(&p, source),
                        e => e,
                    })
                }
                None => write_csv(out, &rows),
            }
        }
        Command::Trace { config, trace, common } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(seed) = common.seed {
                cfg.engine.seed = seed;
            }
            let summary = with_threads(common.threads, || cmd_trace(&trace, &cfg))?;
            print_json(out, &summary)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[target]
kind = "neural"
vocab_size = 32
hidden_dim = 8
context = 3
seed = 1

[draft]
kind = "perturbed"
epsilon = 0.3
seed = 2

[engine]
criterion = "dropmatch_js"
draft_length = 4
heads = 5
p_drop = 0.3
seed = 7
max_tokens = 24

[prompts]
count = 2
length = 3
seed = 5
"#;

    #[test]
    fn minimal_config_runs() {
        let cfg = RunConfig::from_toml(MINIMAL).unwrap();
        let s = cmd_run(&cfg).unwrap();
        assert_eq!(s.tokens_emitted, 48);
        let json = serde_json::to_value(&s).unwrap();
        for key in [
            "tau_with_bonus",
            "tau_draft_only",
            "steps",
            "tokens_emitted",
            "tokens_per_second",
            "head_time_fraction",
            "agreement_histogram",
            "mean_prob_by_agreement",
            "js_stats",
        ] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn p_drop_one_names_the_field() {
        let text = MINIMAL.replace("p_drop = 0.3", "p_drop = 1.0");
        let err = RunConfig::from_toml(&text).unwrap_err();
        assert!(
            matches!(err, Error::InvalidConfig { ref field, .. } if field == "p_drop"),
            "{err}"
        );
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_keys_fail_closed() {
        let text = MINIMAL.replace("max_tokens = 24", "max_tokens = 24\nbogus = 1");
        let err = RunConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let text = MINIMAL.replace("hidden_dim = 8", "hidden_dim = 8\nwidth = 3");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn perturbed_target_rejected() {
        let text = MINIMAL.replace("kind = \"neural\"", "kind = \"perturbed\"\nepsilon = 0.1");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn explicit_prompts() {
        let p = PromptSpec {
            explicit: Some(vec![vec![1, 2], vec![3]]),
            ..Default::default()
        };
        assert_eq!(p.build(8).unwrap(), vec![vec![1, 2], vec![3]]);
        let bad = PromptSpec {
            explicit: Some(vec![vec![9]]),
            ..Default::default()
        };
        assert!(bad.build(8).is_err());
    }

    fn sweep(extra: &str) -> SweepSpec {
        SweepSpec::from_toml(&format!("{MINIMAL}\n[sweep]\n{extra}")).unwrap()
    }

    #[test]
    fn single_cell_sweep() {
        let spec = sweep("");
        assert_eq!(spec.cells().unwrap().len(), 1);
        let rows = cmd_bench(&spec).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], CSV_COLUMNS.join(","));
    }

    #[test]
    fn cartesian_order() {
        let spec = sweep("p_drop = [0.1, 0.2]\nheads = [3, 5]");
        let cells = spec.cells().unwrap();
        let got: Vec<(usize, f64)> = cells
            .iter()
            .map(|c| (c.config.engine.heads, c.config.engine.p_drop))
            .collect();
        assert_eq!(got, vec![(3, 0.1), (3, 0.2), (5, 0.1), (5, 0.2)]);
    }

    #[test]
    fn sweep_cap_enforced() {
        let spec = sweep("p_drop = [0.1, 0.2]\nheads = [3, 5]\ncap = 3");
        assert!(matches!(spec.cells(), Err(Error::InvalidConfig { ref field, .. }) if field == "sweep.cap"));
    }

    #[test]
    fn sweep_epsilon_overrides_draft() {
        let spec = sweep("epsilon = [0.0, 0.5]\nrepetitions = 2\nbase_seed = 10");
        let cells = spec.cells().unwrap();
        assert_eq!(cells.len(), 4);
        assert_eq!(cells[0].config.epsilon(), Some(0.0));
        assert_eq!(cells[3].config.epsilon(), Some(0.5));
        assert_eq!(cells[1].config.engine.seed, 11);
    }
}
