use dropmatch::cli::{cmd_trace, replay_summary, RunConfig};
use dropmatch::metrics::summarize;
use dropmatch::models::{load_trace, write_trace, TraceHeader, TraceRecord, TraceReplay};
use dropmatch::{Criterion, Error};

const RUN: &str = r#"
[target]
kind = "neural"
vocab_size = 48
hidden_dim = 12
context = 3
head_gain = 8.0
seed = 4

[draft]
kind = "perturbed"
epsilon = 0.4
seed = 5

[engine]
criterion = "dropmatch_js"
draft_length = 4
heads = 5
p_drop = 0.3
seed = 19
max_tokens = 400
record_hidden = true

[prompts]
count = 1
length = 3
seed = 6
"#;

#[test]
fn replay_of_live_decode_reproduces_metrics() {
    let cfg = RunConfig::from_toml(RUN).unwrap();
    let models = cfg.build().unwrap();
    let prompt = cfg.prompts.build(48).unwrap().remove(0);
    let live = dropmatch::decode(models.draft.as_ref(), models.target.as_ref(), &prompt, &cfg.engine).unwrap();
    let live_summary = summarize(std::slice::from_ref(&live)).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("live.jsonl");
    let (header, records) = live.trace(12, 48);
    write_trace(&path, &header, &records).unwrap();
    let replayed = cmd_trace(&path, &cfg).unwrap();

    assert!(live_summary.evaluated_positions > 100);
    assert!(live_summary.branches.majority_pass > 0, "{:?}", live_summary.branches);
    assert!(live_summary.branches.rejected > 0);
    assert_eq!(replayed.steps, live_summary.steps);
    assert_eq!(replayed.tau_draft_only, live_summary.tau_draft_only);
    assert_eq!(replayed.tau_with_bonus, live_summary.tau_with_bonus);
    assert_eq!(replayed.agreement_histogram, live_summary.agreement_histogram);
    assert_eq!(replayed.mean_prob_by_agreement, live_summary.mean_prob_by_agreement);
    assert_eq!(replayed.js_stats, live_summary.js_stats);
    assert_eq!(replayed.branches, live_summary.branches);
    assert_eq!(replayed.acceptance_rate, live_summary.acceptance_rate);
    assert_eq!(replayed.head_time_fraction, 0.0);
    assert_eq!(replayed.tokens_per_second, 0.0);
    // Only the last step can be cut short by max_tokens.
    let untruncated: usize = live.steps.iter().map(|s| s.accepted_count + 1).sum();
    assert!(untruncated as u64 >= live_summary.tokens_emitted);
    assert_eq!(replayed.tokens_emitted as usize, untruncated);
}

#[test]
fn trace_steps_are_absolute_positions() {
    let cfg = RunConfig::from_toml(RUN).unwrap();
    let models = cfg.build().unwrap();
    let prompt = cfg.prompts.build(48).unwrap().remove(0);
    let live = dropmatch::decode(models.draft.as_ref(), models.target.as_ref(), &prompt, &cfg.engine).unwrap();
    let (_, records) = live.trace(12, 48);
    assert_eq!(records[0].step, prompt.len() as u64);
    // Consecutive within a round; a fully accepted round skips the bonus
    // position, which is never verified.
    let mut expected = prompt.len() as u64;
    let mut steps = records.iter().map(|r| r.step);
    for s in &live.steps {
        for _ in s.evaluated() {
            assert_eq!(steps.next(), Some(expected));
            expected += 1;
        }
        if s.accepted_count == s.proposed.len() {
            expected += 1;
        }
    }
    assert_eq!(steps.next(), None);
}

#[test]
fn deterministic_argmax_draft_always_accepted_without_dropout() {
    let mut cfg = RunConfig::from_toml(RUN).unwrap();
    cfg.engine.p_drop = 0.0;
    let target = cfg.build_target().unwrap();
    let head = target.head().unwrap().clone();
    let prompts = dropmatch::cli::random_prompts(40, 3, 48, 8);
    let records: Vec<TraceRecord> = prompts
        .iter()
        .enumerate()
        .map(|(i, ctx)| {
            let f = target.forward(ctx).unwrap();
            let dist = f.dist.clone();
            TraceRecord {
                step: i as u64,
                hidden: f.hidden.unwrap(),
                draft_token: dist.argmax(),
                draft_probs: dist.into_inner(),
            }
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("argmax.jsonl");
    write_trace(&path, &TraceHeader::new(12, 48), &records).unwrap();
    let replay = TraceReplay::new(load_trace(&path).unwrap(), head).unwrap();
    for criterion in [Criterion::DropmatchJs, Criterion::Naive, Criterion::GreedyMatch] {
        let engine = dropmatch::EngineConfig {
            criterion,
            ..cfg.engine.clone()
        };
        let s = replay_summary(&replay, &engine).unwrap();
        assert_eq!(s.acceptance_rate, 1.0, "{criterion}");
        assert_eq!(s.evaluated_positions, 40);
    }
}

#[test]
fn header_only_trace_has_no_steps() {
    let cfg = RunConfig::from_toml(RUN).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.jsonl");
    write_trace(&path, &TraceHeader::new(12, 48), &[]).unwrap();
    match cmd_trace(&path, &cfg) {
        Err(Error::Validation(msg)) => assert!(msg.contains("no steps")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn trace_for_another_head_is_rejected() {
    let cfg = RunConfig::from_toml(RUN).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.jsonl");
    write_trace(&path, &TraceHeader::new(12, 64), &[]).unwrap();
    assert!(matches!(cmd_trace(&path, &cfg), Err(Error::Validation(_))));
}

#[test]
fn out_of_order_steps_name_the_step() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("o.jsonl");
    let rec = |step| TraceRecord {
        step,
        hidden: dropmatch::HiddenState::zeros(2),
        draft_probs: vec![0.5, 0.5],
        draft_token: 1,
    };
    write_trace(&path, &TraceHeader::new(2, 2), &[rec(4), rec(4)]).unwrap();
    match load_trace(&path) {
        Err(Error::Validation(msg)) => assert!(msg.starts_with("step 4"), "{msg}"),
        other => panic!("unexpected {other:?}"),
    }
}
