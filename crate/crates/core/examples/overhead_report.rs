//! Wall-clock share of decode time spent in the MC-dropout head, next to the
//! same share for greedy exact match.
//!
//! The reference model has a body noticeably heavier than its LM head, which
//! is the regime the head is meant for. Run in release mode:
//!
//! ```bash
//! cargo run --release -p dropmatch --example overhead_report
//! ```

use dropmatch::cli::random_prompts;
use dropmatch::engine::{decode, Timing};
use dropmatch::metrics::OverheadComparison;
use dropmatch::models::make_draft_of;
use dropmatch::{Criterion, EngineConfig, NeuralLm, NeuralLmConfig, StepRecord};

fn main() -> dropmatch::Result<()> {
    let target = NeuralLm::random(&NeuralLmConfig {
        vocab_size: 256,
        hidden_dim: 256,
        context: 32,
        seed: 11,
        ..Default::default()
    })?;
    let draft = make_draft_of(&target, 0.05, 12)?;
    let prompts = random_prompts(8, 8, 256, 13);

    let run = |criterion| -> dropmatch::Result<Vec<StepRecord>> {
        let cfg = EngineConfig {
            criterion,
            draft_length: 5,
            heads: 5,
            p_drop: 0.3,
            seed: 5,
            max_tokens: 64,
            timing: Timing::Wall,
            ..Default::default()
        };
        let mut steps = Vec::new();
        for p in &prompts {
            steps.extend(decode(&draft, &target, p, &cfg)?.steps);
        }
        Ok(steps)
    };

    let dm = run(Criterion::DropmatchJs)?;
    let greedy = run(Criterion::GreedyMatch)?;
    let cmp = OverheadComparison::new(&dm, &greedy);
    println!("dropmatch head fraction {:.4}", cmp.dropmatch_fraction);
    println!("greedy head fraction    {:.4}", cmp.greedy_fraction);
    println!("delta                   {:.4}", cmp.delta);
    Ok(())
}
