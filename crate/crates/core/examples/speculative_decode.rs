//! Decodes one prompt speculatively and prints each verification round.
//!
//! ```bash
//! cargo run -p dropmatch --example speculative_decode
//! ```

use dropmatch::engine::greedy_decode;
use dropmatch::metrics::summarize;
use dropmatch::models::make_draft_of;
use dropmatch::{decode, Criterion, EngineConfig, NeuralLm, NeuralLmConfig};

fn main() -> dropmatch::Result<()> {
    let target = NeuralLm::random(&NeuralLmConfig {
        seed: 1,
        ..Default::default()
    })?;
    let draft = make_draft_of(&target, 0.2, 2)?;
    let prompt = [10, 20, 30, 40];
    let cfg = EngineConfig {
        criterion: Criterion::DropmatchJs,
        draft_length: 5,
        heads: 5,
        p_drop: 0.3,
        seed: 7,
        max_tokens: 40,
        ..Default::default()
    };

    let out = decode(&draft, &target, &prompt, &cfg)?;
    for (i, step) in out.steps.iter().enumerate() {
        let branches: Vec<String> = step.evaluated().map(|o| format!("{:?}", o.decision.branch)).collect();
        println!(
            "round {i:>2}: accepted {}/{} +1 -> {:?}  [{}]",
            step.accepted_count,
            cfg.draft_length,
            step.tokens(),
            branches.join(", ")
        );
    }
    let s = summarize(std::slice::from_ref(&out))?;
    println!(
        "tau {:.3} (draft only {:.3}) over {} rounds",
        s.tau_with_bonus, s.tau_draft_only, s.steps
    );

    let reference = greedy_decode(&target, &prompt, cfg.max_tokens, None)?;
    let same = out.tokens.iter().zip(&reference).take_while(|(a, b)| a == b).count();
    println!("first {same} tokens agree with target greedy decoding");
    Ok(())
}
