//! Acceptance length of every criterion as the draft drifts from the target.
//!
//! ```bash
//! cargo run --release -p dropmatch --example alignment_sweep
//! ```

use dropmatch::cli::random_prompts;
use dropmatch::engine::decode_streams;
use dropmatch::metrics::summarize;
use dropmatch::models::make_draft_of;
use dropmatch::{Criterion, EngineConfig, NeuralLm, NeuralLmConfig};

fn main() -> dropmatch::Result<()> {
    let target = NeuralLm::random(&NeuralLmConfig {
        seed: 1,
        ..Default::default()
    })?;
    let prompts = random_prompts(16, 4, 256, 3);

    println!(
        "{:>8} {:>14} {:>8} {:>8} {:>10}",
        "epsilon", "criterion", "tau", "tau/L", "unanimity"
    );
    for eps in [0.0, 0.1, 0.2, 0.3, 0.5, 0.8] {
        let draft = make_draft_of(&target, eps, 2)?;
        for criterion in Criterion::ALL {
            let cfg = EngineConfig {
                criterion,
                draft_length: 5,
                heads: 5,
                p_drop: 0.3,
                seed: 7,
                max_tokens: 64,
                ..Default::default()
            };
            let s = summarize(&decode_streams(&draft, &target, &prompts, &cfg)?)?;
            println!(
                "{eps:>8} {:>14} {:>8.3} {:>8.3} {:>10}",
                criterion.name(),
                s.tau_with_bonus,
                s.tau_draft_only / 5.0,
                s.unanimity_ratio
                    .map(|u| format!("{u:.3}"))
                    .unwrap_or_else(|| "-".into()),
            );
        }
    }
    Ok(())
}
