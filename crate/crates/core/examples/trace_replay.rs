//! Records hidden states from a live decode to a JSONL trace, then replays
//! the trace under other head settings without re-running the model body.
//!
//! ```bash
//! cargo run -p dropmatch --example trace_replay
//! ```

use dropmatch::cli::replay_summary;
use dropmatch::models::{load_trace, make_draft_of, write_trace, TraceReplay};
use dropmatch::{decode, EngineConfig, LanguageModel, NeuralLm, NeuralLmConfig};

fn main() -> dropmatch::Result<()> {
    let cfg_model = NeuralLmConfig {
        vocab_size: 128,
        hidden_dim: 32,
        seed: 4,
        ..Default::default()
    };
    let target = NeuralLm::random(&cfg_model)?;
    let draft = make_draft_of(&target, 0.3, 5)?;
    let engine = EngineConfig {
        max_tokens: 200,
        record_hidden: true,
        ..Default::default()
    };
    let live = decode(&draft, &target, &[3, 1, 4, 1], &engine)?;

    let path = std::env::temp_dir().join("dropmatch_example_trace.jsonl");
    let (header, records) = live.trace(cfg_model.hidden_dim, cfg_model.vocab_size);
    write_trace(&path, &header, &records)?;
    println!("wrote {} positions to {}", records.len(), path.display());

    let replay = TraceReplay::new(load_trace(&path)?, target.head().unwrap().clone())?;
    for (heads, p_drop) in [(5, 0.3), (3, 0.3), (9, 0.3), (5, 0.1), (5, 0.5)] {
        let s = replay_summary(
            &replay,
            &EngineConfig {
                heads,
                p_drop,
                ..engine.clone()
            },
        )?;
        println!(
            "K = {heads}, p_drop = {p_drop}: acceptance {:.3}, tau {:.3}, unanimity {:.3}",
            s.acceptance_rate,
            s.tau_with_bonus,
            s.unanimity_ratio.unwrap_or(0.0)
        );
    }
    std::fs::remove_file(&path).ok();
    Ok(())
}
