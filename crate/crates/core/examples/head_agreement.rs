//! Histogram of how many dropout heads agree on their top token, and the
//! mean target probability of that token in each bucket.
//!
//! ```bash
//! cargo run --release -p dropmatch --example head_agreement
//! ```

use dropmatch::cli::random_prompts;
use dropmatch::metrics::agreement_stats_of;
use dropmatch::{LanguageModel, McHead, NeuralLm, NeuralLmConfig};

fn main() -> dropmatch::Result<()> {
    let model = NeuralLm::random(&NeuralLmConfig {
        head_gain: 8.0,
        seed: 6,
        ..Default::default()
    })?;
    let w = model.head().unwrap();
    let contexts = random_prompts(2000, 4, model.vocab_size(), 7);
    let hidden = contexts
        .iter()
        .map(|c| model.hidden(c))
        .collect::<dropmatch::Result<Vec<_>>>()?;

    for p_drop in [0.1, 0.3, 0.5] {
        let head = McHead::new(5, p_drop)?;
        let samples = hidden
            .iter()
            .enumerate()
            .map(|(i, h)| head.sample(w, h, 1, i as u64))
            .collect::<dropmatch::Result<Vec<_>>>()?;
        let stats = agreement_stats_of(&samples)?;
        println!(
            "p_drop {p_drop}: unanimity {:.3}",
            stats.unanimity_ratio().unwrap_or(0.0)
        );
        for (size, (count, prob)) in stats.histogram.iter().zip(&stats.mean_prob).enumerate() {
            let prob = prob.map(|p| format!("{p:.3}")).unwrap_or_else(|| "-".into());
            println!("  {}/5 agree: {count:>5} positions, mean p(top) {prob}", size + 1);
        }
    }
    Ok(())
}
