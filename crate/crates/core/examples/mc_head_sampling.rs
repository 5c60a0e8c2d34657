//! Samples a handful of dropout heads for one hidden state and shows how
//! they spread around their centroid.
//!
//! ```bash
//! cargo run -p dropmatch --example mc_head_sampling
//! ```

use dropmatch::acceptance::centroid;
use dropmatch::math::js_divergence;
use dropmatch::{LanguageModel, McHead, NeuralLm, NeuralLmConfig};

fn main() -> dropmatch::Result<()> {
    let model = NeuralLm::random(&NeuralLmConfig {
        vocab_size: 64,
        hidden_dim: 32,
        seed: 3,
        ..Default::default()
    })?;
    let h = model.hidden(&[5, 17, 2, 40])?;
    let w = model.head().expect("neural models expose their head");

    for p_drop in [0.0, 0.1, 0.3, 0.5] {
        let samples = McHead::new(8, p_drop)?.sample(w, &h, 42, 0)?;
        let c = centroid(&samples)?;
        let spread: Vec<String> = samples
            .dists
            .iter()
            .map(|p| js_divergence(p, &c).map(|x| format!("{x:.4}")))
            .collect::<dropmatch::Result<_>>()?;
        println!("p_drop {p_drop}: argmax {:?}", samples.argmax_tokens);
        println!(
            "  deterministic argmax {}, centroid argmax {}",
            samples.deterministic_dist.argmax(),
            c.argmax()
        );
        println!("  JS(head, centroid) {}", spread.join(" "));
    }
    Ok(())
}
