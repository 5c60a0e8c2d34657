//! Applies every acceptance rule to the same draft token and head samples.
//!
//! ```bash
//! cargo run -p dropmatch --example acceptance_rules
//! ```

use dropmatch::acceptance::{dropmatch_accept, greedy_match, lossless_accept, naive_match};
use dropmatch::models::make_draft_of;
use dropmatch::rng::{self, Domain};
use dropmatch::{DecodeMode, DraftToken, LanguageModel, MajorityRule, McHead, NeuralLm, NeuralLmConfig};

fn main() -> dropmatch::Result<()> {
    let target = NeuralLm::random(&NeuralLmConfig {
        vocab_size: 32,
        hidden_dim: 16,
        head_gain: 8.0,
        seed: 9,
        ..Default::default()
    })?;
    let draft = make_draft_of(&target, 0.5, 10)?;
    let ctx = [1, 2, 3];
    let fwd = target.forward(&ctx)?;
    let h = fwd.hidden.expect("neural models return their hidden state");
    let samples = McHead::new(5, 0.3)?.sample(target.head().unwrap(), &h, 1, ctx.len() as u64)?;
    let draft_dist = draft.next_dist(&ctx)?;

    println!(
        "target argmax {}, head argmaxes {:?}",
        fwd.dist.argmax(),
        samples.argmax_tokens
    );
    for token in [draft_dist.argmax(), fwd.dist.argmax(), 0] {
        let d = DraftToken::new(token, draft_dist.clone())?;
        let dm = dropmatch_accept(&d, &samples, MajorityRule::Plurality)?;
        let strict = dropmatch_accept(&d, &samples, MajorityRule::Strict)?;
        let mut s = rng::stream(1, Domain::Lossless, 0, 0);
        let ll = lossless_accept(&d, &fwd.dist, DecodeMode::Sampled, &mut s)?;
        println!("draft token {token}:");
        println!("  greedy match   {}", greedy_match(&d, &fwd.dist).accepted);
        println!("  lossless       {} (replacement {:?})", ll.accepted, ll.replacement);
        println!("  naive          {}", naive_match(&d, &samples).accepted);
        println!(
            "  dropmatch      {} via {:?}, JS(draft) {:.4} vs max JS(head) {:.4}",
            dm.accepted,
            dm.branch,
            dm.js_draft_to_centroid.unwrap(),
            dm.max_js_head_to_centroid.unwrap()
        );
        println!("  strict majority fallback {}", strict.accepted);
    }
    Ok(())
}
