//! Runs a small parameter sweep in-process and writes the CSV to stdout.
//!
//! ```bash
//! cargo run --release -p dropmatch --example bench_sweep
//! ```

use dropmatch::cli::{cmd_bench, write_csv, SweepSpec};

const SWEEP: &str = r#"
[target]
kind = "neural"
vocab_size = 128
hidden_dim = 32
seed = 1

[draft]
kind = "perturbed"
epsilon = 0.1
seed = 2

[engine]
criterion = "dropmatch_js"
draft_length = 5
heads = 5
p_drop = 0.3
seed = 0
max_tokens = 48

[prompts]
count = 4

[sweep]
criterion = ["greedy_match", "dropmatch_js"]
heads = [3, 5, 9]
p_drop = [0.1, 0.3]
base_seed = 11
"#;

fn main() -> dropmatch::Result<()> {
    let spec = SweepSpec::from_toml(SWEEP)?;
    let rows = cmd_bench(&spec)?;
    write_csv(std::io::stdout().lock(), &rows)
}
