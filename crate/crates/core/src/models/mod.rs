//! Draft and target language models.
//!
//! Every model maps a token context to a next-token distribution. Models
//! that expose their final hidden state and LM head can serve as the target
//! for the dropout-head criteria.

mod neural;
mod table;
mod trace;

pub use neural::{make_draft_of, NeuralLm, NeuralLmConfig};
pub use table::TableLm;
pub use trace::{load_trace, write_trace, Trace, TraceHeader, TraceRecord, TraceReplay, TRACE_NORM_TOLERANCE};

use crate::error::Result;
use crate::math::ProbDist;
use crate::mc_head::{HeadWeights, HiddenState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Capabilities {
    pub has_hidden_state: bool,
    pub is_replay: bool,
}

/// One forward evaluation at a context.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub hidden: Option<HiddenState>,
    pub dist: ProbDist,
}

pub trait LanguageModel: Send + Sync {
    fn vocab_size(&self) -> usize;

    fn hidden_dim(&self) -> Option<usize> {
        None
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::default()
    }

    fn forward(&self, context: &[usize]) -> Result<Forward>;

    fn next_dist(&self, context: &[usize]) -> Result<ProbDist> {
        Ok(self.forward(context)?.dist)
    }

    /// The LM head, for models with `has_hidden_state`.
    fn head(&self) -> Option<&HeadWeights> {
        None
    }

    /// Work units charged to one forward call by the counted clock.
    fn forward_cost(&self) -> u64 {
        self.vocab_size() as u64
    }
}
