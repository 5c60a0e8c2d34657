use std::collections::HashMap;

use rand::Rng;

use super::{Forward, LanguageModel};
use crate::error::{Error, Result};
use crate::math::ProbDist;
use crate::rng::{self, Domain};

/// n-gram conditional table with backoff.
///
/// Conditionals are stored per context suffix of length `0..order`. A lookup
/// tries the longest available suffix first, then shorter ones, and finally
/// falls back to uniform.
#[derive(Debug, Clone, Default)]
pub struct TableLm {
    vocab: usize,
    order: usize,
    table: HashMap<Vec<usize>, ProbDist>,
}

impl TableLm {
    pub fn new(vocab: usize, order: usize) -> Result<Self> {
        if vocab < 2 {
            return Err(Error::input("table LM needs a vocabulary of at least 2"));
        }
        if order == 0 {
            return Err(Error::input("table LM order must be at least 1"));
        }
        Ok(Self {
            vocab,
            order,
            table: HashMap::new(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn insert(&mut self, context: &[usize], dist: ProbDist) -> Result<()> {
        if context.len() >= self.order {
            return Err(Error::input(format!(
                "context of length {} exceeds order {}",
                context.len(),
                self.order
            )));
        }
        if dist.len() != self.vocab {
            return Err(Error::input("distribution length does not match vocabulary"));
        }
        self.check_tokens(context)?;
        self.table.insert(context.to_vec(), dist);
        Ok(())
    }

    /// A table with one random conditional for every full-length context.
    /// `sharpness` raises uniform draws to that power before normalising;
    /// larger values give peakier conditionals.
    pub fn random(vocab: usize, order: usize, sharpness: f64, seed: u64) -> Result<Self> {
        let mut lm = Self::new(vocab, order)?;
        let contexts = (vocab as u64).checked_pow(order as u32 - 1).filter(|n| *n <= 1 << 20);
        let Some(contexts) = contexts else {
            return Err(Error::input("random table would exceed 2^20 contexts"));
        };
        for idx in 0..contexts {
            let mut ctx = Vec::with_capacity(order - 1);
            let mut rest = idx;
            for _ in 0..order - 1 {
                ctx.push((rest % vocab as u64) as usize);
                rest /= vocab as u64;
            }
            ctx.reverse();
            let mut rng = rng::stream(seed, Domain::Params, idx, 0);
            let w: Vec<f64> = (0..vocab).map(|_| rng.random::<f64>().powf(sharpness)).collect();
            let dist = ProbDist::from_weights(w).unwrap_or_else(|_| ProbDist::uniform(vocab));
            lm.table.insert(ctx, dist);
        }
        Ok(lm)
    }

    /// Maximum-likelihood counts of every order up to `order`.
    pub fn fit(vocab: usize, order: usize, corpus: &[Vec<usize>]) -> Result<Self> {
        let mut lm = Self::new(vocab, order)?;
        let mut counts: HashMap<Vec<usize>, Vec<f64>> = HashMap::new();
        for seq in corpus {
            lm.check_tokens(seq)?;
            for (i, &tok) in seq.iter().enumerate() {
                for n in 0..order.min(i + 1) {
                    let ctx = seq[i - n..i].to_vec();
                    counts.entry(ctx).or_insert_with(|| vec![0.0; vocab])[tok] += 1.0;
                }
            }
        }
        for (ctx, c) in counts {
            lm.table.insert(ctx, ProbDist::from_weights(c)?);
        }
        Ok(lm)
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        match tokens.iter().find(|&&t| t >= self.vocab) {
            Some(t) => Err(Error::input(format!(
                "token {t} outside vocabulary of size {}",
                self.vocab
            ))),
            None => Ok(()),
        }
    }

    pub fn lookup(&self, context: &[usize]) -> ProbDist {
        let longest = context.len().min(self.order - 1);
        for n in (0..=longest).rev() {
            if let Some(d) = self.table.get(&context[context.len() - n..]) {
                return d.clone();
            }
        }
        ProbDist::uniform(self.vocab)
    }
}

impl LanguageModel for TableLm {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn forward(&self, context: &[usize]) -> Result<Forward> {
        self.check_tokens(context)?;
        Ok(Forward {
            hidden: None,
            dist: self.lookup(context),
        })
    }
}
