//! FLOPs-per-token formulas, Enoki model sizes and the 20-tokens-per-parameter rule.

use serde::{Deserialize, Serialize};

pub const GPT2_VOCAB: u64 = 50_304;
pub const SEQ_LEN: u64 = 2048;
pub const TOKENS_PER_BATCH: u64 = 65_536;
/// FLOPs in one petaflop-hour.
pub const PFH: f64 = 3.6e18;
/// FLOPs in one petaflop-day.
pub const PF_DAY: f64 = 8.64e19;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub n_layer: u64,
    pub n_embd: u64,
    pub n_head: u64,
    pub head_dim: u64,
    pub vocab: u64,
    pub seq_len: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlopsFormula {
    /// Non-embedding matmuls only.
    #[serde(rename = "6p")]
    SixP,
    /// Adds embedding and unembedding.
    #[serde(rename = "6n")]
    SixN,
    /// Adds attention score/value products.
    M,
}

/// How embedding parameters enter the total count D.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingCount {
    /// Untied input and output embeddings.
    #[default]
    TwoSided,
    OneSided,
}

impl ArchSpec {
    /// Enoki scaling: head_dim 64, n_layer = ⌊3·heads/4⌋.
    pub fn enoki(heads: u64) -> Self {
        Self {
            n_layer: 3 * heads / 4,
            n_embd: 64 * heads,
            n_head: heads,
            head_dim: 64,
            vocab: GPT2_VOCAB,
            seq_len: SEQ_LEN,
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.n_embd == self.n_head * self.head_dim
    }

    /// Non-embedding parameters, 12·n_embd²·n_layer.
    pub fn non_embedding_params(&self) -> u64 {
        12 * self.n_embd * self.n_embd * self.n_layer
    }

    pub fn total_params(&self, emb: EmbeddingCount) -> u64 {
        let sides = match emb {
            EmbeddingCount::TwoSided => 2,
            EmbeddingCount::OneSided => 1,
        };
        self.non_embedding_params() + sides * self.n_embd * self.vocab
    }
}

pub fn compute_flops(arch: &ArchSpec, formula: FlopsFormula) -> u64 {
    let core = 72 * arch.n_layer * arch.n_embd * arch.n_embd;
    match formula {
        FlopsFormula::SixP => core,
        FlopsFormula::SixN => core + 6 * arch.vocab * arch.n_embd,
        FlopsFormula::M => core + 12 * arch.n_layer * arch.n_embd * arch.seq_len,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPlan {
    pub tokens: u64,
    pub iterations: u64,
}

/// N = 20·D tokens, ⌊N / tokens_per_batch⌋ iterations.
pub fn chinchilla_plan(total_params: u64, tokens_per_batch: u64) -> TrainingPlan {
    let tokens = 20 * total_params;
    TrainingPlan {
        tokens,
        iterations: tokens / tokens_per_batch.max(1),
    }
}

/// Training compute in PFH for a per-token cost and token count.
pub fn compute_pfh(flops_per_token: u64, tokens: u64) -> f64 {
    flops_per_token as f64 * tokens as f64 / PFH
}
