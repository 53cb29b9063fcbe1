use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::lora::LoraState;
use super::ModelConfig;
use crate::embed_init::{EmbeddingMatrix, VocabPartition};
use crate::{Error, Result};

pub const INIT_SIGMA: f64 = 0.02;

/// One pre-norm transformer block: attention (q, k, v, o) and a gated
/// FFN (gate, up, down), each with its own RMSNorm scale. All
/// projections are stored `out × in` and applied as `y = x · Wᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub attn_norm: Array1<f64>,
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub ffn_norm: Array1<f64>,
    pub w_gate: Array2<f64>,
    pub w_up: Array2<f64>,
    pub w_down: Array2<f64>,
}

/// All weights of the toy LM. Embedding and head are untied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub cfg: ModelConfig,
    pub embed: EmbeddingMatrix,
    pub blocks: Vec<Block>,
    pub final_norm: Array1<f64>,
    pub head: EmbeddingMatrix,
    /// Which vocabulary rows are pretrained vs newly initialized, when
    /// the model was extended to a merged vocabulary.
    pub partition: Option<VocabPartition>,
    /// Low-rank adapters, when attached.
    pub lora: Option<LoraState>,
}

/// Borrowed view of one named parameter tensor.
pub enum TensorRef<'a> {
    Mat(&'a Array2<f64>),
    Vec(&'a Array1<f64>),
}

pub enum TensorMut<'a> {
    Mat(&'a mut Array2<f64>),
    Vec(&'a mut Array1<f64>),
}

impl TensorRef<'_> {
    pub fn len(&self) -> usize {
        match self {
            TensorRef::Mat(m) => m.len(),
            TensorRef::Vec(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One gradient (or optimizer-moment) tensor, keyed by parameter name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GradTensor {
    Mat(Array2<f64>),
    Vec(Array1<f64>),
}

impl GradTensor {
    pub fn iter(&self) -> Box<dyn Iterator<Item = &f64> + '_> {
        match self {
            GradTensor::Mat(m) => Box::new(m.iter()),
            GradTensor::Vec(v) => Box::new(v.iter()),
        }
    }
}

/// Gradients of the loss, one entry per parameter tensor that was
/// requested. Tensor names follow the `visit` enumeration: `embed`,
/// `head`, `final_norm`, `blocks.{i}.wq` … plus `….lora_a` /
/// `….lora_b` when adapters are attached.
pub type Gradients = BTreeMap<String, GradTensor>;

pub fn block_tensor_names(i: usize) -> [String; 9] {
    [
        format!("blocks.{i}.attn_norm"),
        format!("blocks.{i}.wq"),
        format!("blocks.{i}.wk"),
        format!("blocks.{i}.wv"),
        format!("blocks.{i}.wo"),
        format!("blocks.{i}.ffn_norm"),
        format!("blocks.{i}.w_gate"),
        format!("blocks.{i}.w_up"),
        format!("blocks.{i}.w_down"),
    ]
}

impl ModelParams {
    /// Visit every parameter tensor (including adapters) in a fixed
    /// deterministic order.
    pub fn visit(&self, f: &mut impl FnMut(&str, TensorRef<'_>)) {
        f("embed", TensorRef::Mat(&self.embed.data));
        for (i, b) in self.blocks.iter().enumerate() {
            let names = block_tensor_names(i);
            f(&names[0], TensorRef::Vec(&b.attn_norm));
            f(&names[1], TensorRef::Mat(&b.wq));
            f(&names[2], TensorRef::Mat(&b.wk));
            f(&names[3], TensorRef::Mat(&b.wv));
            f(&names[4], TensorRef::Mat(&b.wo));
            f(&names[5], TensorRef::Vec(&b.ffn_norm));
            f(&names[6], TensorRef::Mat(&b.w_gate));
            f(&names[7], TensorRef::Mat(&b.w_up));
            f(&names[8], TensorRef::Mat(&b.w_down));
        }
        f("final_norm", TensorRef::Vec(&self.final_norm));
        f("head", TensorRef::Mat(&self.head.data));
        if let Some(lora) = &self.lora {
            for (target, ad) in &lora.adapters {
                f(&format!("{target}.lora_a"), TensorRef::Mat(&ad.a));
                f(&format!("{target}.lora_b"), TensorRef::Mat(&ad.b));
            }
        }
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&str, TensorMut<'_>)) {
        f("embed", TensorMut::Mat(&mut self.embed.data));
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let names = block_tensor_names(i);
            f(&names[0], TensorMut::Vec(&mut b.attn_norm));
            f(&names[1], TensorMut::Mat(&mut b.wq));
            f(&names[2], TensorMut::Mat(&mut b.wk));
            f(&names[3], TensorMut::Mat(&mut b.wv));
            f(&names[4], TensorMut::Mat(&mut b.wo));
            f(&names[5], TensorMut::Vec(&mut b.ffn_norm));
            f(&names[6], TensorMut::Mat(&mut b.w_gate));
            f(&names[7], TensorMut::Mat(&mut b.w_up));
            f(&names[8], TensorMut::Mat(&mut b.w_down));
        }
        f("final_norm", TensorMut::Vec(&mut self.final_norm));
        f("head", TensorMut::Mat(&mut self.head.data));
        if let Some(lora) = &mut self.lora {
            for (target, ad) in &mut lora.adapters {
                f(&format!("{target}.lora_a"), TensorMut::Mat(&mut ad.a));
                f(&format!("{target}.lora_b"), TensorMut::Mat(&mut ad.b));
            }
        }
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit(&mut |name, _| names.push(name.to_string()));
        names
    }

    /// Total scalar parameter count, adapters included when attached.
    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.len());
        n
    }

    pub fn validate_finite(&self) -> Result<()> {
        let mut bad: Option<String> = None;
        self.visit(&mut |name, t| {
            let finite = match t {
                TensorRef::Mat(m) => m.iter().all(|v| v.is_finite()),
                TensorRef::Vec(v) => v.iter().all(|v| v.is_finite()),
            };
            if !finite && bad.is_none() {
                bad = Some(name.to_string());
            }
        });
        match bad {
            Some(name) => Err(Error::model(format!("non-finite values in {name}"))),
            None => Ok(()),
        }
    }
}

/// Seeded deterministic initialization: normal(0, 0.02²) for embed,
/// head, and every projection; ones for norm scales.
pub fn build_model(cfg: &ModelConfig, seed: u64) -> Result<ModelParams> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_SIGMA).expect("valid sigma");
    let mut mat = |rows: usize, cols: usize| {
        Array2::from_shape_fn((rows, cols), |_| normal.sample(&mut rng))
    };

    let d = cfg.dim;
    let f = cfg.ffn_hidden();
    let embed = EmbeddingMatrix::new(mat(cfg.vocab, d));
    let blocks = (0..cfg.layers)
        .map(|_| Block {
            attn_norm: Array1::ones(d),
            wq: mat(d, d),
            wk: mat(d, d),
            wv: mat(d, d),
            wo: mat(d, d),
            ffn_norm: Array1::ones(d),
            w_gate: mat(f, d),
            w_up: mat(f, d),
            w_down: mat(d, f),
        })
        .collect();
    let final_norm = Array1::ones(d);
    let head = EmbeddingMatrix::new(mat(cfg.vocab, d));

    Ok(ModelParams {
        cfg: cfg.clone(),
        embed,
        blocks,
        final_norm,
        head,
        partition: None,
        lora: None,
    })
}
