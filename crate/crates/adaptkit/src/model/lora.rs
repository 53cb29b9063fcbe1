use std::collections::BTreeMap;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::params::{block_tensor_names, ModelParams, INIT_SIGMA};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraConfig {
    pub rank: usize,
    pub alpha: f64,
    /// Target tensor names; empty means the default set (every
    /// attention and FFN projection of every block).
    pub targets: Vec<String>,
}

impl Default for LoraConfig {
    fn default() -> Self {
        LoraConfig {
            rank: 8,
            alpha: 16.0,
            targets: Vec::new(),
        }
    }
}

/// A low-rank pair for one target `W [out × in]`: `A [r × in]`,
/// `B [out × r]`; the effective weight is `W + (alpha/rank)·B·A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adapter {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraState {
    pub cfg: LoraConfig,
    pub adapters: BTreeMap<String, Adapter>,
}

impl LoraState {
    pub fn scaling(&self) -> f64 {
        self.cfg.alpha / self.cfg.rank as f64
    }

    /// `(alpha/rank)·B·A`, the additive low-rank term for one target.
    pub fn delta(&self, target: &str) -> Option<Array2<f64>> {
        self.adapters
            .get(target)
            .map(|ad| self.scaling() * ad.b.dot(&ad.a))
    }
}

fn default_targets(layers: usize) -> Vec<String> {
    let mut t = Vec::new();
    for i in 0..layers {
        for name in block_tensor_names(i) {
            if !name.ends_with("norm") {
                t.push(name);
            }
        }
    }
    t
}

fn target_shape(params: &ModelParams, name: &str) -> Result<(usize, usize)> {
    let mut shape = None;
    params.visit(&mut |n, t| {
        if n == name {
            if let super::params::TensorRef::Mat(m) = t {
                shape = Some((m.nrows(), m.ncols()));
            }
        }
    });
    shape.ok_or_else(|| Error::config(format!("unknown adapter target {name:?}")))
}

/// Attach zero-initialized low-rank adapters (`A ~ normal(0, 0.02²)`,
/// `B = 0`), so the forward pass is unchanged until training moves `B`.
pub fn lora_attach(params: &mut ModelParams, cfg: &LoraConfig, seed: u64) -> Result<()> {
    if params.lora.is_some() {
        return Err(Error::model("adapters are already attached"));
    }
    if cfg.rank == 0 {
        return Err(Error::config("adapter rank must be ≥ 1"));
    }
    let targets = if cfg.targets.is_empty() {
        default_targets(params.blocks.len())
    } else {
        cfg.targets.clone()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_SIGMA).expect("valid sigma");
    let mut adapters = BTreeMap::new();
    for name in targets {
        let (out, inp) = target_shape(params, &name)?;
        if cfg.rank > out.min(inp) {
            return Err(Error::config(format!(
                "adapter rank {} exceeds min dim {} of {name}",
                cfg.rank,
                out.min(inp)
            )));
        }
        let a = Array2::from_shape_fn((cfg.rank, inp), |_| normal.sample(&mut rng));
        let b = Array2::zeros((out, cfg.rank));
        adapters.insert(name, Adapter { a, b });
    }
    params.lora = Some(LoraState {
        cfg: cfg.clone(),
        adapters,
    });
    Ok(())
}

/// Fold each adapter into its base weight (`W ← W + (alpha/rank)·B·A`)
/// and remove the adapters; forward outputs are preserved.
pub fn lora_merge(params: &mut ModelParams) -> Result<()> {
    let lora = params
        .lora
        .take()
        .ok_or_else(|| Error::model("no adapters attached"))?;
    for (target, ad) in &lora.adapters {
        let delta = lora.scaling() * ad.b.dot(&ad.a);
        let mut applied = false;
        params.visit_mut(&mut |n, t| {
            if n == target {
                if let super::params::TensorMut::Mat(m) = t {
                    *m += &delta;
                    applied = true;
                }
            }
        });
        if !applied {
            return Err(Error::model(format!("adapter target {target:?} vanished")));
        }
    }
    Ok(())
}
