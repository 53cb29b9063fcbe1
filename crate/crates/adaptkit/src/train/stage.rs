use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::adamw::{AdamW, AdamWConfig};
use super::data::DataStream;
use super::eval::evaluate_packed;
use super::schedule::cosine_lr;
use crate::model::{backward, ModelParams, TensorRef};
use crate::{Error, Result};

/// The six freeze-schedule stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageName {
    /// Only the newly initialized embedding/head rows.
    NewEmbedHead,
    /// Full embedding and head matrices.
    EmbedHead,
    /// Blocks 1, 3, 5, … (0-based).
    OddLayers,
    /// Blocks 0, 2, 4, … (0-based).
    EvenLayers,
    /// Low-rank adapter tensors only.
    LoraAll,
    /// Every tensor.
    Full,
}

impl StageName {
    pub const ALL: [StageName; 6] = [
        StageName::NewEmbedHead,
        StageName::EmbedHead,
        StageName::OddLayers,
        StageName::EvenLayers,
        StageName::LoraAll,
        StageName::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StageName::NewEmbedHead => "new_embed_head",
            StageName::EmbedHead => "embed_head",
            StageName::OddLayers => "odd_layers",
            StageName::EvenLayers => "even_layers",
            StageName::LoraAll => "lora_all",
            StageName::Full => "full",
        }
    }
}

impl std::str::FromStr for StageName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        StageName::ALL
            .into_iter()
            .find(|n| n.name() == s)
            .ok_or_else(|| Error::config(format!("unknown stage name: {s}")))
    }
}

/// Which part of a tensor a stage trains.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskKind {
    Full,
    /// Only this row range (used for the new-rows-only stage).
    Rows(Range<usize>),
}

/// Trainable tensors for a stage; anything absent is frozen.
pub type TrainMask = BTreeMap<String, MaskKind>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    pub name: StageName,
    pub peak_lr: f64,
    pub warmup_ratio: f64,
    pub max_steps: usize,
    /// Sequences per optimizer step.
    pub batch: usize,
    /// Evaluate every this many steps (0 = only at the end).
    pub eval_every: usize,
    /// Stop after this many evaluations without eval-loss improvement
    /// (0 = never).
    pub early_stop_patience: usize,
}

impl StagePlan {
    pub fn new(name: StageName, peak_lr: f64, max_steps: usize) -> Self {
        StagePlan {
            name,
            peak_lr,
            warmup_ratio: 0.03,
            max_steps,
            batch: 16,
            eval_every: 0,
            early_stop_patience: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.peak_lr.is_finite() && self.peak_lr > 0.0) {
            return Err(Error::config("peak_lr must be > 0"));
        }
        if !(0.0..1.0).contains(&self.warmup_ratio) {
            return Err(Error::config("warmup_ratio must be in [0, 1)"));
        }
        if self.max_steps == 0 {
            return Err(Error::config("max_steps must be ≥ 1"));
        }
        if self.batch == 0 {
            return Err(Error::config("batch must be ≥ 1"));
        }
        Ok(())
    }
}

/// Build the trainable-tensor mask for a stage and report the exact
/// trainable fraction (trainable scalars / all scalars, adapters
/// included when attached).
pub fn apply_stage_mask(params: &ModelParams, stage: StageName) -> Result<(TrainMask, f64)> {
    let mut mask = TrainMask::new();
    match stage {
        StageName::NewEmbedHead => {
            let part = params.partition.as_ref().ok_or_else(|| {
                Error::model("new_embed_head requires a vocabulary partition (extended model)")
            })?;
            if part.total_len != params.cfg.vocab {
                return Err(Error::model("vocabulary partition does not match model vocab"));
            }
            mask.insert("embed".into(), MaskKind::Rows(part.new_ids()));
            mask.insert("head".into(), MaskKind::Rows(part.new_ids()));
        }
        StageName::EmbedHead => {
            mask.insert("embed".into(), MaskKind::Full);
            mask.insert("head".into(), MaskKind::Full);
        }
        StageName::OddLayers | StageName::EvenLayers => {
            if params.blocks.len() < 2 {
                return Err(Error::model(
                    "odd/even layer stages require at least 2 layers",
                ));
            }
            let parity = if stage == StageName::OddLayers { 1 } else { 0 };
            for i in (0..params.blocks.len()).filter(|i| i % 2 == parity) {
                for name in crate::model::block_tensor_names(i) {
                    mask.insert(name, MaskKind::Full);
                }
            }
        }
        StageName::LoraAll => {
            if params.lora.is_none() {
                return Err(Error::model("lora_all requires attached adapters"));
            }
            params.visit(&mut |name, _| {
                if name.ends_with(".lora_a") || name.ends_with(".lora_b") {
                    mask.insert(name.to_string(), MaskKind::Full);
                }
            });
        }
        StageName::Full => {
            params.visit(&mut |name, _| {
                mask.insert(name.to_string(), MaskKind::Full);
            });
        }
    }

    let mut trainable = 0usize;
    let mut total = 0usize;
    params.visit(&mut |name, t| {
        total += t.len();
        match mask.get(name) {
            Some(MaskKind::Full) => trainable += t.len(),
            Some(MaskKind::Rows(r)) => {
                let cols = match t {
                    TensorRef::Mat(m) => m.ncols(),
                    TensorRef::Vec(_) => 1,
                };
                trainable += r.len() * cols;
            }
            None => {}
        }
    });
    Ok((mask, trainable as f64 / total as f64))
}

/// One metrics-timeline record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub stage: String,
    pub step: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub eval_loss: Option<f64>,
    pub eval_accuracy: Option<f64>,
    pub trainable_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: StageName,
    pub trainable_fraction: f64,
    pub steps_run: usize,
    pub early_stopped: bool,
    pub metrics: Vec<MetricsRecord>,
    pub final_eval: Option<(f64, f64)>,
}

/// Train one stage with AdamW and the cosine schedule.
///
/// `train` and `eval` are packed fixed-length sequences; batches are
/// drawn in a seed-determined shuffled order, reshuffled each epoch.
/// A non-finite loss aborts with a divergence error.
pub fn train_stage(
    params: &mut ModelParams,
    train: &[Vec<u32>],
    eval: &[Vec<u32>],
    plan: &StagePlan,
    opt_cfg: &AdamWConfig,
    seed: u64,
) -> Result<StageReport> {
    plan.validate()?;
    if train.is_empty() {
        return Err(Error::data("no training samples"));
    }
    let (mask, fraction) = apply_stage_mask(params, plan.name)?;
    let trainable: std::collections::BTreeSet<String> = mask.keys().cloned().collect();

    let mut opt = AdamW::new(opt_cfg.clone());
    let mut stream = DataStream::new(train, plan.batch, seed);
    let mut metrics = Vec::new();
    let mut best_eval = f64::INFINITY;
    let mut evals_since_best = 0usize;
    let mut early_stopped = false;
    let mut steps_run = 0usize;

    for step in 1..=plan.max_steps {
        let lr = cosine_lr(step, plan.max_steps, plan.warmup_ratio, plan.peak_lr);
        let batch = stream.next_batch();
        let (loss, _, grads) = backward(params, &batch, Some(&trainable))?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                step,
                detail: format!("non-finite training loss in stage {}", plan.name.name()),
            });
        }
        opt.step(params, &grads, &mask, lr)?;
        steps_run = step;

        let eval_now =
            (plan.eval_every > 0 && step % plan.eval_every == 0) || step == plan.max_steps;
        if eval_now {
            let ev = if eval.is_empty() {
                None
            } else {
                Some(evaluate_packed(params, eval)?)
            };
            metrics.push(MetricsRecord {
                stage: plan.name.name().to_string(),
                step,
                lr,
                train_loss: loss,
                eval_loss: ev.map(|e| e.0),
                eval_accuracy: ev.map(|e| e.1),
                trainable_fraction: fraction,
            });
            if let Some((el, _)) = ev {
                if el < best_eval - 1e-12 {
                    best_eval = el;
                    evals_since_best = 0;
                } else {
                    evals_since_best += 1;
                    if plan.early_stop_patience > 0
                        && evals_since_best >= plan.early_stop_patience
                    {
                        early_stopped = true;
                        break;
                    }
                }
            }
        }
    }

    params.validate_finite()?;
    let final_eval = if eval.is_empty() {
        None
    } else {
        Some(evaluate_packed(params, eval)?)
    };
    Ok(StageReport {
        stage: plan.name,
        trainable_fraction: fraction,
        steps_run,
        early_stopped,
        metrics,
        final_eval,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed_init::VocabPartition;
    use crate::model::{build_model, lora_attach, LoraConfig, ModelConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy() -> ModelParams {
        let cfg = ModelConfig {
            vocab: 32,
            dim: 16,
            layers: 4,
            heads: 2,
            ffn_mult: 2.0,
            context: 16,
            ..ModelConfig::default()
        };
        build_model(&cfg, 5).unwrap()
    }

    fn samples(n: usize, len: usize, vocab: u32, seed: u64) -> Vec<Vec<u32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..len).map(|_| rng.gen_range(0..vocab)).collect())
            .collect()
    }

    #[test]
    fn full_fraction_is_one_and_embed_head_matches_closed_form() {
        let m = toy();
        let (_, f_full) = apply_stage_mask(&m, StageName::Full).unwrap();
        assert_eq!(f_full, 1.0);
        let (_, f_eh) = apply_stage_mask(&m, StageName::EmbedHead).unwrap();
        let expected = (2 * 32 * 16) as f64 / m.cfg.param_count() as f64;
        assert_eq!(f_eh, expected);
    }

    #[test]
    fn odd_even_partition_the_blocks() {
        let m = toy();
        let (odd, f_odd) = apply_stage_mask(&m, StageName::OddLayers).unwrap();
        let (even, f_even) = apply_stage_mask(&m, StageName::EvenLayers).unwrap();
        assert!(odd.keys().all(|k| k.starts_with("blocks.1") || k.starts_with("blocks.3")));
        assert!(even.keys().all(|k| k.starts_with("blocks.0") || k.starts_with("blocks.2")));
        assert_eq!(f_odd, f_even); // 4 layers split evenly
        // closed form: 2 blocks of (2d + 4d² + 3·d·f) over total
        let d = 16;
        let f = 32;
        let per_block = 2 * d + 4 * d * d + 3 * d * f;
        assert_eq!(f_odd, (2 * per_block) as f64 / m.cfg.param_count() as f64);
    }

    #[test]
    fn new_embed_head_requires_partition_and_masks_rows() {
        let mut m = toy();
        assert!(apply_stage_mask(&m, StageName::NewEmbedHead).is_err());
        m.partition = Some(VocabPartition {
            pretrained_len: 24,
            total_len: 32,
        });
        let (mask, frac) = apply_stage_mask(&m, StageName::NewEmbedHead).unwrap();
        assert_eq!(mask["embed"], MaskKind::Rows(24..32));
        assert_eq!(frac, (2 * 8 * 16) as f64 / m.cfg.param_count() as f64);
    }

    #[test]
    fn lora_fraction_counts_adapters_in_both_sides() {
        let mut m = toy();
        assert!(apply_stage_mask(&m, StageName::LoraAll).is_err());
        lora_attach(&mut m, &LoraConfig::default(), 0).unwrap();
        let (mask, frac) = apply_stage_mask(&m, StageName::LoraAll).unwrap();
        // 4 blocks × 7 targets × (A: 8×in + B: out×8)
        let adapter_params: usize = 4 * (4 * (8 * 16 + 16 * 8)); // attn
        let ffn_adapters = 4 * ((8 * 16 + 32 * 8) * 2 + (8 * 32 + 16 * 8));
        let trainable = adapter_params + ffn_adapters;
        assert_eq!(mask.len(), 4 * 7 * 2);
        let total = m.cfg.param_count() + trainable;
        assert_eq!(frac, trainable as f64 / total as f64);
        assert_eq!(m.param_count(), total);
    }

    #[test]
    fn frozen_tensors_bit_identical_across_a_stage() {
        let mut m = toy();
        let before = m.clone();
        let train = samples(8, 8, 32, 1);
        let plan = StagePlan {
            eval_every: 0,
            ..StagePlan::new(StageName::EmbedHead, 1e-3, 10)
        };
        train_stage(&mut m, &train, &[], &plan, &AdamWConfig::default(), 0).unwrap();
        // embed/head moved, everything else identical
        assert_ne!(m.embed, before.embed);
        assert_ne!(m.head, before.head);
        assert_eq!(m.blocks, before.blocks);
        assert_eq!(m.final_norm, before.final_norm);
    }

    #[test]
    fn row_mask_freezes_pretrained_rows() {
        let mut m = toy();
        m.partition = Some(VocabPartition {
            pretrained_len: 24,
            total_len: 32,
        });
        let before = m.clone();
        let train = samples(8, 8, 32, 2);
        let plan = StagePlan {
            eval_every: 0,
            ..StagePlan::new(StageName::NewEmbedHead, 1e-3, 10)
        };
        train_stage(&mut m, &train, &[], &plan, &AdamWConfig::default(), 0).unwrap();
        for i in 0..24 {
            assert_eq!(m.embed.data.row(i), before.embed.data.row(i));
            assert_eq!(m.head.data.row(i), before.head.data.row(i));
        }
        assert_ne!(
            m.embed.data.slice(ndarray::s![24.., ..]),
            before.embed.data.slice(ndarray::s![24.., ..])
        );
        assert_eq!(m.blocks, before.blocks);
    }

    #[test]
    fn training_reduces_eval_loss_on_toy_corpus() {
        let mut m = toy();
        // structured data: ascending token runs are learnable
        let train: Vec<Vec<u32>> = (0..50)
            .map(|i| (0..8).map(|t| ((i + t * 3) % 32) as u32).collect())
            .collect();
        let eval = train[..10].to_vec();
        let initial = evaluate_packed(&m, &eval).unwrap();
        let plan = StagePlan {
            eval_every: 50,
            early_stop_patience: 0,
            ..StagePlan::new(StageName::EmbedHead, 1e-3, 200)
        };
        let report =
            train_stage(&mut m, &train, &eval, &plan, &AdamWConfig::default(), 3).unwrap();
        let (final_loss, _) = report.final_eval.unwrap();
        assert!(
            final_loss < initial.0,
            "final {final_loss} vs initial {}",
            initial.0
        );
        assert!(!report.metrics.is_empty());
    }

    #[test]
    fn same_seed_same_result() {
        let train = samples(12, 8, 32, 4);
        let plan = StagePlan {
            eval_every: 0,
            ..StagePlan::new(StageName::OddLayers, 1.5e-4, 20)
        };
        let mut a = toy();
        let mut b = toy();
        train_stage(&mut a, &train, &[], &plan, &AdamWConfig::default(), 9).unwrap();
        train_stage(&mut b, &train, &[], &plan, &AdamWConfig::default(), 9).unwrap();
        assert_eq!(a, b);
    }
}
