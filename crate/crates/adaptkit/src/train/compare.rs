use serde::{Deserialize, Serialize};

use super::eval::evaluate_clm;
use crate::corpus::Corpus;
use crate::embed_init::{extend_vocab, InitMethod, InitReport, InitSpec};
use crate::model::ModelParams;
use crate::tokenizer::SubwordModel;
use crate::{Error, Result};

/// Extend a model pretrained on `base_tok` to the merged vocabulary:
/// new embedding/head rows are initialized per `spec`, everything else
/// is copied, and the vocabulary partition is recorded for row-masked
/// training.
pub fn assemble_extended(
    base: &ModelParams,
    base_tok: &SubwordModel,
    merged_tok: &SubwordModel,
    spec: &InitSpec,
    seed: u64,
) -> Result<(ModelParams, InitReport)> {
    if base.cfg.vocab != base_tok.vocab_size() {
        return Err(Error::model(format!(
            "model vocab {} does not match base tokenizer {}",
            base.cfg.vocab,
            base_tok.vocab_size()
        )));
    }
    let (e, h, partition, report) = extend_vocab(
        &base.embed,
        &base.head,
        base_tok,
        merged_tok,
        spec,
        seed,
    )?;
    let mut extended = base.clone();
    extended.cfg.vocab = merged_tok.vocab_size();
    extended.embed = e;
    extended.head = h;
    extended.partition = Some(partition);
    Ok((extended, report))
}

/// One row of the initialization-method comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitComparisonRow {
    pub method: InitMethod,
    pub mean_loss: f64,
    pub mean_accuracy: f64,
    pub per_seed: Vec<SeedResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub loss: f64,
    pub accuracy: f64,
}

/// Evaluate the initial CLM quality of each initialization method on
/// held-out text, averaged over seeds. The base model must already be
/// pretrained on the base tokenizer.
pub fn init_compare(
    base: &ModelParams,
    base_tok: &SubwordModel,
    merged_tok: &SubwordModel,
    eval_corpus: &Corpus,
    methods: &[InitMethod],
    seeds: &[u64],
    spec_template: &InitSpec,
) -> Result<Vec<InitComparisonRow>> {
    if methods.is_empty() || seeds.is_empty() {
        return Err(Error::config("init comparison needs ≥ 1 method and seed"));
    }
    let mut rows = Vec::with_capacity(methods.len());
    for &method in methods {
        let spec = InitSpec {
            method,
            ..spec_template.clone()
        };
        let mut per_seed = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let (model, _) = assemble_extended(base, base_tok, merged_tok, &spec, seed)?;
            let (loss, accuracy) = evaluate_clm(&model, eval_corpus, merged_tok)?;
            per_seed.push(SeedResult {
                seed,
                loss,
                accuracy,
            });
        }
        let n = per_seed.len() as f64;
        rows.push(InitComparisonRow {
            method,
            mean_loss: per_seed.iter().map(|r| r.loss).sum::<f64>() / n,
            mean_accuracy: per_seed.iter().map(|r| r.accuracy).sum::<f64>() / n,
            per_seed,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::model::{build_model, ModelConfig};
    use crate::tokenizer::merge;

    fn base_tok() -> SubwordModel {
        let pieces: Vec<(String, f64)> = ('a'..='h')
            .map(|c| (c.to_string(), -2.0))
            .collect();
        SubwordModel::from_pieces(pieces, false).unwrap()
    }

    fn merged_tok() -> SubwordModel {
        let new = SubwordModel::from_pieces(
            vec![("ab".into(), -1.0), ("cd".into(), -1.2)],
            false,
        )
        .unwrap();
        merge(&base_tok(), &new).unwrap().0
    }

    fn base_model() -> ModelParams {
        let cfg = ModelConfig {
            vocab: base_tok().vocab_size(),
            dim: 8,
            layers: 1,
            heads: 2,
            ffn_mult: 2.0,
            context: 8,
            ..ModelConfig::default()
        };
        build_model(&cfg, 3).unwrap()
    }

    #[test]
    fn assemble_preserves_everything_but_vocab_rows() {
        let base = base_model();
        let (ext, _) = assemble_extended(
            &base,
            &base_tok(),
            &merged_tok(),
            &InitSpec::default(),
            0,
        )
        .unwrap();
        assert_eq!(ext.cfg.vocab, merged_tok().vocab_size());
        assert_eq!(ext.blocks, base.blocks);
        let part = ext.partition.as_ref().unwrap();
        assert_eq!(part.pretrained_len, base.cfg.vocab);
        for i in part.pretrained_ids() {
            assert_eq!(ext.embed.data.row(i), base.embed.data.row(i));
        }
    }

    #[test]
    fn vocab_mismatch_rejected() {
        let mut base = base_model();
        base.cfg.vocab = 99;
        assert!(assemble_extended(
            &base,
            &base_tok(),
            &merged_tok(),
            &InitSpec::default(),
            0
        )
        .is_err());
    }

    #[test]
    fn comparison_rows_are_deterministic_per_method_and_seed() {
        let base = base_model();
        let eval: Corpus = vec![Document::new("1", "abcdabcdabcdabcd", "eval")]
            .into_iter()
            .collect();
        let run = || {
            init_compare(
                &base,
                &base_tok(),
                &merged_tok(),
                &eval,
                &[InitMethod::Random, InitMethod::DecompEH],
                &[1, 2],
                &InitSpec::default(),
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].per_seed.len(), 2);
        assert!(a.iter().all(|r| r.mean_loss.is_finite()));
    }
}
