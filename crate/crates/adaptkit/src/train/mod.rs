//! Staged freeze-schedule training: AdamW with a cosine schedule,
//! per-stage trainable-tensor masks, data packing, CLM evaluation, the
//! Ex1/Ex2 recipes, and the initialization-method comparison.

mod adamw;
mod compare;
mod data;
mod eval;
mod pipeline;
mod schedule;
mod stage;

pub use adamw::{adamw_update, AdamW, AdamWConfig};
pub use compare::{assemble_extended, init_compare, InitComparisonRow, SeedResult};
pub use data::{pack, DataStream};
pub use eval::{evaluate_clm, evaluate_packed};
pub use pipeline::{pretrain, run_pipeline, PipelineConfig, PipelineReport, Recipe};
pub use schedule::cosine_lr;
pub use stage::{
    apply_stage_mask, train_stage, MaskKind, MetricsRecord, StageName, StagePlan, StageReport,
    TrainMask,
};
