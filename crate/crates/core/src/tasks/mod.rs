//! Few-shot classification, discriminative fine-tuning, set anomaly scoring,
//! latent-parameter reports and the GP/TP stability comparison.

mod analysis;
mod anomaly;
mod fewshot;
mod finetune;
mod stability;

pub use analysis::{latent_analysis, LatentReport, LatentRow};
pub use anomaly::{anomaly_score, anomaly_score_explicit, ScoreTrace};
pub use fewshot::{
    classify, episode_sequences, few_shot_classify, few_shot_eval, few_shot_scores, sample_episode, Episode,
    FewShotResult,
};
pub use finetune::{cross_entropy, discriminative_finetune, episode_loss, FinetuneConfig};
pub use stability::{compare_modes, ModeComparison, TraceOutcome};
