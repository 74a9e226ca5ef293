//! Cross-moment discrepancies and the joint adaptation objective.

pub mod moments;
pub mod objective;

pub use moments::{
    moment_discrepancy, moment_discrepancy_backward, moment_embedding, Discrepancy, DomainRef,
    MomentConfig, PairComponent,
};
pub use objective::{
    aggregate, forward, taman_loss, training_step, AttentionPolicy, ClipPlan, DomainBatch,
    DomainBatchSet, ForwardPass, LossBreakdown, ObjectiveConfig, ScaleStatistics, StepOutcome,
};
