//! Metrics, baselines and model diagnostics.

mod baselines;
mod diagnostics;
mod metrics;

pub use baselines::{
    bow_baseline, gbp_baseline, gbp_report, label_distribution, BowKind, BowVocab, LogisticRegression, NaiveBayes, LR_EPOCHS,
    LR_STEP,
};
pub use diagnostics::{attention_source_vectors, export_attention, mean_pairwise_cosine, representation_similarity, AttentionMap};
pub use metrics::{compute_metrics, AggregateMetrics, AggregateReport, MeanStd, MetricsReport, TaskMetrics};
