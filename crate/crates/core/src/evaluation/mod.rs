//! Attack and fidelity harness: identification, cross-session unlinkability,
//! feature ablation, summary-statistic baseline, and trajectory deviation.

mod ablation;
mod deviation;
mod features;
mod forest;
mod identification;
mod report;
mod scenario;

pub use ablation::{ablate_feature_subsets, AblationRow};
pub use deviation::{trajectory_deviation, DeviationReport, DeviceDeviation};
pub use features::{featurize_summary_stats, CHUNK_FRAMES, SUMMARY_FEATURES, SUMMARY_STATS};
pub use forest::{ForestConfig, RandomForest, TabularClassifier};
pub use identification::{
    aggregate_per_user, eval_identification, FunnelIdentifier, LinkabilityReport, TabularIdentifier, UserOutcome,
    WindowIdentifier,
};
pub use report::{emit_report, EvaluationReport};
pub use scenario::{
    run_scenario, run_scenarios, session_noise, train_adversary, AdversaryKind, AdversaryScenario, Defense,
    IdentifierKind, ScenarioOptions, Sessions,
};
