//! Classification metrics, response similarity, nonparametric tests, the
//! fidelity harnesses and the shot-method recommender.

pub mod batch;
pub mod cliff;
pub mod fidelity;
pub mod metrics;
pub mod recommend;
pub mod similarity;
pub mod wilcoxon;

pub use batch::{batch_fidelity, BatchOptions, BatchReport, ExclusiveDevice, TwinFidelity};
pub use cliff::{cliffs_delta, magnitude, EmptySample};
pub use fidelity::{median, paired_fidelity_run, EvalReport, FidelityError, FidelityOptions, RequestScore};
pub use metrics::{macro_metrics, ClassMetrics, MetricsError, PerClass};
pub use recommend::{recommend_shot_method, FeatureLevel, RecommendError, Shots, TaskKind, Upgrade};
pub use similarity::{canonical_response, hamming_similarity, EmptyResponse, SimilarityScore};
pub use wilcoxon::{average_ranks, wilcoxon_signed_rank, wilcoxon_with, Alternative, Method, StatResult, WilcoxonError};
