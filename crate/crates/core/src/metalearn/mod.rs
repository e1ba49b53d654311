//! Meta-dataset and task construction, the sigmoid MLP, hand-written
//! gradients, MAML training, weight surgery and model artifacts.

pub mod artifact;
pub mod grad;
pub mod maml;
pub mod model;
pub mod surgery;
pub mod task;

pub use artifact::{load_model, save_model, ArtifactError, ModelArtifact, TrainSummary};
pub use grad::{hessian_vector, loss_and_grad, LossStats};
pub use maml::{
    adapt_model, inner_adapt, meta_optimize, meta_train, predict_all, train_maml, MetaObjective, StopReason,
    TrainConfig, TrainError, TrainReport,
};
pub use model::{argmax, init_for_manifest, init_model, Dims, MlpModel, DEFAULT_HIDDEN};
pub use surgery::{transfer_to, transfer_weights, SurgeryError};
pub use task::{build_meta_dataset, sample_task, MetaDataset, Task, TaskConfig, TaskError};

/// Mean cross-entropy and gradient over the full output head, in the flat
/// parameter layout of [`MlpModel::params`].
pub fn loss_and_grads(model: &MlpModel, xs: &[&[f64]], ys: &[usize]) -> (f64, Vec<f64>) {
    let mut g = vec![0.0; model.params.len()];
    let s = loss_and_grad(&model.params, model.dims, xs, ys, None, &mut g);
    (s.loss, g)
}
