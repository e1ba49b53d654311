use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::grad::{hessian_vector, loss_and_grad};
use super::model::{init_for_manifest, Dims, MlpModel, DEFAULT_HIDDEN};
use super::surgery::{transfer_weights, SurgeryError};
use super::task::{build_meta_dataset, sample_task, MetaDataset, Task, TaskConfig, TaskError};
use crate::dataprep::ProcessedDataset;
use crate::seed::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub meta_lr: f64,
    pub inner_lr: f64,
    pub adaptation_steps: usize,
    pub max_iterations: usize,
    pub patience: usize,
    pub min_improvement: f64,
    /// Moving-average window over the per-iteration meta loss used by
    /// early stopping.
    pub smoothing_window: usize,
    pub hidden_dim: usize,
    pub seed: u64,
    pub second_order: bool,
    /// Evaluate the tasks of one iteration on several threads. Results are
    /// reduced in task order, so output is identical to the serial path.
    #[serde(default)]
    pub parallel: bool,
}

impl TrainConfig {
    pub fn train_defaults() -> Self {
        Self {
            meta_lr: 0.001,
            inner_lr: 0.05,
            adaptation_steps: 1,
            max_iterations: 5000,
            patience: 100,
            min_improvement: 1e-4,
            smoothing_window: 50,
            hidden_dim: DEFAULT_HIDDEN,
            seed: 0,
            second_order: false,
            parallel: false,
        }
    }

    pub fn adapt_defaults() -> Self {
        Self {
            max_iterations: 1000,
            patience: 20,
            ..Self::train_defaults()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.meta_lr > 0.0 && self.inner_lr.is_finite() && self.inner_lr >= 0.0) {
            return bad("learning rates must be positive");
        }
        if self.inner_lr <= self.meta_lr {
            return bad("inner_lr must exceed meta_lr");
        }
        if self.adaptation_steps < 1 {
            return bad("adaptation_steps must be at least 1");
        }
        if self.patience >= self.max_iterations {
            return bad("patience must be below max_iterations");
        }
        if self.smoothing_window < 1 || self.hidden_dim < 1 {
            return bad("smoothing_window and hidden_dim must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxIterations,
    Patience,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub iterations_run: usize,
    pub loss_curve: Vec<f64>,
    pub accuracy_curve: Vec<f64>,
    pub wall_time_ms: f64,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum TrainError {
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Surgery(#[from] SurgeryError),
    #[error("invalid train config: {0}")]
    Config(String),
    #[error("model expects {expected:?}, data has {features} features and {classes} classes")]
    Shape {
        expected: Dims,
        features: usize,
        classes: usize,
    },
    #[error("non-finite meta loss {loss} at iteration {iteration} (last finite loss {last_finite:?})")]
    NonFinite {
        iteration: usize,
        loss: f64,
        last_finite: Option<f64>,
    },
}

/// Source of the meta loss and its gradient at given base parameters.
pub trait MetaObjective {
    /// Returns `(loss, accuracy)` and writes the gradient.
    fn evaluate(&mut self, params: &[f64], iteration: usize, grad: &mut [f64]) -> Result<(f64, f64), TrainError>;
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grad[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Outer loop: Adam on the objective with smoothed-loss early stopping.
/// Once `smoothing_window` losses exist, stops after `patience + 1`
/// consecutive iterations fail to improve the best smoothed loss by
/// `min_improvement`.
pub fn meta_optimize<O: MetaObjective>(
    mut params: Vec<f64>,
    objective: &mut O,
    cfg: &TrainConfig,
) -> Result<(Vec<f64>, TrainReport), TrainError> {
    let start = Instant::now();
    let mut adam = Adam::new(params.len());
    let mut grad = vec![0.0; params.len()];
    let mut losses = Vec::new();
    let mut accs = Vec::new();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut stop = StopReason::MaxIterations;
    for it in 0..cfg.max_iterations {
        let (loss, acc) = objective.evaluate(&params, it, &mut grad)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(TrainError::NonFinite {
                iteration: it,
                loss,
                last_finite: losses.last().copied(),
            });
        }
        adam.step(&mut params, &grad, cfg.meta_lr);
        losses.push(loss);
        accs.push(acc);
        // no verdict until the window is full
        let w = cfg.smoothing_window;
        if losses.len() < w {
            continue;
        }
        let smoothed = losses[losses.len() - w..].iter().sum::<f64>() / w as f64;
        if smoothed < best - cfg.min_improvement {
            best = smoothed;
            stale = 0;
        } else {
            stale += 1;
            if stale > cfg.patience {
                stop = StopReason::Patience;
                break;
            }
        }
    }
    let report = TrainReport {
        iterations_run: losses.len(),
        loss_curve: losses,
        accuracy_curve: accs,
        wall_time_ms: start.elapsed().as_secs_f64() * 1000.0,
        stop_reason: stop,
    };
    Ok((params, report))
}

/// `steps` plain gradient steps on the given split, starting from `params`.
pub fn inner_adapt_params(
    params: &[f64],
    dims: Dims,
    xs: &[&[f64]],
    ys: &[usize],
    head: Option<&[usize]>,
    inner_lr: f64,
    steps: usize,
) -> Vec<f64> {
    let mut theta = params.to_vec();
    let mut g = vec![0.0; theta.len()];
    for _ in 0..steps {
        loss_and_grad(&theta, dims, xs, ys, head, &mut g);
        for (t, gi) in theta.iter_mut().zip(&g) {
            *t -= inner_lr * gi;
        }
    }
    theta
}

/// Adapted parameters for `model`; the model itself is untouched.
pub fn inner_adapt(model: &MlpModel, xs: &[&[f64]], ys: &[usize], inner_lr: f64, steps: usize) -> Vec<f64> {
    assert!(steps >= 1, "steps must be at least 1");
    inner_adapt_params(&model.params, model.dims, xs, ys, None, inner_lr, steps)
}

struct TaskOutcome {
    loss: f64,
    correct: usize,
    count: usize,
    grad: Vec<f64>,
}

fn task_outcome(params: &[f64], dims: Dims, data: &ProcessedDataset, task: &Task, cfg: &TrainConfig) -> TaskOutcome {
    let ax: Vec<&[f64]> = task.adapt_rows.iter().map(|&r| data.row(r)).collect();
    let ex: Vec<&[f64]> = task.eval_rows.iter().map(|&r| data.row(r)).collect();
    let head = Some(task.classes.as_slice());
    let n = params.len();
    let mut theta = params.to_vec();
    let mut trajectory = Vec::new();
    let mut g = vec![0.0; n];
    for _ in 0..cfg.adaptation_steps {
        if cfg.second_order {
            trajectory.push(theta.clone());
        }
        loss_and_grad(&theta, dims, &ax, &task.adapt_labels, head, &mut g);
        for (t, gi) in theta.iter_mut().zip(&g) {
            *t -= cfg.inner_lr * gi;
        }
    }
    let mut ge = vec![0.0; n];
    let stats = loss_and_grad(&theta, dims, &ex, &task.eval_labels, head, &mut ge);
    if cfg.second_order {
        // d theta_{t+1} / d theta_t = I - lr * H(theta_t)
        let mut hv = vec![0.0; n];
        for point in trajectory.iter().rev() {
            hessian_vector(point, dims, &ax, &task.adapt_labels, head, &ge, &mut hv);
            for (a, b) in ge.iter_mut().zip(&hv) {
                *a -= cfg.inner_lr * b;
            }
        }
    }
    TaskOutcome {
        loss: stats.loss,
        correct: stats.correct,
        count: ex.len(),
        grad: ge,
    }
}

struct Maml<'a> {
    data: &'a ProcessedDataset,
    meta: MetaDataset,
    task_cfg: TaskConfig,
    cfg: &'a TrainConfig,
    dims: Dims,
    rng: Rng,
}

impl MetaObjective for Maml<'_> {
    fn evaluate(&mut self, params: &[f64], _iteration: usize, grad: &mut [f64]) -> Result<(f64, f64), TrainError> {
        let tasks = (0..self.task_cfg.m_tasks)
            .map(|_| sample_task(&self.meta, &self.task_cfg, &mut self.rng))
            .collect::<Result<Vec<_>, _>>()?;
        let outcomes: Vec<TaskOutcome> = if self.cfg.parallel && tasks.len() > 1 {
            let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(tasks.len());
            let chunk = tasks.len().div_ceil(threads);
            let (dims, data, cfg) = (self.dims, self.data, self.cfg);
            std::thread::scope(|s| {
                let handles: Vec<_> = tasks
                    .chunks(chunk)
                    .map(|ts| {
                        s.spawn(move || {
                            ts.iter()
                                .map(|t| task_outcome(params, dims, data, t, cfg))
                                .collect::<Vec<_>>()
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .flat_map(|h| h.join().expect("task worker panicked"))
                    .collect()
            })
        } else {
            tasks
                .iter()
                .map(|t| task_outcome(params, self.dims, self.data, t, self.cfg))
                .collect()
        };
        let m = outcomes.len() as f64;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        let mut correct = 0;
        let mut count = 0;
        for o in &outcomes {
            for (g, v) in grad.iter_mut().zip(&o.grad) {
                *g += v / m;
            }
            loss += o.loss / m;
            correct += o.correct;
            count += o.count;
        }
        Ok((loss, correct as f64 / count.max(1) as f64))
    }
}

/// Meta-trains `model` in place on `data`, whose manifest must match the
/// model's shape.
pub fn meta_train(
    mut model: MlpModel,
    data: &ProcessedDataset,
    task_cfg: &TaskConfig,
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainReport), TrainError> {
    cfg.validate()?;
    if model.dims.input != data.n_features || model.dims.output != data.manifest.n_classes() {
        return Err(TrainError::Shape {
            expected: model.dims,
            features: data.n_features,
            classes: data.manifest.n_classes(),
        });
    }
    let meta = build_meta_dataset(data)?;
    task_cfg.validate(meta.n_classes())?;
    let mut objective = Maml {
        data,
        meta,
        task_cfg: *task_cfg,
        cfg,
        dims: model.dims,
        rng: seed::phase_rng(cfg.seed, "tasks"),
    };
    let (params, report) = meta_optimize(std::mem::take(&mut model.params), &mut objective, cfg)?;
    model.params = params;
    Ok((model, report))
}

/// Fresh model for the dataset's manifest, then meta-training.
pub fn train_maml(
    data: &ProcessedDataset,
    task_cfg: &TaskConfig,
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainReport), TrainError> {
    cfg.validate()?;
    let model = init_for_manifest(&data.manifest, cfg.hidden_dim, cfg.seed);
    meta_train(model, data, task_cfg, cfg)
}

/// Few-shot fine-tuning of an existing model on data preprocessed under
/// its own manifest: weight surgery onto the new feature and label sets,
/// then a short meta-training run.
pub fn adapt_model(
    base: &MlpModel,
    data: &ProcessedDataset,
    task_cfg: &TaskConfig,
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainReport), TrainError> {
    cfg.validate()?;
    let start = Instant::now();
    let model = transfer_weights(base, &data.manifest, cfg.seed)?;
    let (model, mut report) = meta_train(model, data, task_cfg, cfg)?;
    report.wall_time_ms = start.elapsed().as_secs_f64() * 1000.0;
    Ok((model, report))
}

/// Predicted class index per row.
pub fn predict_all(model: &MlpModel, data: &ProcessedDataset) -> Vec<usize> {
    data.rows()
        .map(|r| model.predict_class(r).expect("dataset width matches model"))
        .collect()
}
