use std::path::PathBuf;
use std::time::Instant;

use twinkit_core::{adapt_model, load_model, save_model, train_maml, ModelArtifact, TaskConfig, TrainConfig};

use super::ensure_parent;
use crate::args::TrainArgs;
use crate::failure::{Classify, Failure, Outcome};
use crate::inputs::{holdout_f1, load_training};
use crate::manifest::Recorder;
use crate::settings::Settings;

const SHOTS: [usize; 3] = [1, 2, 5];

/// `train` when `adapt` is false, otherwise `adapt`.
pub fn fit(a: TrainArgs, s: &Settings, adapt: bool) -> Outcome<()> {
    let name = if adapt { "adapt" } else { "train" };
    let mut rec = Recorder::new(name);
    let mut r = s.section(name);
    let seed = r.or("seed", a.seed, 0)?;
    rec.seed(seed);
    let (td, cd) = if adapt {
        (TaskConfig::adapt_defaults(), TrainConfig::adapt_defaults())
    } else {
        (TaskConfig::train_defaults(), TrainConfig::train_defaults())
    };
    let task = TaskConfig {
        n_ways: r.or("ways", a.ways, td.n_ways)?,
        k_shots: r.or("shots", a.shots, td.k_shots)?,
        m_tasks: r.or("tasks", a.tasks, td.m_tasks)?,
        task_size: r.or("task-size", a.task_size, td.task_size)?,
    };
    if !SHOTS.contains(&task.k_shots) {
        return Err(Failure::usage(format!("--shots must be one of 1, 2, 5 (got {})", task.k_shots)));
    }
    let cfg = TrainConfig {
        meta_lr: r.or("meta-lr", a.meta_lr, cd.meta_lr)?,
        inner_lr: r.or("inner-lr", a.inner_lr, cd.inner_lr)?,
        adaptation_steps: r.or("adaptation-steps", a.adaptation_steps, cd.adaptation_steps)?,
        max_iterations: r.or("iters", a.iters, cd.max_iterations)?,
        patience: r.or("patience", a.patience, cd.patience)?,
        min_improvement: cd.min_improvement,
        smoothing_window: r.or("smoothing-window", a.smoothing_window, cd.smoothing_window)?,
        hidden_dim: r.or("hidden", a.hidden, cd.hidden_dim)?,
        seed,
        second_order: r.or("second-order", a.second_order.then_some(true), cd.second_order)?,
        parallel: r.switch("parallel", a.parallel)?,
    };
    let data_path: PathBuf = r.require("data", a.data)?;
    let schema: Option<String> = r.opt("schema", a.schema)?;
    let test: Option<PathBuf> = r.opt("test", a.test)?;
    let base_path: Option<PathBuf> = if adapt {
        Some(r.require("base-model", a.base_model)?)
    } else {
        if a.base_model.is_some() {
            return Err(Failure::usage("--base-model only applies to adapt"));
        }
        None
    };
    let out = r.or(
        "out",
        a.out,
        PathBuf::from(if adapt { "adapted.model.json" } else { "model.json" }),
    )?;
    ensure_parent(&out)?;

    let t = Instant::now();
    let data = load_training(&data_path, schema.as_deref(), &mut rec)?;
    let base = match &base_path {
        Some(p) => {
            rec.input(p);
            Some(load_model(p).classify(format!("loading {}", p.display()))?)
        }
        None => None,
    };
    rec.lap("load", t);

    let (model, report) = match &base {
        Some(b) => adapt_model(&b.model, &data, &task, &cfg).classify("adapting")?,
        None => train_maml(&data, &task, &cfg).classify("training")?,
    };
    rec.phase_ms(name, report.wall_time_ms);
    rec.metric("iterations", report.iterations_run as f64);
    if let Some(l) = report.loss_curve.last() {
        rec.metric("final_loss", *l);
    }

    let artifact = ModelArtifact::new(model, data.manifest.clone(), cfg, Some(&report));
    save_model(&out, &artifact).classify(format!("writing {}", out.display()))?;
    rec.output(&out);

    let f1 = match &test {
        Some(p) => {
            let t = Instant::now();
            let f1 = holdout_f1(&artifact.model, &artifact.manifest, p, &mut rec)?;
            rec.lap("score", t);
            rec.metric("macro_f1", f1);
            Some(f1)
        }
        None => None,
    };
    rec.write(&out, r.finish())?;
    println!(
        "{name}: {} iterations ({:?}) in {:.0} ms, wrote {}",
        report.iterations_run,
        report.stop_reason,
        report.wall_time_ms,
        out.display()
    );
    if let Some(f1) = f1 {
        println!("held-out macro F1 {f1:.4}");
    }
    Ok(())
}
