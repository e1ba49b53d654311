mod data;
mod eval;
mod model;
mod serve;

use std::path::Path;

use crate::args::Command;
use crate::failure::{Categorize, Outcome};
use crate::settings::Settings;

pub fn run(command: Command, settings: &Settings) -> Outcome<()> {
    match command {
        Command::Preprocess(a) => data::preprocess(a, settings),
        Command::Train(a) => model::fit(a, settings, false),
        Command::Adapt(a) => model::fit(a, settings, true),
        Command::BuildTwins(a) => serve::build_twins(a, settings),
        Command::Recommend(a) => eval::recommend(a, settings),
        Command::GenData(a) => block_on(data::gen_data(a, settings)),
        Command::ServeFleet(a) => block_on(serve::serve_fleet(a, settings)),
        Command::ServeRefdev(a) => block_on(serve::serve_refdev(a, settings)),
        Command::Evaluate(a) => block_on(eval::evaluate(a, settings)),
        Command::BatchEval(a) => block_on(eval::batch_eval(a, settings)),
    }
}

fn block_on<F: std::future::Future<Output = Outcome<()>>>(f: F) -> Outcome<()> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .expect("tokio runtime")
        .block_on(f)
}

pub(crate) fn ensure_parent(path: &Path) -> Outcome<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => {
            std::fs::create_dir_all(p).data(format!("creating {}", p.display()))
        }
        _ => Ok(()),
    }
}

/// Ctrl-C or SIGTERM.
pub(crate) async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => {}
                    _ = term.recv() => {}
                }
            }
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}
