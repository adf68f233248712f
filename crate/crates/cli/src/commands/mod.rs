mod audit;
mod corpus;
mod evaluate;
mod serve;
mod train;

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::args::Command;
use crate::error::{CliError, CliResult};

pub fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::BuildCorpus(a) => corpus::build_corpus(a),
        Command::Aggregate(a) => corpus::aggregate(a),
        Command::Stats(a) => corpus::stats(a),
        Command::Train(a) => train::train(a),
        Command::SweepAlpha(a) => train::sweep(a),
        Command::Evaluate(a) => evaluate::evaluate(a),
        Command::Generate(a) => evaluate::generate(a),
        Command::Audit(a) => audit::audit(a),
        Command::Serve(a) => serve::serve(a),
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| vte_core::Error::io(path, e).into())
}

fn create_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| vte_core::Error::io(p, e).into()),
        _ => Ok(()),
    }
}
