//! `--config` files: plain `key = value` lines whose keys are the long flag
//! names of the chosen subcommand. Entries become flags placed before the
//! user's own, and any flag the user gave explicitly suppresses the entry,
//! so flags beat the file and the file beats built-in defaults.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::{ArgAction, CommandFactory};

use crate::args::Cli;
use crate::error::CliError;

pub fn parse_config(text: &str, path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{}:{}: expected key = value", path.display(), n + 1)))?;
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(CliError::Usage(format!("{}:{}: empty key", path.display(), n + 1)));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            return Some(rest.into());
        }
    }
    None
}

fn user_gave(args: &[OsString], long: &str) -> bool {
    let flag = format!("--{long}");
    args.iter().any(|a| {
        let s = a.to_string_lossy();
        s == flag || s.starts_with(&format!("{flag}="))
    })
}

/// Returns `args` with the config file's entries spliced in after the
/// subcommand name.
pub fn expand_args(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let entries = parse_config(&text, path)?;

    let cli = Cli::command();
    let Some((pos, sub)) = args
        .iter()
        .enumerate()
        .skip(1)
        .find_map(|(i, a)| cli.find_subcommand(a.to_string_lossy().as_ref()).map(|s| (i, s)))
    else {
        // Let the parser report the missing subcommand.
        return Ok(args);
    };

    let mut injected: Vec<OsString> = Vec::new();
    for (key, value) in entries {
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()) && !a.is_global_set())
            .ok_or_else(|| CliError::Usage(format!("{}: unknown key {key:?} for {}", path.display(), sub.get_name())))?;
        if user_gave(&args, &key) {
            continue;
        }
        match arg.get_action() {
            ArgAction::SetTrue => match value.as_str() {
                "true" | "yes" | "1" => injected.push(format!("--{key}").into()),
                "false" | "no" | "0" => {}
                other => return Err(CliError::Usage(format!("{}: {key} expects true or false, got {other:?}", path.display()))),
            },
            _ => injected.push(format!("--{key}={value}").into()),
        }
    }
    let mut out = args[..=pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn flags_beat_config_and_config_beats_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.conf");
        fs::write(&cfg, "# sample\nsample_size = 7\nseed=3\n").unwrap();
        let c = cfg.to_str().unwrap();
        let out = expand_args(os(&["vte", "--config", c, "audit", "--seed", "9", "--scored", "s.tsv"])).unwrap();
        assert_eq!(
            out,
            os(&["vte", "--config", c, "audit", "--sample-size=7", "--seed", "9", "--scored", "s.tsv"])
        );
    }

    #[test]
    fn unknown_keys_and_bad_lines_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.conf");
        fs::write(&cfg, "no_such_flag = 1\n").unwrap();
        let c = cfg.to_str().unwrap();
        assert!(matches!(expand_args(os(&["vte", "stats", "--config", c])), Err(CliError::Usage(_))));
        fs::write(&cfg, "just words\n").unwrap();
        assert!(matches!(expand_args(os(&["vte", "stats", "--config", c])), Err(CliError::Usage(_))));
    }

    #[test]
    fn boolean_keys_become_bare_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.conf");
        fs::write(&cfg, "train-embeddings = true\n").unwrap();
        let c = cfg.to_str().unwrap();
        let out = expand_args(os(&["vte", "train", "--config", c])).unwrap();
        assert_eq!(out[2], OsString::from("--train-embeddings"));
    }
}
