//! `--config FILE` support: `key=value` lines whose keys are long option
//! names. Settings from the file are spliced into the argument list unless
//! the same option was given explicitly on the command line.

use std::collections::HashSet;
use std::ffi::OsString;

use clap::CommandFactory;

use crate::{Cli, CliError, CliResult};

/// Keys written to manifests for the record only.
pub const INFO_KEYS: [&str; 10] = [
    "subcommand",
    "version",
    "input_sha256",
    "wall_time_s",
    "iterations",
    "converged",
    "objective",
    "r_star",
    "q_star",
    "q_mode",
];

pub fn expand(args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let Some(path) = config_path(&strs) else {
        return Ok(args);
    };
    let sub_name = strs[1].clone();
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Config(format!("cannot read config file {path}: {e}")))?;
    let pairs = parse_pairs(&text)?;

    let root = Cli::command();
    let sub = root
        .find_subcommand(&sub_name)
        .ok_or_else(|| CliError::Config(format!("unknown subcommand '{sub_name}'")))?;
    let explicit: HashSet<String> = strs[2..]
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();

    let mut extra: Vec<String> = Vec::new();
    for (key, value) in pairs {
        if key == "subcommand" && value != sub_name {
            return Err(CliError::Config(format!(
                "config file is for '{value}', not '{sub_name}'"
            )));
        }
        if INFO_KEYS.contains(&key.as_str()) || key == "config" {
            continue;
        }
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| CliError::Config(format!("unknown config key '{key}' for {sub_name}")))?;
        if explicit.contains(&key) {
            continue;
        }
        if arg.get_action().takes_values() {
            extra.push(format!("--{key}"));
            extra.push(value);
        } else {
            match value.as_str() {
                "true" => extra.push(format!("--{key}")),
                "false" => {}
                other => {
                    return Err(CliError::Config(format!(
                        "config key '{key}' is a switch; expected true or false, got '{other}'"
                    )))
                }
            }
        }
    }
    let mut out: Vec<OsString> = args[..2].to_vec();
    out.extend(extra.into_iter().map(OsString::from));
    out.extend(args[2..].iter().cloned());
    Ok(out)
}

fn config_path(args: &[String]) -> Option<String> {
    if args.len() < 2 || args[1].starts_with('-') {
        return None;
    }
    let mut it = args[2..].iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

fn parse_pairs(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("config line {}: expected key=value", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}
