//! Flat `key = value` config files whose keys are long flag names.
//!
//! ```text
//! # sweep defaults
//! arch = baseline,cnv2
//! lanes = 16
//! sync = window
//! ```
//!
//! The entries become `--key=value` arguments placed ahead of the command
//! line, so flags given explicitly win.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use crate::error::CliError;

pub fn parse(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("config line {}: expected key = value", n + 1)))?;
        let key = key.trim().trim_start_matches("--");
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(CliError::Input(format!("config line {}: bad key '{key}'", n + 1)));
        }
        if key == "config" {
            return Err(CliError::Input(format!("config line {}: config files cannot nest", n + 1)));
        }
        out.push((key.to_owned(), value.trim().to_owned()));
    }
    Ok(out)
}

pub fn load(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    parse(&text)
}

/// Splices config entries into `args` right after the subcommand name.
/// `subcommand_at` is the index of the subcommand in `args`.
pub fn splice(args: &[OsString], subcommand_at: usize, entries: &[(String, String)]) -> Vec<OsString> {
    let mut out: Vec<OsString> = args[..=subcommand_at].to_vec();
    out.extend(entries.iter().map(|(k, v)| OsString::from(format!("--{k}={v}"))));
    out.extend_from_slice(&args[subcommand_at + 1..]);
    out
}

/// Finds `--config PATH` or `--config=PATH` in raw arguments.
pub fn find_config_arg(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            return Some(rest.into());
        }
        if s == "--" {
            break;
        }
    }
    None
}
