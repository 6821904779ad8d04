//! `key = value` run configuration merged underneath command-line flags.
//!
//! Keys are long flag names without the dashes (`rg-table = tables/rg.csv`).
//! Values are spliced into argv right after the subcommand path and later
//! occurrences of a flag override earlier ones, so flags given on the command
//! line always win. Keys the chosen subcommand does not know are ignored, so
//! one file can serve several commands.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::Path;

use anyhow::{Context, Result};
use clap::{ArgAction, Command};

use crate::UsageError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub entries: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
            let key = k.trim().trim_start_matches("--").to_string();
            if key.is_empty() {
                return Err(format!("line {}: empty key", i + 1));
            }
            entries.insert(key, v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| UsageError(format!("config file {}: {e}", path.display())).into())
    }
}

/// Position and value of `--config` in argv, if present.
fn find_config(argv: &[OsString]) -> Option<(usize, usize, OsString)> {
    for (i, a) in argv.iter().enumerate().skip(1) {
        let s = a.to_string_lossy();
        if s == "--config" {
            return argv.get(i + 1).map(|v| (i, 2, v.clone()));
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some((i, 1, OsString::from(v)));
        }
    }
    None
}

/// Rewrites argv so the config file's values precede the user's own flags.
pub fn apply(argv: Vec<OsString>, root: &Command) -> Result<Vec<OsString>> {
    let Some((at, width, path)) = find_config(&argv) else {
        return Ok(argv);
    };
    let config = RunConfig::load(Path::new(&path)).context("loading run configuration")?;
    let mut rest: Vec<OsString> = argv.clone();
    rest.drain(at..at + width);

    // Walk the subcommand path: leading non-flag tokens naming subcommands.
    let mut cmd = root;
    let mut split = 1;
    while let Some(tok) = rest.get(split) {
        match cmd.find_subcommand(tok.to_string_lossy().as_ref()) {
            Some(sub) => {
                cmd = sub;
                split += 1;
            }
            None => break,
        }
    }

    let mut injected = Vec::new();
    for (key, value) in &config.entries {
        let Some(arg) = cmd.get_arguments().find(|a| a.get_long() == Some(key.as_str())) else {
            continue;
        };
        let flag = OsString::from(format!("--{key}"));
        match arg.get_action() {
            ArgAction::SetTrue => {
                if matches!(value.to_ascii_lowercase().as_str(), "true" | "yes" | "1") {
                    injected.push(flag);
                }
            }
            _ => {
                injected.push(flag);
                injected.push(OsString::from(value));
            }
        }
    }
    let mut out: Vec<OsString> = rest[..split].to_vec();
    out.extend(injected);
    out.extend_from_slice(&rest[split..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_key_values() {
        let c = RunConfig::parse("# comment\nrg-table = a.csv\n--lat=40.6\n").unwrap();
        assert_eq!(c.entries["rg-table"], "a.csv");
        assert_eq!(c.entries["lat"], "40.6");
        assert!(RunConfig::parse("nonsense").is_err());
    }
}
