//! Flat `key = value` configuration files.
//!
//! Every key names a long flag of the chosen subcommand. The file's entries
//! are spliced into the argument list directly after the subcommand, ahead
//! of the user's own flags; since later occurrences of a flag override
//! earlier ones, flags given on the command line win over the file, which in
//! turn wins over built-in defaults.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;

use clap::Command;

use crate::UsageError;

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, UsageError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) =
            line.split_once('=').ok_or_else(|| UsageError(format!("config line {}: expected key = value", i + 1)))?;
        let key = k.trim().trim_start_matches("--").to_string();
        if key.is_empty() {
            return Err(UsageError(format!("config line {}: empty key", i + 1)));
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

/// Path given with `--config`, if any.
fn config_path(args: &[OsString]) -> Result<Option<String>, UsageError> {
    let mut it = args.iter().map(|a| a.to_string_lossy().into_owned());
    while let Some(a) = it.next() {
        if a == "--" {
            break;
        }
        if a == "--config" {
            return it.next().map(Some).ok_or_else(|| UsageError("--config needs a path".into()));
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Ok(Some(p.to_string()));
        }
    }
    Ok(None)
}

/// Returns the argument list with the config file's entries spliced in.
pub fn merge_config(cmd: &Command, args: Vec<OsString>) -> Result<Vec<OsString>, UsageError> {
    let Some(path) = config_path(&args)? else { return Ok(args) };
    let text = fs::read_to_string(&path).map_err(|e| UsageError(format!("cannot read config {path}: {e}")))?;
    let entries = parse_config(&text)?;

    let Some(pos) = args.iter().position(|a| cmd.find_subcommand(a.to_string_lossy().as_ref()).is_some()) else {
        return Ok(args);
    };
    let sub = cmd.find_subcommand(args[pos].to_string_lossy().as_ref()).unwrap();
    let mut injected = Vec::new();
    for (key, value) in &entries {
        let Some(arg) = sub.get_arguments().find(|a| a.get_long() == Some(key.as_str())) else {
            return Err(UsageError(format!("config key '{key}' is not a flag of '{}'", sub.get_name())));
        };
        if key == "config" {
            continue;
        }
        let takes_value = arg.get_action().takes_values();
        if takes_value {
            injected.push(OsString::from(format!("--{key}={value}")));
        } else if matches!(value.as_str(), "true" | "1" | "yes") {
            injected.push(OsString::from(format!("--{key}")));
        }
    }
    let mut out = args[..=pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}
