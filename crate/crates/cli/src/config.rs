//! `--config` support: a JSON object whose keys are flag names (without the
//! leading dashes). Top-level keys apply to any subcommand that has the flag;
//! a nested object under a subcommand's name applies to that subcommand only
//! and overrides top-level keys. Flags given on the command line win.

use std::ffi::OsString;
use std::path::Path;

use clap::{ArgAction, CommandFactory};
use serde_json::{Map, Value};

use crate::args::Cli;
use crate::error::{io_error, CliError, Result};

/// Splits `--config PATH` / `--config=PATH` out of `argv`.
fn take_config(argv: &mut Vec<OsString>) -> Result<Option<OsString>> {
    let mut found = None;
    let mut i = 1;
    while i < argv.len() {
        let arg = argv[i].to_string_lossy().into_owned();
        if arg == "--" {
            break;
        }
        if arg == "--config" {
            if i + 1 >= argv.len() {
                return Err(CliError::Usage("--config requires a path".into()));
            }
            found = Some(argv.remove(i + 1));
            argv.remove(i);
            continue;
        }
        if let Some(path) = arg.strip_prefix("--config=") {
            found = Some(OsString::from(path));
            argv.remove(i);
            continue;
        }
        i += 1;
    }
    Ok(found)
}

fn render(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Array(items) => {
            let parts: Option<Vec<String>> = items.iter().map(render).collect();
            parts.map(|p| p.join(","))
        }
        _ => None,
    }
}

fn given(argv: &[OsString], long: &str) -> bool {
    let flag = format!("--{long}");
    let prefix = format!("--{long}=");
    argv.iter().any(|a| {
        let a = a.to_string_lossy();
        a == flag || a.starts_with(&prefix)
    })
}

/// Returns `argv` with config values appended for every flag not already
/// present. Without `--config`, `argv` is returned unchanged.
pub fn merge(mut argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = take_config(&mut argv)? else {
        return Ok(argv);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let root: Map<String, Value> = match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => m,
        Ok(_) => {
            return Err(CliError::Usage(format!(
                "{}: config must be a JSON object",
                path.display()
            )))
        }
        Err(e) => return Err(CliError::Usage(format!("{}: {e}", path.display()))),
    };

    let Some(name) = argv
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .find(|a| !a.starts_with('-'))
    else {
        return Ok(argv);
    };
    let command = Cli::command();
    let Some(sub) = command.find_subcommand(&name) else {
        return Ok(argv);
    };

    let mut entries: Vec<(String, Value, bool)> = root
        .iter()
        .filter(|(_, v)| !v.is_object())
        .map(|(k, v)| (k.clone(), v.clone(), false))
        .collect();
    if let Some(section) = root.get(&name) {
        let Value::Object(section) = section else {
            return Err(CliError::Usage(format!("config section {name:?} must be an object")));
        };
        for (k, v) in section {
            entries.retain(|(key, _, _)| key != k);
            entries.push((k.clone(), v.clone(), true));
        }
    }

    let mut extra = Vec::new();
    for (key, value, scoped) in entries {
        let Some(arg) = sub.get_arguments().find(|a| a.get_long() == Some(key.as_str())) else {
            if scoped {
                return Err(CliError::Usage(format!("config: {name} has no flag --{key}")));
            }
            continue;
        };
        if given(&argv, &key) {
            continue;
        }
        let flag = format!("--{key}");
        match (arg.get_action(), &value) {
            (ArgAction::SetTrue, Value::Bool(true)) => extra.push(OsString::from(flag)),
            (ArgAction::SetTrue, Value::Bool(false)) => {}
            (ArgAction::SetTrue, _) => {
                return Err(CliError::Usage(format!("config: {key} must be true or false")));
            }
            (_, v) => {
                let rendered =
                    render(v).ok_or_else(|| CliError::Usage(format!("config: unsupported value for {key}: {v}")))?;
                extra.push(OsString::from(format!("{flag}={rendered}")));
            }
        }
    }
    argv.extend(extra);
    Ok(argv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(args: &[&str]) -> Vec<OsString> {
        args.iter().map(OsString::from).collect()
    }

    fn with_config(json: &str, args: &[&str]) -> Result<Vec<String>> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, json).unwrap();
        let mut argv = os(args);
        argv.push("--config".into());
        argv.push(path.clone().into_os_string());
        merge(argv).map(|v| v.into_iter().map(|a| a.into_string().unwrap()).collect())
    }

    #[test]
    fn no_config_is_identity() {
        let argv = os(&["lmscale", "check"]);
        assert_eq!(merge(argv.clone()).unwrap(), argv);
    }

    #[test]
    fn flags_win_and_missing_flags_fill_in() {
        let got = with_config(
            r#"{"huber-delta": 0.05, "out": "cfg.json", "fit": {"grid-alpha": [0.2, 0.4], "serial": true}}"#,
            &[
                "lmscale",
                "fit",
                "--runs",
                "r.csv",
                "--stage",
                "single",
                "--out",
                "flag.json",
            ],
        )
        .unwrap();
        assert!(got.contains(&"--huber-delta=0.05".to_string()));
        assert!(got.contains(&"--grid-alpha=0.2,0.4".to_string()));
        assert!(got.contains(&"--serial".to_string()));
        assert!(!got.iter().any(|a| a.contains("cfg.json")));
    }

    #[test]
    fn top_level_keys_for_other_commands_ignored() {
        let got = with_config(r#"{"seed": 3}"#, &["lmscale", "check"]).unwrap();
        assert_eq!(got, ["lmscale", "check"]);
    }

    #[test]
    fn unknown_scoped_key_is_usage_error() {
        let err = with_config(r#"{"check": {"bogus": 1}}"#, &["lmscale", "check"]).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn non_object_config_rejected() {
        assert!(with_config("[1, 2]", &["lmscale", "check"]).is_err());
    }
}
