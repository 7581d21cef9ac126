//! `key = value` config files, spliced in ahead of the command line so
//! explicit flags win.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::Command;

use crate::error::{CliError, CliResult};

/// `(line number, key, value)` for every setting in `text`.
pub fn parse(text: &str) -> CliResult<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected `key = value`", i + 1)))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(CliError::Usage(format!("config line {}: empty key", i + 1)));
        }
        out.push((i + 1, key, value.trim().to_owned()));
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut iter = args.iter();
    while let Some(a) = iter.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return iter.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

/// Rewrites `args` so settings from the `--config` file precede the
/// user's own flags. Requires subcommands built with `args_override_self`.
pub fn expand(cli: &Command, args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let Some(sub_name) = args.get(1).map(|a| a.to_string_lossy().into_owned()) else {
        return Ok(args);
    };
    let Some(sub) = cli.find_subcommand(&sub_name) else {
        return Ok(args);
    };
    let Some(path) = config_path(&args[2..]) else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;

    let mut injected: Vec<OsString> = Vec::new();
    for (line, key, value) in parse(&text)? {
        let arg =
            sub.get_arguments().find(|a| a.get_long() == Some(key.as_str()) && key != "config").ok_or_else(|| {
                CliError::Usage(format!("{}:{line}: `{key}` is not a setting of `{sub_name}`", path.display()))
            })?;
        if arg.get_action().takes_values() {
            injected.push(format!("--{key}").into());
            injected.push(value.into());
        } else {
            match value.as_str() {
                "true" => injected.push(format!("--{key}").into()),
                "false" => {}
                other => {
                    return Err(CliError::Usage(format!(
                        "{}:{line}: `{key}` expects true or false, got `{other}`",
                        path.display()
                    )))
                }
            }
        }
    }
    let mut out = args[..2].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[2..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_spacing() {
        let got = parse("# run settings\n\nepochs = 5\nlearning_rate=1e-3\n  batch-size =  64  \n").unwrap();
        let keys: Vec<_> = got.iter().map(|(_, k, v)| (k.as_str(), v.as_str())).collect();
        assert_eq!(keys, [("epochs", "5"), ("learning-rate", "1e-3"), ("batch-size", "64")]);
        assert_eq!(got[0].0, 3);
    }

    #[test]
    fn rejects_lines_without_equals() {
        assert!(parse("epochs 5\n").is_err());
        assert!(parse(" = 5\n").is_err());
    }

    #[test]
    fn file_settings_precede_flags() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.conf");
        fs::write(&file, "epochs = 3\nvalidate = true\n").unwrap();
        let cmd = Command::new("signet").subcommand(
            Command::new("train")
                .arg(clap::Arg::new("epochs").long("epochs"))
                .arg(clap::Arg::new("validate").long("validate").action(clap::ArgAction::SetTrue))
                .arg(clap::Arg::new("config").long("config")),
        );
        let args: Vec<OsString> = ["signet", "train", "--config", file.to_str().unwrap(), "--epochs", "7"]
            .iter()
            .map(OsString::from)
            .collect();
        let out = expand(&cmd, args).unwrap();
        let out: Vec<_> = out.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(out[2..5], ["--epochs", "3", "--validate"]);
        assert_eq!(out[out.len() - 2..], ["--epochs", "7"]);

        fs::write(&file, "bogus = 1\n").unwrap();
        let args = ["signet", "train", "--config", file.to_str().unwrap()].iter().map(OsString::from).collect();
        assert!(expand(&cmd, args).is_err());
    }
}
