//! `key = value` run files.
//!
//! Every key names a long flag of the chosen subcommand. Values from the
//! file are spliced in after the subcommand name unless the command line
//! already carries that flag, so the command line always wins.

use std::path::Path;

use crate::CliError;

/// Parsed `(key, value)` pairs in file order.
pub fn parse(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("config line {}: expected key = value", n + 1))
        })?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

fn mentions(args: &[String], key: &str) -> bool {
    let flag = format!("--{key}");
    let prefix = format!("--{key}=");
    args.iter().any(|a| *a == flag || a.starts_with(&prefix))
}

/// Pulls `--config FILE` out of `args` and merges the file's settings.
pub fn apply(mut args: Vec<String>) -> Result<Vec<String>, CliError> {
    let Some(pos) = args
        .iter()
        .position(|a| a == "--config" || a.starts_with("--config="))
    else {
        return Ok(args);
    };
    let path = if let Some(v) = args[pos].strip_prefix("--config=") {
        let v = v.to_string();
        args.remove(pos);
        v
    } else {
        if pos + 1 >= args.len() {
            return Err(CliError::Usage("--config needs a file".into()));
        }
        args.remove(pos);
        args.remove(pos)
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| CliError::Usage(format!("cannot read config {path}: {e}")))?;
    // the subcommand is the first argument after the program name that is
    // not a global option
    let mut sub = 1;
    while sub < args.len() && args[sub].starts_with('-') {
        sub += if args[sub] == "--jobs" { 2 } else { 1 };
    }
    if sub >= args.len() {
        return Err(CliError::Usage("no subcommand given".into()));
    }
    let mut extra = Vec::new();
    for (key, value) in parse(&text)? {
        if mentions(&args, &key) {
            continue;
        }
        match value.as_str() {
            "true" => extra.push(format!("--{key}")),
            "false" => {}
            _ => {
                // comma lists become repeated values for list flags
                extra.push(format!("--{key}"));
                extra.push(value);
            }
        }
    }
    args.splice(sub + 1..sub + 1, extra);
    Ok(args)
}
