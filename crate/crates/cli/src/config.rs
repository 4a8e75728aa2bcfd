//! `key=value` config files, merged into argv so that explicit flags win.

use std::collections::BTreeSet;

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
/// Underscores in keys become hyphens, matching the long flag names.
pub fn parse(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key=value", i + 1))?;
        let k = k.trim();
        if k.is_empty() || k.contains(char::is_whitespace) {
            return Err(format!("config line {}: bad key `{k}`", i + 1));
        }
        out.push((k.replace('_', "-"), v.trim().to_string()));
    }
    Ok(out)
}

/// Long flag names present in `args`; `-o` counts as `output`.
fn given_flags(args: &[String]) -> BTreeSet<String> {
    args.iter()
        .filter_map(|a| {
            if a == "-o" {
                Some("output".to_string())
            } else {
                a.strip_prefix("--").map(|s| s.split('=').next().unwrap_or(s).to_string())
            }
        })
        .collect()
}

/// Inserts config entries as `--key=value` right after the subcommand,
/// skipping keys the user passed explicitly. Global keys go first.
pub fn merge(args: &[String], entries: &[(String, String)], subcommands: &[&str], globals: &[&str]) -> Vec<String> {
    let given = given_flags(args);
    let keep: Vec<&(String, String)> = entries.iter().filter(|(k, _)| !given.contains(k) && k != "config").collect();
    let flag = |(k, v): &&(String, String)| format!("--{k}={v}");
    let mut out = vec![args[0].clone()];
    out.extend(keep.iter().filter(|(k, _)| globals.contains(&k.as_str())).map(flag));
    let sub = args.iter().skip(1).position(|a| subcommands.contains(&a.as_str())).map(|i| i + 1);
    match sub {
        Some(i) => {
            out.extend(args[1..=i].iter().cloned());
            out.extend(keep.iter().filter(|(k, _)| !globals.contains(&k.as_str())).map(flag));
            out.extend(args[i + 1..].iter().cloned());
        }
        None => out.extend(args[1..].iter().cloned()),
    }
    out
}

/// Value of `--config` in `args`, if any.
pub fn config_path(args: &[String]) -> Option<String> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(v.to_string());
        }
    }
    None
}
