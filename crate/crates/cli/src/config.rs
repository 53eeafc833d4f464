//! Optional `key = value` config files, spliced into argv so that flags
//! given on the command line override them.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use clap::Command;

/// Parses `key = value` lines; `#` starts a comment. Keys may use `_` or `-`.
pub fn parse_config(text: &str, path: &Path) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("{}:{}: expected `key = value`", path.display(), n + 1));
        };
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(format!("{}:{}: empty key or value", path.display(), n + 1));
        }
        out.push((key, value.to_string()));
    }
    Ok(out)
}

fn long_names(cmd: &Command) -> BTreeSet<String> {
    cmd.get_arguments()
        .filter_map(|a| a.get_long())
        .map(str::to_string)
        .collect()
}

/// Removes `--config PATH` from `argv` and inserts the file's settings
/// right after the subcommand name. Keys that another subcommand accepts
/// are ignored, so one file can drive a whole pipeline; keys no
/// subcommand accepts are errors.
pub fn splice_config(argv: Vec<String>, cmd: &Command) -> Result<Vec<String>, String> {
    let mut args = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut iter = argv.into_iter();
    args.extend(iter.next());
    while let Some(arg) = iter.next() {
        if arg == "--" {
            args.push(arg);
            args.extend(iter.by_ref());
            break;
        }
        if arg == "--config" {
            config = Some(iter.next().ok_or("--config requires a path")?);
        } else if let Some(path) = arg.strip_prefix("--config=") {
            config = Some(path.to_string());
        } else {
            args.push(arg);
        }
    }
    let Some(config) = config else { return Ok(args) };

    let path = Path::new(&config);
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let settings = parse_config(&text, path)?;

    let Some(pos) = args.iter().skip(1).position(|a| !a.starts_with('-')).map(|p| p + 1) else {
        return Ok(args);
    };
    let Some(sub) = cmd.find_subcommand(&args[pos]) else { return Ok(args) };
    let own = long_names(sub);
    let any: BTreeSet<String> = cmd.get_subcommands().flat_map(long_names).collect();

    let mut spliced = Vec::new();
    for (key, value) in settings {
        if own.contains(&key) {
            spliced.push(format!("--{key}={value}"));
        } else if !any.contains(&key) || key == "config" {
            return Err(format!("{}: unknown setting {key:?}", path.display()));
        }
    }
    args.splice(pos + 1..pos + 1, spliced);
    Ok(args)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_underscores() {
        let got = parse_config("# ablation\nlabel_mode = literal\n\nseed=7 # fixed\n", Path::new("c")).unwrap();
        assert_eq!(
            got,
            vec![
                ("label-mode".to_string(), "literal".to_string()),
                ("seed".to_string(), "7".to_string())
            ]
        );
    }

    #[test]
    fn rejects_lines_without_equals() {
        assert!(parse_config("seed 7\n", Path::new("c")).is_err());
    }
}
