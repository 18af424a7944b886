//! Flat `key = value` configuration files.
//!
//! Each key is a long flag name of the chosen subcommand (`n`, `w`, `tmax`,
//! `resonance-tol`, ...). Lines starting with `#` are comments. A value of
//! `true` sets a switch, `false` leaves it off. Entries are spliced in right
//! after the subcommand name, so explicit flags, which come later, win.

use std::fs;

use crate::{CliError, CliResult, SUBCOMMANDS};

pub fn parse(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", i + 1)))?;
        let k = k.trim().trim_start_matches("--").replace('_', "-");
        if k.is_empty() || k == "config" {
            return Err(CliError::Usage(format!("config line {}: bad key {k:?}", i + 1)));
        }
        out.push((k, v.trim().to_string()));
    }
    Ok(out)
}

/// Removes `--config PATH` from `argv` and splices the file's entries in
/// after the subcommand.
pub fn expand(mut argv: Vec<String>) -> CliResult<Vec<String>> {
    let mut path = None;
    let mut i = 1;
    while i < argv.len() {
        if argv[i] == "--config" {
            if i + 1 >= argv.len() {
                return Err(CliError::Usage("--config needs a path".into()));
            }
            path = Some(argv.remove(i + 1));
            argv.remove(i);
        } else if let Some(p) = argv[i].strip_prefix("--config=") {
            path = Some(p.to_string());
            argv.remove(i);
        } else {
            i += 1;
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let text = fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("config {path}: {e}")))?;
    let at = 1 + argv[1..]
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.as_str()))
        .ok_or_else(|| CliError::Usage("--config needs a subcommand".into()))?;
    let mut injected = Vec::new();
    for (k, v) in parse(&text)? {
        match v.as_str() {
            "true" => injected.push(format!("--{k}")),
            "false" => {}
            _ => {
                injected.push(format!("--{k}"));
                injected.push(v);
            }
        }
    }
    argv.splice(at + 1..at + 1, injected);
    Ok(argv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_pairs() {
        let kv = parse("# chain\nn = 8\nresonance_tol=0.1\n\nhann = true\n").unwrap();
        assert_eq!(
            kv,
            vec![
                ("n".into(), "8".into()),
                ("resonance-tol".into(), "0.1".into()),
                ("hann".into(), "true".into())
            ]
        );
        assert!(parse("n 8").is_err());
    }

    #[test]
    fn config_entries_precede_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, "n = 8\nw = 5\nhann = true\n").unwrap();
        let argv: Vec<String> = ["qctf", "simulate", "--w", "20", "--config", path.to_str().unwrap()]
            .map(String::from)
            .into();
        let got = expand(argv).unwrap();
        assert_eq!(got, ["qctf", "simulate", "--n", "8", "--w", "5", "--hann", "--w", "20"]);
    }
}
