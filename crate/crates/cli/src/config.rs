//! `--config <file.json>` support. The file is a flat JSON object of flag
//! names to values; its entries are spliced in right after the subcommand,
//! so any flag given explicitly on the command line comes later and wins.

use std::ffi::OsString;

use serde_json::Value;

const SUBCOMMANDS: [&str; 5] = ["synth", "train", "diagnose", "evaluate", "bench"];

fn flag_args(key: &str, value: &Value) -> Result<Vec<OsString>, String> {
    let flag = format!("--{}", key.trim_start_matches('-').replace('_', "-"));
    let scalar = |v: &Value| -> Result<String, String> {
        match v {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            Value::Bool(b) => Ok(b.to_string()),
            other => Err(format!(
                "config value for `{key}` must be a scalar or a list of scalars, got {other}"
            )),
        }
    };
    Ok(match value {
        Value::Bool(true) => vec![flag.into()],
        Value::Bool(false) | Value::Null => Vec::new(),
        Value::Array(items) => {
            let joined = items
                .iter()
                .map(scalar)
                .collect::<Result<Vec<_>, _>>()?
                .join(",");
            vec![flag.into(), joined.into()]
        }
        v => vec![flag.into(), scalar(v)?.into()],
    })
}

/// Removes `--config <path>` (or `--config=<path>`) from `argv` and splices
/// the file's flags in after the subcommand.
pub fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut path = None;
    let mut it = argv.into_iter();
    while let Some(arg) = it.next() {
        match arg.to_str() {
            Some("--config") => path = Some(it.next().ok_or("--config needs a path")?),
            Some(s) if s.starts_with("--config=") => {
                path = Some(OsString::from(&s["--config=".len()..]))
            }
            _ => rest.push(arg),
        }
    }
    let Some(path) = path else {
        return Ok(rest);
    };
    let text =
        std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.to_string_lossy()))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.to_string_lossy()))?;
    let Value::Object(map) = value else {
        return Err(format!(
            "{}: config must be a JSON object",
            path.to_string_lossy()
        ));
    };
    let mut injected = Vec::new();
    for (k, v) in &map {
        injected.extend(flag_args(k, v)?);
    }
    let at = rest
        .iter()
        .position(|a| a.to_str().is_some_and(|s| SUBCOMMANDS.contains(&s)))
        .map_or(rest.len(), |i| i + 1);
    rest.splice(at..at, injected);
    Ok(rest)
}
