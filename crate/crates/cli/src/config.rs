//! `--config FILE` support: JSON keys become flags inserted before the
//! user's own arguments, unless the user already gave that flag.

use std::ffi::OsString;
use std::fs;

use anyhow::{bail, Context, Result};
use serde_json::Value;

const SUBCOMMANDS: &[&str] = &[
    "deform",
    "fit",
    "train",
    "make-dataset",
    "benchmark-templates",
    "eval",
    "transfer-labels",
    "voxelize",
    "report",
];

pub fn expand_args(mut argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut config_path = None;
    let mut i = 1;
    while i < argv.len() {
        let arg = argv[i].to_string_lossy().into_owned();
        if arg == "--config" {
            if i + 1 >= argv.len() {
                bail!(ffd_core::Error::InvalidArgument("--config needs a file".into()));
            }
            config_path = Some(argv.remove(i + 1));
            argv.remove(i);
        } else if let Some(p) = arg.strip_prefix("--config=") {
            config_path = Some(OsString::from(p));
            argv.remove(i);
        } else {
            i += 1;
        }
    }
    let Some(path) = config_path else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path)
        .map_err(ffd_core::Error::from)
        .with_context(|| format!("reading config {}", path.to_string_lossy()))?;
    let root: Value = serde_json::from_str(&text)
        .map_err(ffd_core::Error::from)
        .with_context(|| format!("parsing config {}", path.to_string_lossy()))?;
    let Value::Object(root) = root else {
        bail!(ffd_core::Error::InvalidArgument("config must be a JSON object".into()));
    };
    let Some(pos) = argv.iter().position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref())) else {
        return Ok(argv);
    };
    let sub = argv[pos].to_string_lossy().into_owned();
    // a section named after the subcommand takes precedence over top-level keys
    let mut entries: Vec<(String, Value)> =
        root.iter().filter(|(_, v)| !v.is_object()).map(|(k, v)| (k.clone(), v.clone())).collect();
    if let Some(Value::Object(section)) = root.get(&sub) {
        for (k, v) in section {
            entries.retain(|(key, _)| key != k);
            entries.push((k.clone(), v.clone()));
        }
    }

    let given: Vec<String> = argv[pos + 1..].iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut injected = Vec::new();
    for (key, value) in entries {
        let flag = format!("--{}", key.replace('_', "-"));
        if given.iter().any(|g| g == &flag || g.starts_with(&format!("{flag}="))) {
            continue;
        }
        let scalar = |v: &Value| -> Result<Option<String>> {
            Ok(match v {
                Value::Null | Value::Bool(false) => None,
                Value::Bool(true) => Some(String::new()),
                Value::Number(n) => Some(n.to_string()),
                Value::String(s) => Some(s.clone()),
                _ => bail!(ffd_core::Error::InvalidArgument(format!("config key '{key}' has an unsupported value"))),
            })
        };
        let values = match &value {
            Value::Array(items) => items.clone(),
            other => vec![other.clone()],
        };
        for v in &values {
            match scalar(v)? {
                None => {}
                Some(s) if s.is_empty() && matches!(v, Value::Bool(true)) => injected.push(OsString::from(&flag)),
                Some(s) => {
                    injected.push(OsString::from(&flag));
                    injected.push(OsString::from(s));
                }
            }
        }
    }
    argv.splice(pos + 1..pos + 1, injected);
    Ok(argv)
}
