//! Layered settings: command-line flag, then the JSON config document,
//! then `NIPLAB_GRID` (grid only), then the built-in default.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use niplab::operators::GridSpec;
use niplab::schedule::Schedule;

use crate::CliError;

pub const GRID_ENV: &str = "NIPLAB_GRID";

#[derive(Debug, Default, Clone)]
pub struct Layer {
    doc: Map<String, Value>,
}

impl Layer {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Layer::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        match serde_json::from_str(&text) {
            Ok(Value::Object(doc)) => Ok(Layer { doc }),
            Ok(_) => Err(CliError::Config(format!("config {} must be a JSON object", path.display()))),
            Err(e) => Err(CliError::Config(format!("config {}: {e}", path.display()))),
        }
    }

    #[cfg(test)]
    pub fn from_value(v: Value) -> Result<Self, CliError> {
        match v {
            Value::Object(doc) => Ok(Layer { doc }),
            _ => Err(CliError::Config("config must be a JSON object".into())),
        }
    }

    fn lookup<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.doc.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| CliError::Config(format!("config key {key:?}: {e}"))),
        }
    }

    pub fn get<T: DeserializeOwned>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.lookup(key)?.unwrap_or(default)),
        }
    }

    pub fn get_opt<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.lookup(key),
        }
    }

    pub fn schedule(&self, flag: Option<&str>, key: &str, default: &str) -> Result<Schedule, CliError> {
        let text = match flag {
            Some(s) => s.to_string(),
            None => self.lookup::<String>(key)?.unwrap_or_else(|| default.to_string()),
        };
        text.parse::<Schedule>()
            .map_err(|e| CliError::Config(format!("--{key} {text:?}: {e}")))
    }

    /// Grid from --n/--L, then the config, then `NIPLAB_GRID`, then `fallback`.
    pub fn grid(&self, n: Option<usize>, l: Option<f64>, fallback: (usize, f64)) -> Result<GridSpec, CliError> {
        let env = match std::env::var(GRID_ENV) {
            Ok(s) => Some(parse_grid(&s)?),
            Err(_) => None,
        };
        let (dn, dl) = env.unwrap_or(fallback);
        let n = self.get(n, "n", dn)?;
        let l = self.get(l, "L", dl)?;
        Ok(GridSpec::new(n, l)?)
    }
}

pub fn parse_grid(s: &str) -> Result<(usize, f64), CliError> {
    let bad = || CliError::Config(format!("{GRID_ENV} must look like \"n,L\", got {s:?}"));
    let (n, l) = s.split_once(',').ok_or_else(bad)?;
    let n = n.trim().parse().map_err(|_| bad())?;
    let l = l.trim().parse().map_err(|_| bad())?;
    Ok((n, l))
}

pub fn parse_triple(s: &str) -> Result<(f64, f64, f64), String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v.as_slice() {
        [a, b, c] => Ok((*a, *b, *c)),
        _ => Err(format!("expected three comma-separated numbers, got {s:?}")),
    }
}
