//! Flat JSON run configuration with dotted keys.

use std::collections::BTreeMap;

use serde_json::Value;

use crate::error::{Error, Result};

/// Resolved key/value table; unknown keys are rejected at load time.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, Value>,
}

fn usage<T>(msg: String) -> Result<T> {
    Err(Error::Usage(msg))
}

impl RunConfig {
    /// Overlays the JSON object `text` on `defaults`.
    pub fn load(text: &str, defaults: Vec<(&'static str, Value)>) -> Result<Self> {
        let parsed: Value = serde_json::from_str(text).map_err(|e| Error::Usage(format!("config is not valid JSON: {e}")))?;
        let Value::Object(given) = parsed else {
            return usage("config must be a JSON object".into());
        };
        let mut values: BTreeMap<String, Value> = defaults.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        let mut unknown = Vec::new();
        for (k, v) in given {
            if v.is_object() {
                return usage(format!("config key {k:?} holds an object; use flat dotted keys"));
            }
            match values.get_mut(&k) {
                Some(slot) => *slot = v,
                None => unknown.push(k),
            }
        }
        if !unknown.is_empty() {
            return usage(format!("unknown config keys: {}", unknown.join(", ")));
        }
        Ok(RunConfig { values })
    }

    pub fn set(&mut self, key: &str, v: Value) {
        self.values.insert(key.to_string(), v);
    }

    fn get(&self, key: &str) -> &Value {
        self.values.get(key).unwrap_or_else(|| panic!("config key {key} has no default"))
    }

    pub fn is_null(&self, key: &str) -> bool {
        self.get(key).is_null()
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        match self.get(key).as_f64() {
            Some(v) if v.is_finite() => Ok(v),
            _ => usage(format!("config key {key:?} must be a finite number")),
        }
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        if self.is_null(key) {
            Ok(None)
        } else {
            self.f64(key).map(Some)
        }
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        self.get(key).as_u64().ok_or_else(|| Error::Usage(format!("config key {key:?} must be a nonnegative integer")))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        Ok(self.u64(key)? as usize)
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        self.get(key).as_bool().ok_or_else(|| Error::Usage(format!("config key {key:?} must be true or false")))
    }

    pub fn str(&self, key: &str) -> Result<&str> {
        self.get(key).as_str().ok_or_else(|| Error::Usage(format!("config key {key:?} must be a string")))
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        let bad = || Error::Usage(format!("config key {key:?} must be a list of finite numbers"));
        let arr = self.get(key).as_array().ok_or_else(bad)?;
        arr.iter().map(|v| v.as_f64().filter(|x| x.is_finite()).ok_or_else(bad)).collect()
    }

    pub fn opt_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        if self.is_null(key) {
            Ok(None)
        } else {
            self.f64_list(key).map(Some)
        }
    }

    pub fn str_list(&self, key: &str) -> Result<Vec<String>> {
        let bad = || Error::Usage(format!("config key {key:?} must be a list of strings"));
        let arr = self.get(key).as_array().ok_or_else(bad)?;
        arr.iter().map(|v| v.as_str().map(str::to_string).ok_or_else(bad)).collect()
    }

    /// Sorted JSON object, newline-terminated.
    pub fn to_json(&self) -> Value {
        Value::Object(self.values.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
    }
}
