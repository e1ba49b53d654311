//! Layered option lookup: command-line flag, then the subcommand's table
//! in the settings file, then the file's top level, then the default.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::failure::{Categorize, Failure, Outcome};

#[derive(Debug, Clone, Default)]
pub struct Settings {
    root: toml::Table,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Outcome<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).usage(format!("reading settings {}", path.display()))?;
        let root: toml::Table = text.parse().usage(format!("parsing settings {}", path.display()))?;
        Ok(Self { root })
    }

    pub fn section(&self, name: &str) -> Resolver<'_> {
        Resolver {
            section: self.root.get(name).and_then(|v| v.as_table()),
            root: &self.root,
            name: name.to_string(),
            resolved: Map::new(),
        }
    }
}

pub struct Resolver<'a> {
    section: Option<&'a toml::Table>,
    root: &'a toml::Table,
    name: String,
    resolved: Map<String, Value>,
}

impl Resolver<'_> {
    fn lookup<T: DeserializeOwned>(&self, key: &str) -> Outcome<Option<T>> {
        let v = self
            .section
            .and_then(|t| t.get(key))
            .or_else(|| self.root.get(key).filter(|v| !v.is_table()));
        match v {
            None => Ok(None),
            Some(v) => v
                .clone()
                .try_into()
                .map(Some)
                .map_err(|e| Failure::usage(format!("settings [{}] {key}: {e}", self.name))),
        }
    }

    fn record<T: Serialize>(&mut self, key: &str, v: &T) {
        let v = serde_json::to_value(v).unwrap_or(Value::Null);
        self.resolved.insert(key.to_string(), v);
    }

    pub fn opt<T: DeserializeOwned + Serialize>(&mut self, key: &str, flag: Option<T>) -> Outcome<Option<T>> {
        let v = match flag {
            Some(v) => Some(v),
            None => self.lookup(key)?,
        };
        if let Some(v) = &v {
            self.record(key, v);
        }
        Ok(v)
    }

    pub fn or<T: DeserializeOwned + Serialize>(&mut self, key: &str, flag: Option<T>, default: T) -> Outcome<T> {
        let v = self.opt(key, flag)?.unwrap_or(default);
        self.record(key, &v);
        Ok(v)
    }

    pub fn require<T: DeserializeOwned + Serialize>(&mut self, key: &str, flag: Option<T>) -> Outcome<T> {
        self.opt(key, flag)?
            .ok_or_else(|| Failure::usage(format!("--{key} is required (flag or settings [{}])", self.name)))
    }

    /// Boolean switch: a set flag wins, otherwise the file, otherwise false.
    pub fn switch(&mut self, key: &str, flag: bool) -> Outcome<bool> {
        self.or(key, flag.then_some(true), false)
    }

    pub fn parsed<T>(&mut self, key: &str, flag: Option<String>, default: &str) -> Outcome<T>
    where
        T: std::str::FromStr,
        T::Err: std::fmt::Display,
    {
        let s = self.or(key, flag, default.to_string())?;
        s.parse().map_err(|e| Failure::usage(format!("--{key} `{s}`: {e}")))
    }

    pub fn finish(self) -> Value {
        Value::Object(self.resolved)
    }
}
