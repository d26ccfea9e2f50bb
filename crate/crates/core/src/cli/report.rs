//! The JSON report every command prints.

use std::collections::BTreeMap;

use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

/// Hex SHA-256 of a document's bytes.
pub fn content_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Command name, input hashes, and command-specific sections. Keys render in
/// sorted order and no timestamps are recorded, so identical inputs give
/// byte-identical reports.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub command: String,
    pub inputs: BTreeMap<String, String>,
    pub sections: BTreeMap<String, Value>,
}

impl RunReport {
    pub fn new(command: &str) -> Self {
        Self { command: command.to_string(), inputs: BTreeMap::new(), sections: BTreeMap::new() }
    }

    pub fn input(&mut self, role: &str, text: &str) {
        self.inputs.insert(role.to_string(), content_hash(text));
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.sections.insert(key.to_string(), value);
    }

    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        map.insert("command".into(), Value::String(self.command.clone()));
        map.insert(
            "inputs".into(),
            Value::Object(self.inputs.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect()),
        );
        for (k, v) in &self.sections {
            map.insert(k.clone(), v.clone());
        }
        Value::Object(map)
    }

    pub fn render(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("reports always serialize")
    }
}
