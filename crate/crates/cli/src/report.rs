//! Machine-readable reports: deterministic JSON with an input digest and the
//! tool version stamped in.

use serde::Serialize;
use serde_json::Value;
use std::collections::BTreeMap;

#[derive(Debug, Serialize)]
pub struct Report {
    pub command: String,
    pub tool_version: &'static str,
    pub inputs: Inputs,
    pub results: Value,
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct Inputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
    pub flags: BTreeMap<String, String>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Report {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION"),
            inputs: Inputs {
                file: None,
                digest: None,
                flags: BTreeMap::new(),
            },
            results: Value::Null,
            warnings: Vec::new(),
        }
    }

    pub fn with_file(mut self, path: &str, bytes: &[u8]) -> Self {
        self.inputs.file = Some(path.to_string());
        self.inputs.digest = Some(fnv1a_hex(bytes));
        self
    }

    pub fn flag(mut self, key: &str, value: impl ToString) -> Self {
        self.inputs.flags.insert(key.to_string(), value.to_string());
        self
    }

    pub fn warn(&mut self, message: impl ToString) {
        self.warnings.push(message.to_string());
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// 64-bit FNV-1a, hex encoded. Stable across platforms and runs.
pub fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_stable() {
        assert_eq!(fnv1a_hex(b""), "cbf29ce484222325");
        assert_eq!(fnv1a_hex(b"a"), fnv1a_hex(b"a"));
        assert_ne!(fnv1a_hex(b"a"), fnv1a_hex(b"b"));
    }

    #[test]
    fn reports_are_deterministic() {
        let mk = || {
            let mut r = Report::new("analyze")
                .with_file("x.json", b"{}")
                .flag("eps", "0.3");
            r.warn("w");
            r.to_json()
        };
        assert_eq!(mk(), mk());
    }
}
