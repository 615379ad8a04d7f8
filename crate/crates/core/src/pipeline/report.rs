use std::fmt::Write as _;

/// Key/value run record. Timings are kept apart so that the remaining
/// fields are bit-reproducible for a fixed configuration and seed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    entries: Vec<(String, String)>,
    timings: Vec<(String, f64)>,
}

/// Round-trippable decimal form used for every float in reports.
pub fn format_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

impl RunReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn set_f64(&mut self, key: impl Into<String>, value: f64) {
        self.set(key, format_f64(value));
    }

    pub fn set_array(&mut self, key: impl Into<String>, values: &[f64]) {
        let joined: Vec<String> = values.iter().map(|v| format_f64(*v)).collect();
        self.set(key, joined.join(","));
    }

    pub fn timing(&mut self, key: impl Into<String>, seconds: f64) {
        self.timings.push((key.into(), seconds));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    pub fn get_array(&self, key: &str) -> Option<Vec<f64>> {
        let v = self.get(key)?;
        if v.is_empty() {
            return Some(Vec::new());
        }
        v.split(',').map(|s| s.parse().ok()).collect()
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn timings(&self) -> &[(String, f64)] {
        &self.timings
    }

    /// Every field except timings, one `key = value` per line.
    pub fn deterministic_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = self.deterministic_text();
        for (k, v) in &self.timings {
            let _ = writeln!(s, "time.{k} = {v:.6}");
        }
        s
    }

    /// Parses `key = value` lines; `time.` keys become timings.
    pub fn parse(text: &str) -> crate::Result<Self> {
        let mut r = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once(" = ") else {
                return Err(crate::Error::Parse {
                    line: i + 1,
                    msg: "expected `key = value`".into(),
                });
            };
            match k.strip_prefix("time.") {
                Some(t) => r.timing(t, v.parse().unwrap_or(f64::NAN)),
                None => r.set(k, v),
            }
        }
        Ok(r)
    }
}
