//! Report model shared by the JSON and text renderers.

use std::fmt::Write as _;

use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

impl Status {
    fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    /// Antighost order the check refers to, when it has one.
    pub order: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl Check {
    pub fn pass(name: impl Into<String>, order: Option<u32>) -> Self {
        Check {
            name: name.into(),
            status: Status::Pass,
            order,
            residual: None,
            message: None,
        }
    }

    pub fn fail(name: impl Into<String>, order: Option<u32>) -> Self {
        Check {
            status: Status::Fail,
            ..Check::pass(name, order)
        }
    }

    pub fn from_bool(name: impl Into<String>, order: Option<u32>, ok: bool) -> Self {
        if ok {
            Check::pass(name, order)
        } else {
            Check::fail(name, order)
        }
    }

    pub fn with_residual(mut self, residual: String) -> Self {
        self.residual = Some(residual);
        self
    }

    pub fn with_message(mut self, message: impl Into<String>) -> Self {
        self.message = Some(message.into());
        self
    }
}

/// Ordered `key -> expression` entries, serialized as a JSON object.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Entries(pub Vec<(String, String)>);

impl Serialize for Entries {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StructureSection {
    pub provenance: &'static str,
    #[serde(rename = "C")]
    pub c: Entries,
    #[serde(rename = "V")]
    pub v: Entries,
    #[serde(rename = "J", skip_serializing_if = "Option::is_none")]
    pub j: Option<Entries>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PullbackSection {
    pub source: &'static str,
    pub flp: Vec<String>,
    pub lambda: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TensorSection {
    #[serde(rename = "S0")]
    pub s0: String,
    #[serde(rename = "R")]
    pub r: Entries,
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub t: Option<Entries>,
    #[serde(rename = "E", skip_serializing_if = "Option::is_none")]
    pub e: Option<Entries>,
    #[serde(rename = "D", skip_serializing_if = "Option::is_none")]
    pub d: Option<Entries>,
    #[serde(rename = "M", skip_serializing_if = "Option::is_none")]
    pub m: Option<Entries>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Report {
    pub model: String,
    pub command: &'static str,
    pub max_order: u32,
    pub status: Status,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub structure: Option<StructureSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pullback: Option<PullbackSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tensors: Option<TensorSection>,
}

impl Report {
    pub fn new(model: String, command: &'static str, max_order: u32) -> Self {
        Report {
            model,
            command,
            max_order,
            status: Status::Pass,
            checks: Vec::new(),
            structure: None,
            pullback: None,
            action: None,
            tensors: None,
        }
    }

    pub fn push(&mut self, check: Check) {
        if check.status == Status::Fail {
            self.status = Status::Fail;
        }
        self.checks.push(check);
    }

    pub fn exit_code(&self) -> i32 {
        match self.status {
            Status::Pass => 0,
            Status::Fail => 1,
        }
    }

    /// The first failing check.
    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| c.status == Status::Fail)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is serializable");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let name = if self.model.is_empty() { "(unnamed)" } else { &self.model };
        let _ = writeln!(out, "model {name}: {} (max order {})", self.command, self.max_order);
        for c in &self.checks {
            let order = c.order.map(|o| format!(" [order {o}]")).unwrap_or_default();
            let _ = writeln!(out, "{} {}{order}", c.status.label(), c.name);
            if let Some(m) = &c.message {
                let _ = writeln!(out, "    {m}");
            }
            if let Some(r) = &c.residual {
                let _ = writeln!(out, "    residual: {r}");
            }
        }
        if let Some(s) = &self.structure {
            let _ = writeln!(out, "structure ({}):", s.provenance);
            write_entries(&mut out, &s.c);
            write_entries(&mut out, &s.v);
            if let Some(j) = &s.j {
                write_entries(&mut out, j);
            }
        }
        if let Some(p) = &self.pullback {
            let _ = writeln!(out, "pullback ({}):", p.source);
            for (i, e) in p.flp.iter().enumerate() {
                let _ = writeln!(out, "  flp[{}] = {e}", i + 1);
            }
            for (i, e) in p.lambda.iter().enumerate() {
                let _ = writeln!(out, "  lambda[{}] = {e}", i + 1);
            }
        }
        if let Some(a) = &self.action {
            let _ = writeln!(out, "action:\n  L = {a}");
        }
        if let Some(t) = &self.tensors {
            let _ = writeln!(out, "tensors:\n  S0 = {}", t.s0);
            write_entries(&mut out, &t.r);
            for e in [&t.t, &t.e, &t.d, &t.m].into_iter().flatten() {
                write_entries(&mut out, e);
            }
        }
        let _ = writeln!(out, "{}", match self.status {
            Status::Pass => "all checks passed",
            Status::Fail => "verification failed",
        });
        out
    }
}

fn write_entries(out: &mut String, entries: &Entries) {
    for (k, v) in &entries.0 {
        let _ = writeln!(out, "  {k} = {v}");
    }
}
