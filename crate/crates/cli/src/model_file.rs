//! TOML model files.
//!
//! ```toml
//! [model]
//! name = "free-gauge"
//! coordinates = 3
//! constraints = 2
//!
//! [lagrangian]
//! L0 = "1/2*qd3^2"
//!
//! [hamiltonian]
//! H0 = "1/2*p3^2"
//!
//! [constraints]
//! G = ["p1", "p2"]
//!
//! [structure]          # optional; partners C[e][b][a] filled in, unlisted entries are zero
//! "C[1][1][2]" = "-1"
//!
//! [pullback]           # optional
//! flp = ["0", "0", "qd3"]
//! lambda = ["qd1", "qd2"]
//!
//! [options]
//! degree_bound = 4
//! max_order = 3
//! ```

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use antifield::constraint_algebra::{Model, ModelSpec, SuppliedPullback};
use antifield::expr::{Expr, ExprError, SymbolTable};
use antifield::table::Table;
use serde::Deserialize;
use thiserror::Error;
use toml::Spanned;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("validation error: {0}")]
    Validation(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    model: Option<RawModel>,
    lagrangian: Option<RawLagrangian>,
    hamiltonian: Option<RawHamiltonian>,
    constraints: Option<RawConstraints>,
    #[serde(default)]
    structure: BTreeMap<String, Spanned<String>>,
    pullback: Option<RawPullback>,
    #[serde(default)]
    options: RawOptions,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    name: Option<String>,
    coordinates: u32,
    constraints: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLagrangian {
    #[serde(rename = "L0")]
    l0: Spanned<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHamiltonian {
    #[serde(rename = "H0")]
    h0: Option<Spanned<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraints {
    #[serde(rename = "G")]
    g: Vec<Spanned<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPullback {
    flp: Vec<Spanned<String>>,
    lambda: Vec<Spanned<String>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOptions {
    degree_bound: Option<u32>,
    max_order: Option<u32>,
}

/// A parsed, not yet validated model file.
#[derive(Clone, Debug)]
pub struct ModelFile {
    pub spec: ModelSpec,
    pub max_order: Option<u32>,
}

impl ModelFile {
    /// Validates into a [`Model`]; `seed` drives the sampled rank check.
    pub fn model(&self, seed: u64, degree_bound: Option<u32>) -> Result<Model, ModelFileError> {
        let mut spec = self.spec.clone();
        if degree_bound.is_some() {
            spec.degree_bound = degree_bound;
        }
        Model::with_seed(spec, seed).map_err(|e| ModelFileError::Validation(e.to_string()))
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn parse_error(text: &str, offset: usize, message: String) -> ModelFileError {
    let (line, column) = line_col(text, offset);
    ModelFileError::Parse {
        line,
        column,
        message,
    }
}

struct Exprs<'a> {
    text: &'a str,
    table: SymbolTable,
}

impl Exprs<'_> {
    fn parse(&self, value: &Spanned<String>) -> Result<Expr, ModelFileError> {
        let span: Range<usize> = value.span();
        // Offset of the first character inside the opening quote.
        let start = span.start + 1;
        self.table.parse(value.get_ref()).map_err(|e| {
            let column = match &e {
                ExprError::Syntax { column, .. }
                | ExprError::UnknownSymbol { column, .. }
                | ExprError::OddPower { column, .. } => *column,
                ExprError::ParityMismatch { .. } => 1,
            };
            parse_error(self.text, start + column - 1, e.to_string())
        })
    }

    fn parse_all(&self, values: &[Spanned<String>]) -> Result<Vec<Expr>, ModelFileError> {
        values.iter().map(|v| self.parse(v)).collect()
    }
}

/// Parses `C[eta][alpha][beta]` into zero-based indices.
fn structure_key(key: &str, m: u32) -> Option<[usize; 3]> {
    let body = key.strip_prefix("C[")?.strip_suffix(']')?;
    let parts: Vec<&str> = body.split("][").collect();
    let [a, b, c] = parts[..] else { return None };
    let mut out = [0; 3];
    for (slot, p) in out.iter_mut().zip([a, b, c]) {
        let i: u32 = p.parse().ok()?;
        if i == 0 || i > m {
            return None;
        }
        *slot = i as usize - 1;
    }
    Some(out)
}

fn required<T>(value: Option<T>, what: &str) -> Result<T, ModelFileError> {
    value.ok_or_else(|| ModelFileError::Validation(format!("{what} required")))
}

pub fn parse_model(text: &str) -> Result<ModelFile, ModelFileError> {
    let raw: RawFile = toml::from_str(text).map_err(|e| {
        let offset = e.span().map_or(0, |s| s.start);
        parse_error(text, offset, e.message().to_string())
    })?;
    let header = required(raw.model, "model section")?;
    let (n, m) = (header.coordinates, header.constraints);
    if n == 0 {
        return Err(ModelFileError::Validation("model.coordinates must be positive".into()));
    }
    let exprs = Exprs {
        text,
        table: SymbolTable::new(n, m),
    };
    let h0 = required(raw.hamiltonian.and_then(|h| h.h0), "hamiltonian.H0")?;
    let g = required(raw.constraints, "constraints.G")?;
    let mut spec = ModelSpec::new(n, m, exprs.parse(&h0)?, exprs.parse_all(&g.g)?);
    spec.name = header.name.unwrap_or_default();
    spec.l0 = raw.lagrangian.map(|l| exprs.parse(&l.l0)).transpose()?;
    spec.degree_bound = raw.options.degree_bound;
    if let Some(pb) = raw.pullback {
        spec.supplied_pullback = Some(SuppliedPullback {
            flp: exprs.parse_all(&pb.flp)?,
            lambda: exprs.parse_all(&pb.lambda)?,
        });
    }
    if !raw.structure.is_empty() {
        let mut c = Table::zeros(&[m as usize; 3]);
        for (key, value) in &raw.structure {
            let ix = structure_key(key, m).ok_or_else(|| {
                ModelFileError::Validation(format!(
                    "structure key `{key}` must look like C[eta][alpha][beta] with indices in 1..={m}"
                ))
            })?;
            c.set(&ix, exprs.parse(value)?);
        }
        spec.supplied_c = Some(c);
    }
    Ok(ModelFile {
        spec,
        max_order: raw.options.max_order,
    })
}

pub fn load_model(path: &Path) -> Result<ModelFile, ModelFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| ModelFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_model(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const M1: &str = r#"
[model]
name = "m1"
coordinates = 3
constraints = 2

[lagrangian]
L0 = "1/2*qd3^2"

[hamiltonian]
H0 = "1/2*p3^2"

[constraints]
G = ["p1", "p2"]
"#;

    #[test]
    fn loads_abelian_model() {
        let f = parse_model(M1).unwrap();
        let model = f.model(1, None).unwrap();
        assert_eq!(model.n(), 3);
        assert_eq!(model.g().len(), 2);
        assert_eq!(model.name(), "m1");
        assert!(model.l0().is_some());
    }

    #[test]
    fn missing_hamiltonian() {
        let text = M1.replace("H0 = \"1/2*p3^2\"", "");
        let err = parse_model(&text).unwrap_err();
        assert_eq!(err.to_string(), "validation error: hamiltonian.H0 required");
    }

    #[test]
    fn ghost_in_constraint() {
        let text = M1.replace("G = [\"p1\", \"p2\"]", "G = [\"p1 + c1\", \"p2\"]");
        let err = parse_model(&text).unwrap().model(1, None).unwrap_err();
        assert!(matches!(err, ModelFileError::Validation(_)), "{err}");
        assert!(err.to_string().contains("c1"));
    }

    #[test]
    fn expression_errors_are_located() {
        let text = M1.replace("1/2*p3^2", "1/2*p3^^2");
        match parse_model(&text).unwrap_err() {
            ModelFileError::Parse { line, column, .. } => {
                assert_eq!(line, 11);
                assert!(column > 6, "{column}");
            }
            e => panic!("{e}"),
        }
        let text = M1.replace("constraints = 2", "constraints = ");
        assert!(matches!(
            parse_model(&text).unwrap_err(),
            ModelFileError::Parse { line: 5, .. }
        ));
    }

    #[test]
    fn structure_entries() {
        let text = format!("{M1}\n[structure]\n\"C[1][1][2]\" = \"-1\"\n");
        let f = parse_model(&text).unwrap();
        let c = f.spec.supplied_c.as_ref().unwrap();
        assert_eq!(*c.get(&[0, 0, 1]), Expr::int(-1));
        let model = f.model(1, None).unwrap();
        assert_eq!(*model.supplied_c().unwrap().get(&[0, 1, 0]), Expr::int(1));
        let bad = format!("{M1}\n[structure]\n\"C[1][3][2]\" = \"-1\"\n");
        assert!(matches!(parse_model(&bad), Err(ModelFileError::Validation(_))));
    }
}
