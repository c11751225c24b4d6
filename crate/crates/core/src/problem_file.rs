//! TOML problem documents.
//!
//! ```toml
//! A = [[0.0, 1.0], [0.0, 0.0]]
//! B = [[0.0], [1.0]]
//! C_x = [[0.0, 0.0]]
//! C_u = [[1.0]]
//! b = [1.0]
//! Q = [[1.0, 0.0], [0.0, 1.0]]
//! R = [[1.0]]
//! x0 = [1.0, 0.0]
//!
//! [basis]
//! s = 6
//! lambda = 1.0
//!
//! [solver]
//! eps = 1e-6
//! max_iter = 500
//!
//! [mpc]
//! T_d = 0.2
//! steps = 50
//! ```
//!
//! Matrices are row-major lists of rows. The plant block may be omitted for
//! documents that only describe a basis (horizon and raw certification).
//! Optional `[certify]`, `[poly]` and `[oracle]` tables configure the
//! corresponding commands.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpc::PlantModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSection {
    pub s: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcSection {
    #[serde(rename = "T_d", skip_serializing_if = "Option::is_none")]
    pub t_d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    /// Time step of the simulate CSV; defaults to `T_d / 10`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_step: Option<f64>,
}

/// Raw certification input: either a decision vector of the plant problem
/// (`z`) or explicit row coefficients with bounds.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
    /// Certification horizon; defaults to the certified `T_c`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_tight: Option<f64>,
    /// Cost bound; defaults to 1.2 times the optimum at `x0`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j_bar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
}

/// The document as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(rename = "A", skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(rename = "B", skip_serializing_if = "Option::is_none")]
    pub b_mat: Option<Vec<Vec<f64>>>,
    #[serde(rename = "C_x", skip_serializing_if = "Option::is_none")]
    pub c_x: Option<Vec<Vec<f64>>>,
    #[serde(rename = "C_u", skip_serializing_if = "Option::is_none")]
    pub c_u: Option<Vec<Vec<f64>>>,
    #[serde(rename = "b", skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_lower: Option<Vec<f64>>,
    #[serde(rename = "Q", skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(rename = "R", skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    pub basis: BasisSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub mpc: MpcSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certify: Option<CertifySection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub poly: Option<PolySection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSection>,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != cols {
            return Err(Error::Dimension {
                field: format!("{field}[{i}]"),
                expected: format!("{cols} entries"),
                got: format!("{}", r.len()),
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "{field}[{i}] has a non-finite entry"
            )));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn vector(field: &str, v: &[f64]) -> Result<DVector<f64>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "{field} has a non-finite entry"
        )));
    }
    Ok(DVector::from_column_slice(v))
}

fn expect_shape(field: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::Dimension {
            field: field.into(),
            expected: format!("{rows}x{cols}"),
            got: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    Ok(())
}

fn expect_len(field: &str, v: &DVector<f64>, len: usize) -> Result<()> {
    if v.len() != len {
        return Err(Error::Dimension {
            field: field.into(),
            expected: format!("{len}"),
            got: format!("{}", v.len()),
        });
    }
    Ok(())
}

impl ProblemFile {
    /// Parses and validates a document.
    pub fn parse(text: &str) -> Result<Self> {
        let doc: ProblemFile = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            Error::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn emit(&self) -> String {
        toml::to_string(self).expect("problem documents always serialize")
    }

    pub fn has_plant(&self) -> bool {
        self.a.is_some()
    }

    /// Checks dimensions of everything present.
    pub fn validate(&self) -> Result<()> {
        if self.basis.s < 1 {
            return Err(Error::InvalidArgument("basis.s must be at least 1".into()));
        }
        if !(self.basis.lambda > 0.0) || !self.basis.lambda.is_finite() {
            return Err(Error::InvalidArgument(
                "basis.lambda must be positive".into(),
            ));
        }
        let plant_fields = [
            self.b_mat.is_some(),
            self.c_x.is_some(),
            self.c_u.is_some(),
            self.b.is_some(),
            self.q.is_some(),
            self.r.is_some(),
            self.x0.is_some(),
            self.b_lower.is_some(),
        ];
        if self.has_plant() {
            self.plant()?;
            self.initial_state()?;
        } else if plant_fields.iter().any(|&p| p) {
            return Err(Error::InvalidArgument(
                "plant fields given without A".into(),
            ));
        }
        if let Some(c) = &self.certify {
            match (&c.z, &c.rows) {
                (Some(z), None) => {
                    if !self.has_plant() {
                        return Err(Error::InvalidArgument("certify.z needs a plant".into()));
                    }
                    let p = self.plant()?;
                    let d = (p.n() + p.m()) * self.basis.s;
                    expect_len("certify.z", &vector("certify.z", z)?, d)?;
                }
                (None, Some(rows)) => {
                    let m = matrix("certify.rows", rows)?;
                    expect_shape("certify.rows", &m, m.nrows(), self.basis.s)?;
                    let lo = vector("certify.lower", c.lower.as_deref().unwrap_or(&[]))?;
                    let hi = vector("certify.upper", c.upper.as_deref().unwrap_or(&[]))?;
                    expect_len("certify.lower", &lo, m.nrows())?;
                    expect_len("certify.upper", &hi, m.nrows())?;
                }
                _ => {
                    return Err(Error::InvalidArgument(
                        "certify needs exactly one of `z` or `rows`".into(),
                    ))
                }
            }
        }
        Ok(())
    }

    pub fn plant(&self) -> Result<PlantModel> {
        let missing = |f: &str| Error::InvalidArgument(format!("missing field `{f}`"));
        let a = matrix("A", self.a.as_ref().ok_or_else(|| missing("A"))?)?;
        let n = a.nrows();
        expect_shape("A", &a, n, n)?;
        let b = matrix("B", self.b_mat.as_ref().ok_or_else(|| missing("B"))?)?;
        let m = b.ncols();
        expect_shape("B", &b, n, m)?;
        let bound = vector("b", self.b.as_ref().ok_or_else(|| missing("b"))?)?;
        let n_c = bound.len();
        let c_x = matrix("C_x", self.c_x.as_ref().ok_or_else(|| missing("C_x"))?)?;
        let c_u = matrix("C_u", self.c_u.as_ref().ok_or_else(|| missing("C_u"))?)?;
        if c_x.nrows() != n_c {
            return Err(Error::Dimension {
                field: "b".into(),
                expected: format!("{} (rows of C_x)", c_x.nrows()),
                got: format!("{n_c}"),
            });
        }
        expect_shape("C_x", &c_x, n_c, n)?;
        expect_shape("C_u", &c_u, n_c, m)?;
        let q = matrix("Q", self.q.as_ref().ok_or_else(|| missing("Q"))?)?;
        expect_shape("Q", &q, n, n)?;
        let r = matrix("R", self.r.as_ref().ok_or_else(|| missing("R"))?)?;
        expect_shape("R", &r, m, m)?;
        let lower = match &self.b_lower {
            Some(v) => {
                let v = vector("b_lower", v)?;
                expect_len("b_lower", &v, n_c)?;
                Some(v)
            }
            None => None,
        };
        PlantModel::new(a, b, c_x, c_u, bound, lower, q, r)
    }

    pub fn initial_state(&self) -> Result<DVector<f64>> {
        let n = self.a.as_ref().map_or(0, Vec::len);
        let x0 = vector(
            "x0",
            self.x0
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("missing field `x0`".into()))?,
        )?;
        expect_len("x0", &x0, n)?;
        Ok(x0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCALAR: &str = r#"
A = [[-1.0]]
B = [[1.0]]
C_x = [[0.0]]
C_u = [[1.0]]
b = [1.0]
Q = [[1.0]]
R = [[1.0]]
x0 = [0.5]

[basis]
s = 4
lambda = 1.0
"#;

    #[test]
    fn minimal_scalar_document() {
        let p = ProblemFile::parse(SCALAR).unwrap();
        assert_eq!(p.plant().unwrap().n(), 1);
        assert_eq!(p.basis.s, 4);
    }

    #[test]
    fn wrong_bound_length_names_b() {
        let text = SCALAR.replace("b = [1.0]", "b = [1.0, 2.0]");
        match ProblemFile::parse(&text) {
            Err(Error::Dimension { field, .. }) => assert_eq!(field, "b"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_error_has_position() {
        let text = SCALAR.replace("Q = [[1.0]]", "Q = [[1.0]");
        match ProblemFile::parse(&text) {
            Err(Error::Parse { line, column, .. }) => {
                assert!(line >= 8, "line {line}");
                assert!(column >= 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn round_trip() {
        let p = ProblemFile::parse(SCALAR).unwrap();
        let again = ProblemFile::parse(&p.emit()).unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn basis_only_certify_document() {
        let text = r#"
[basis]
s = 2
lambda = 1.0

[certify]
rows = [[0.0, 1.0]]
lower = [-0.5]
upper = [2.0]
"#;
        let p = ProblemFile::parse(text).unwrap();
        assert!(!p.has_plant());
    }
}
