//! Versioned JSON file formats for operator sequences, weight families and
//! atomic measures.
//!
//! Matrices are lists of rows. Real files hold plain numbers, complex files
//! hold `[re, im]` pairs. Floats are written in shortest round-trip form, so
//! export followed by import is lossless.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::linalg::{hermitize, CMatrix, HermitianMatrix, C64, DEFAULT_HERMITIAN_TOL};
use crate::moment::OperatorSequence;
use crate::ovm::AtomicOVM;
use crate::shift::WeightFamily;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Real,
    Complex,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

pub type RawMatrix = Vec<Vec<Entry>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceFile {
    pub schema_version: String,
    pub dim: usize,
    pub field: Field,
    pub matrices: Vec<RawMatrix>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsFile {
    pub schema_version: String,
    pub dim: usize,
    pub field: Field,
    pub weights: Vec<RawMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OvmFile {
    pub schema_version: String,
    pub dim: usize,
    pub field: Field,
    pub atoms: Vec<f64>,
    pub weights: Vec<RawMatrix>,
}

#[derive(Debug, thiserror::Error)]
pub enum InputError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Schema(String),
    #[error(transparent)]
    Model(#[from] Error),
}

impl From<serde_json::Error> for InputError {
    fn from(e: serde_json::Error) -> Self {
        InputError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

fn check_version(v: &str) -> Result<(), InputError> {
    if v != SCHEMA_VERSION {
        return Err(InputError::Schema(format!(
            "unsupported schema_version {v:?} (expected {SCHEMA_VERSION:?})"
        )));
    }
    Ok(())
}

fn decode_matrix(raw: &RawMatrix, dim: usize, field: Field, at: &str) -> Result<HermitianMatrix, InputError> {
    if raw.len() != dim {
        return Err(InputError::Schema(format!(
            "{at}: expected {dim} rows, found {}",
            raw.len()
        )));
    }
    let mut m = CMatrix::zeros(dim, dim);
    for (i, row) in raw.iter().enumerate() {
        if row.len() != dim {
            return Err(InputError::Schema(format!(
                "{at}[{i}]: expected {dim} entries, found {} (matrix is not square)",
                row.len()
            )));
        }
        for (j, e) in row.iter().enumerate() {
            m[(i, j)] = match (field, e) {
                (Field::Real, Entry::Real(x)) => C64::new(*x, 0.0),
                (Field::Complex, Entry::Complex([re, im])) => C64::new(*re, *im),
                (Field::Real, Entry::Complex(_)) => {
                    return Err(InputError::Schema(format!(
                        "{at}[{i}][{j}]: [re, im] pair in a real file"
                    )))
                }
                (Field::Complex, Entry::Real(_)) => {
                    return Err(InputError::Schema(format!(
                        "{at}[{i}][{j}]: plain number in a complex file (use [re, im])"
                    )))
                }
            };
        }
    }
    hermitize(&m, DEFAULT_HERMITIAN_TOL).map_err(|e| InputError::Schema(format!("{at}: {e}")))
}

fn decode_all(raw: &[RawMatrix], dim: usize, field: Field, name: &str) -> Result<Vec<HermitianMatrix>, InputError> {
    if dim == 0 {
        return Err(InputError::Schema("dim must be at least 1".into()));
    }
    raw.iter()
        .enumerate()
        .map(|(k, m)| decode_matrix(m, dim, field, &format!("{name}[{k}]")))
        .collect()
}

fn encode_matrix(m: &HermitianMatrix, field: Field) -> RawMatrix {
    let d = m.dim();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let z = m.get(i, j);
                    match field {
                        Field::Real => Entry::Real(z.re),
                        Field::Complex => Entry::Complex([z.re, z.im]),
                    }
                })
                .collect()
        })
        .collect()
}

fn field_of<'a>(ms: impl IntoIterator<Item = &'a HermitianMatrix>) -> Field {
    if ms.into_iter().all(|m| m.is_real()) {
        Field::Real
    } else {
        Field::Complex
    }
}

pub fn parse_sequence(text: &str) -> Result<OperatorSequence, InputError> {
    let f: SequenceFile = serde_json::from_str(text)?;
    check_version(&f.schema_version)?;
    if f.matrices.is_empty() {
        return Err(InputError::Schema("matrices: at least one term is required".into()));
    }
    Ok(OperatorSequence::new(decode_all(&f.matrices, f.dim, f.field, "matrices")?)?)
}

pub fn sequence_file(seq: &OperatorSequence) -> SequenceFile {
    let field = field_of(seq.terms());
    SequenceFile {
        schema_version: SCHEMA_VERSION.into(),
        dim: seq.dim(),
        field,
        matrices: seq.terms().iter().map(|m| encode_matrix(m, field)).collect(),
    }
}

/// A sequence file holding exactly the given matrices (e.g. a `(T_0, T_1)` pair).
pub fn matrices_file(ms: &[HermitianMatrix]) -> SequenceFile {
    let field = field_of(ms);
    SequenceFile {
        schema_version: SCHEMA_VERSION.into(),
        dim: ms.first().map_or(0, |m| m.dim()),
        field,
        matrices: ms.iter().map(|m| encode_matrix(m, field)).collect(),
    }
}

pub fn parse_weights(text: &str) -> Result<WeightFamily, InputError> {
    let f: WeightsFile = serde_json::from_str(text)?;
    check_version(&f.schema_version)?;
    let w = WeightFamily::new(decode_all(&f.weights, f.dim, f.field, "weights")?)?;
    Ok(match f.norm_bound {
        Some(b) => w.with_norm_bound(b)?,
        None => w,
    })
}

pub fn weights_file(w: &WeightFamily) -> WeightsFile {
    let field = field_of(w.weights());
    let window_sup = WeightFamily::new(w.weights().to_vec()).map(|x| x.norm_bound()).ok();
    WeightsFile {
        schema_version: SCHEMA_VERSION.into(),
        dim: w.dim(),
        field,
        weights: w.weights().iter().map(|m| encode_matrix(m, field)).collect(),
        norm_bound: (window_sup != Some(w.norm_bound())).then_some(w.norm_bound()),
    }
}

pub fn parse_ovm(text: &str) -> Result<AtomicOVM, InputError> {
    let f: OvmFile = serde_json::from_str(text)?;
    check_version(&f.schema_version)?;
    if f.atoms.len() != f.weights.len() {
        return Err(InputError::Schema(format!(
            "{} atoms but {} weights",
            f.atoms.len(),
            f.weights.len()
        )));
    }
    let weights = decode_all(&f.weights, f.dim, f.field, "weights")?;
    Ok(AtomicOVM::new(f.dim, f.atoms, weights)?)
}

pub fn ovm_file(e: &AtomicOVM) -> OvmFile {
    let field = field_of(e.weights());
    OvmFile {
        schema_version: SCHEMA_VERSION.into(),
        dim: e.dim(),
        field,
        atoms: e.atoms().to_vec(),
        weights: e.weights().iter().map(|m| encode_matrix(m, field)).collect(),
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ovm_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let e = random::atomic_measure(&mut rng, 3, &[-1.0 / 3.0, 0.1, 2.0f64.sqrt()]);
        let text = to_json(&ovm_file(&e));
        let back = parse_ovm(&text).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn real_sequence_round_trip() {
        let seq = crate::gallery::bisgaard_sequence();
        let text = to_json(&sequence_file(&seq));
        assert!(text.contains("\"field\": \"real\""));
        assert_eq!(parse_sequence(&text).unwrap(), seq);
    }

    #[test]
    fn rejects_non_square() {
        let text = r#"{"schema_version":"1","dim":2,"field":"real","matrices":[[[1,0],[0,1],[0,0]]]}"#;
        assert!(matches!(parse_sequence(text), Err(InputError::Schema(_))));
        let text = r#"{"schema_version":"1","dim":2,"field":"real","matrices":[[[1,0,0],[0,1,0]]]}"#;
        assert!(matches!(parse_sequence(text), Err(InputError::Schema(_))));
    }

    #[test]
    fn rejects_bad_json_with_position() {
        let text = "{\n\"schema_version\": \"1\",\n\"dim\": oops}";
        match parse_sequence(text) {
            Err(InputError::Syntax { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_wrong_version_and_field() {
        let text = r#"{"schema_version":"2","dim":1,"field":"real","matrices":[[[1]]]}"#;
        assert!(matches!(parse_sequence(text), Err(InputError::Schema(_))));
        let text = r#"{"schema_version":"1","dim":1,"field":"real","matrices":[[[[1,0]]]]}"#;
        assert!(matches!(parse_sequence(text), Err(InputError::Schema(_))));
    }

    #[test]
    fn rejects_non_hermitian() {
        let text = r#"{"schema_version":"1","dim":2,"field":"real","matrices":[[[1,1],[0,1]]]}"#;
        assert!(parse_sequence(text).is_err());
    }

    #[test]
    fn weights_keep_explicit_norm_bound() {
        let w = crate::gallery::bergman_shift(4);
        let f = weights_file(&w);
        assert_eq!(f.norm_bound, Some(1.0));
        assert_eq!(parse_weights(&to_json(&f)).unwrap(), w);
        let flat = crate::gallery::flat_shift(3);
        assert_eq!(weights_file(&flat).norm_bound, None);
    }
}
