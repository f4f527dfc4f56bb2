//! Machine-readable output: JSON and CSV with 17 significant digits.

use std::fmt::Write as _;

use serde::ser::{SerializeSeq, Serializer};
use serde::Serialize;
use serde_json::value::RawValue;

use crate::markov::{StationaryDistribution, TransitionMatrix};
use crate::state_space::{Params, State};

/// Formats a float with 17 significant digits (`1.0000000000000000e0`).
/// Non-finite values become `null` in JSON and `NaN`/`inf` in CSV.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn raw17(x: f64) -> Box<RawValue> {
    let text = if x.is_finite() {
        fmt17(x)
    } else {
        "null".to_string()
    };
    RawValue::from_string(text).expect("formatted float is valid JSON")
}

pub fn sig17<S: Serializer>(x: &f64, ser: S) -> Result<S::Ok, S::Error> {
    raw17(*x).serialize(ser)
}

pub fn sig17_vec<S: Serializer>(xs: &[f64], ser: S) -> Result<S::Ok, S::Error> {
    let mut seq = ser.serialize_seq(Some(xs.len()))?;
    for &x in xs {
        seq.serialize_element(&raw17(x))?;
    }
    seq.end()
}

fn sig17_rows<S: Serializer>(rows: &[&[f64]], ser: S) -> Result<S::Ok, S::Error> {
    struct Row<'a>(&'a [f64]);
    impl Serialize for Row<'_> {
        fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
            sig17_vec(self.0, ser)
        }
    }
    let mut seq = ser.serialize_seq(Some(rows.len()))?;
    for r in rows {
        seq.serialize_element(&Row(r))?;
    }
    seq.end()
}

#[derive(Serialize)]
struct MatrixJson<'a> {
    params: &'a Params,
    states: Vec<String>,
    #[serde(serialize_with = "sig17_rows")]
    matrix: Vec<&'a [f64]>,
}

/// `{"params":…,"states":[labels],"matrix":[[…],…]}`
pub fn matrix_json(p: &TransitionMatrix) -> String {
    let doc = MatrixJson {
        params: p.params(),
        states: p.states().iter().map(State::label).collect(),
        matrix: p.rows().collect(),
    };
    serde_json::to_string(&doc).expect("matrix serializes")
}

/// Row-major CSV: a header of state labels, then one labeled row per state.
pub fn matrix_csv(p: &TransitionMatrix) -> String {
    let mut out = String::from("state");
    for s in p.states() {
        let _ = write!(out, ",{}", csv_field(&s.label()));
    }
    out.push('\n');
    for (s, row) in p.states().iter().zip(p.rows()) {
        out.push_str(&csv_field(&s.label()));
        for &v in row {
            let _ = write!(out, ",{}", fmt17(v));
        }
        out.push('\n');
    }
    out
}

/// Quotes a field when it contains a delimiter.
pub fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

/// Labeled probability, one entry of a distribution export.
#[derive(Debug, Clone, Serialize)]
pub struct LabeledProbability {
    pub state: String,
    #[serde(serialize_with = "sig17")]
    pub probability: f64,
}

pub fn labeled(nu: &StationaryDistribution, states: &[State]) -> Vec<LabeledProbability> {
    states
        .iter()
        .zip(&nu.nu)
        .map(|(s, &p)| LabeledProbability {
            state: s.label(),
            probability: p,
        })
        .collect()
}

/// CSV with columns `state,probability`.
pub fn distribution_csv(nu: &StationaryDistribution, states: &[State]) -> String {
    let mut out = String::from("state,probability\n");
    for (s, &p) in states.iter().zip(&nu.nu) {
        let _ = writeln!(out, "{},{}", csv_field(&s.label()), fmt17(p));
    }
    out
}
