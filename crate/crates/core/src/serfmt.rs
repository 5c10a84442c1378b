//! Serde helpers: JSON has no infinities, so extended reals are written as
//! numbers when finite and as the strings `"+inf"`, `"-inf"`, `"nan"` otherwise.

use nalgebra::DVector;
use serde::ser::SerializeSeq;
use serde::Serializer;

pub fn ext<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(ext_str(*v))
    }
}

pub fn ext_opt<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => ext(x, s),
        None => s.serialize_none(),
    }
}

pub fn ext_str(v: f64) -> &'static str {
    if v.is_nan() {
        "nan"
    } else if v > 0.0 {
        "+inf"
    } else {
        "-inf"
    }
}

pub fn dvec<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v.iter() {
        seq.serialize_element(x)?;
    }
    seq.end()
}

pub fn dvecs<S: Serializer>(v: &[DVector<f64>], s: S) -> Result<S::Ok, S::Error> {
    let plain: Vec<Vec<f64>> = v.iter().map(|r| r.iter().copied().collect()).collect();
    serde::Serialize::serialize(&plain, s)
}

/// Human-readable extended real.
pub fn show(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6e}")
    } else {
        ext_str(v).to_string()
    }
}
