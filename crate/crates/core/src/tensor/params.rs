//! Named weight collections and their JSON manifest.
//!
//! The manifest is a flat object mapping each parameter name to its shape and
//! values. Values are either a decimal array (`"data"`) or little-endian `f64`
//! bytes in standard base64 (`"base64"`):
//!
//! ```json
//! { "skip_down": { "shape": [1, 1, 2, 2], "data": [0.5, -0.25, 1.0, 0.0] } }
//! ```

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{Real, Result, TensorError};

/// One named weight array with a fixed shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> ParamEntry<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![T::zero(); n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn cast<U: Real>(&self) -> ParamEntry<U> {
        ParamEntry {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.to_f64().unwrap_or(f64::NAN)).unwrap_or(U::nan()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlobEncoding {
    Decimal,
    Base64,
}

/// Ordered map from parameter name to weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlob<T = f32> {
    entries: BTreeMap<String, ParamEntry<T>>,
}

impl<T: Real> Default for ParamBlob<T> {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    data: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base64: Option<String>,
}

impl<T: Real> ParamBlob<T> {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, entry: ParamEntry<T>) -> Option<ParamEntry<T>> {
        self.entries.insert(name.into(), entry)
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry<T>> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamEntry<T>> {
        self.entries.get_mut(name)
    }

    pub fn require(&self, name: &str) -> Result<&ParamEntry<T>> {
        self.get(name)
            .ok_or_else(|| TensorError::MissingParam(name.to_string()))
    }

    /// Like [`require`](Self::require) but also checks the declared shape.
    pub fn require_shape(&self, name: &str, shape: &[usize]) -> Result<&ParamEntry<T>> {
        let e = self.require(name)?;
        if e.shape() != shape {
            return Err(TensorError::ShapeMismatch {
                op: "param",
                expected: shape.to_vec(),
                actual: e.shape().to_vec(),
            });
        }
        Ok(e)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar weights.
    pub fn weight_count(&self) -> usize {
        self.entries.values().map(ParamEntry::len).sum()
    }

    pub fn to_json(&self, encoding: BlobEncoding) -> String {
        let raw: BTreeMap<&str, RawEntry> = self
            .entries
            .iter()
            .map(|(k, e)| {
                let values: Vec<f64> = e.data.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
                let raw = match encoding {
                    BlobEncoding::Decimal => RawEntry {
                        shape: e.shape.clone(),
                        data: Some(values),
                        base64: None,
                    },
                    BlobEncoding::Base64 => {
                        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
                        RawEntry {
                            shape: e.shape.clone(),
                            data: None,
                            base64: Some(STANDARD.encode(bytes)),
                        }
                    }
                };
                (k.as_str(), raw)
            })
            .collect();
        serde_json::to_string_pretty(&raw).expect("blob serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, RawEntry> =
            serde_json::from_str(text).map_err(|e| TensorError::Blob(e.to_string()))?;
        let mut blob = Self::new();
        for (name, r) in raw {
            let values = match (r.data, r.base64) {
                (Some(d), None) => d,
                (None, Some(b)) => {
                    let bytes = STANDARD
                        .decode(b.as_bytes())
                        .map_err(|e| TensorError::Blob(format!("`{name}`: {e}")))?;
                    if bytes.len() % 8 != 0 {
                        return Err(TensorError::Blob(format!(
                            "`{name}`: base64 payload is not a whole number of f64 values"
                        )));
                    }
                    bytes
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect()
                }
                _ => {
                    return Err(TensorError::Blob(format!(
                        "`{name}`: exactly one of `data` or `base64` is required"
                    )))
                }
            };
            let data = values
                .into_iter()
                .map(|v| T::from_f64(v).ok_or_else(|| TensorError::Blob(format!("`{name}`: bad value"))))
                .collect::<Result<Vec<_>>>()?;
            blob.insert(name, ParamEntry::new(r.shape, data)?);
        }
        Ok(blob)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> ParamBlob<f64> {
        let mut b = ParamBlob::new();
        b.insert("a", ParamEntry::new(vec![2, 2], vec![0.1, -2.5, 1e-300, 7.0]).unwrap());
        b.insert("slope", ParamEntry::new(vec![1], vec![0.25]).unwrap());
        b
    }

    #[test]
    fn both_encodings_round_trip() {
        let b = sample();
        for enc in [BlobEncoding::Decimal, BlobEncoding::Base64] {
            assert_eq!(ParamBlob::<f64>::from_json(&b.to_json(enc)).unwrap(), b);
        }
    }

    #[test]
    fn rejects_length_mismatch_and_ambiguous_entries() {
        assert!(ParamBlob::<f64>::from_json(r#"{"a":{"shape":[3],"data":[1,2]}}"#).is_err());
        assert!(ParamBlob::<f64>::from_json(r#"{"a":{"shape":[1]}}"#).is_err());
        assert!(ParamBlob::<f64>::from_json(r#"{"a":{"shape":[1],"data":[1],"base64":""}}"#).is_err());
    }

    #[test]
    fn require_shape_checks_declared_shape() {
        let b = sample();
        assert!(b.require_shape("a", &[2, 2]).is_ok());
        assert!(b.require_shape("a", &[4]).is_err());
        assert_eq!(b.require("b").unwrap_err(), TensorError::MissingParam("b".into()));
        assert_eq!(b.weight_count(), 5);
    }

    proptest! {
        #[test]
        fn decimal_manifest_is_lossless(values in prop::collection::vec(-1e6f64..1e6, 1..40)) {
            let mut b = ParamBlob::new();
            b.insert("w", ParamEntry::new(vec![values.len()], values).unwrap());
            prop_assert_eq!(ParamBlob::<f64>::from_json(&b.to_json(BlobEncoding::Decimal)).unwrap(), b);
        }
    }
}
