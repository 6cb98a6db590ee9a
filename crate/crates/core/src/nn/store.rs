//! Textual tensor store used by checkpoints.
//!
//! The format is a flat, UTF-8, line-oriented key -> tensor map:
//!
//! ```text
//! diskill-store v1
//! meta <key> <value with \n and \\ escapes>
//! tensor <key> <rank> <dim0> [<dim1>]
//! <row of base-10 floats, 17 significant digits, space separated>
//! ...
//! ```
//!
//! Rank-0 and rank-1 tensors use a single data line, rank-2 one line per
//! row. Keys are sorted, so serialization is byte-deterministic. Floats are
//! written with 17 significant digits and therefore round-trip exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

const MAGIC: &str = "diskill-store v1";

/// One tensor: a shape and row-major data.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Sorted key -> tensor map plus string metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorStore {
    pub meta: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, TensorEntry>,
}

impl TensorStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.meta.insert(key.into(), value.into());
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Checkpoint(format!("missing meta key '{key}'")))
    }

    pub fn insert_vec(&mut self, key: impl Into<String>, data: &[f64]) {
        self.tensors
            .insert(key.into(), TensorEntry { shape: vec![data.len()], data: data.to_vec() });
    }

    pub fn insert_scalar(&mut self, key: impl Into<String>, value: f64) {
        self.tensors.insert(key.into(), TensorEntry { shape: vec![], data: vec![value] });
    }

    pub fn insert_array1(&mut self, key: impl Into<String>, a: &Array1<f64>) {
        self.insert_vec(key, a.as_slice().expect("contiguous"));
    }

    pub fn insert_array2(&mut self, key: impl Into<String>, a: &Array2<f64>) {
        self.tensors.insert(
            key.into(),
            TensorEntry { shape: vec![a.nrows(), a.ncols()], data: a.iter().copied().collect() },
        );
    }

    pub fn get(&self, key: &str) -> Result<&TensorEntry> {
        self.tensors
            .get(key)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor '{key}'")))
    }

    pub fn get_vec(&self, key: &str) -> Result<Vec<f64>> {
        let t = self.get(key)?;
        if t.shape.len() != 1 {
            return Err(Error::Checkpoint(format!("tensor '{key}' is not rank 1")));
        }
        Ok(t.data.clone())
    }

    pub fn get_scalar(&self, key: &str) -> Result<f64> {
        let t = self.get(key)?;
        if !t.shape.is_empty() || t.data.len() != 1 {
            return Err(Error::Checkpoint(format!("tensor '{key}' is not a scalar")));
        }
        Ok(t.data[0])
    }

    pub fn get_array1(&self, key: &str) -> Result<Array1<f64>> {
        Ok(Array1::from_vec(self.get_vec(key)?))
    }

    pub fn get_array2(&self, key: &str) -> Result<Array2<f64>> {
        let t = self.get(key)?;
        if t.shape.len() != 2 {
            return Err(Error::Checkpoint(format!("tensor '{key}' is not rank 2")));
        }
        Array2::from_shape_vec((t.shape[0], t.shape[1]), t.data.clone())
            .map_err(|e| Error::Checkpoint(format!("tensor '{key}': {e}")))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta {k} {}", escape(v));
        }
        for (k, t) in &self.tensors {
            let _ = write!(out, "tensor {k} {}", t.shape.len());
            for d in &t.shape {
                let _ = write!(out, " {d}");
            }
            out.push('\n');
            match t.shape.len() {
                0 | 1 => {
                    push_row(&mut out, &t.data);
                }
                2 => {
                    for row in t.data.chunks(t.shape[1].max(1)) {
                        push_row(&mut out, row);
                    }
                }
                _ => unreachable!("only ranks 0..=2 are stored"),
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(Error::Checkpoint("bad or missing store header".into()));
        }
        let mut store = TensorStore::new();
        while let Some(line) = lines.next() {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, ' ');
            match parts.next() {
                Some("meta") => {
                    let key = parts.next().ok_or_else(|| Error::Parse("meta line missing key".into()))?;
                    let value = parts.next().unwrap_or("");
                    store.meta.insert(key.to_string(), unescape(value));
                }
                Some("tensor") => {
                    let key = parts
                        .next()
                        .ok_or_else(|| Error::Parse("tensor line missing key".into()))?
                        .to_string();
                    let rest = parts.next().ok_or_else(|| Error::Parse("tensor line missing rank".into()))?;
                    let mut nums = rest.split_whitespace();
                    let rank: usize = nums
                        .next()
                        .ok_or_else(|| Error::Parse("tensor line missing rank".into()))?
                        .parse()
                        .map_err(|_| Error::Parse("bad tensor rank".into()))?;
                    if rank > 2 {
                        return Err(Error::Parse(format!("unsupported tensor rank {rank}")));
                    }
                    let shape: Vec<usize> = nums
                        .map(|t| t.parse().map_err(|_| Error::Parse("bad tensor dim".into())))
                        .collect::<Result<_>>()?;
                    if shape.len() != rank {
                        return Err(Error::Parse("tensor dims do not match rank".into()));
                    }
                    let n_rows = if rank == 2 { shape[0] } else { 1 };
                    let expected: usize = shape.iter().product::<usize>().max(if rank == 0 { 1 } else { 0 });
                    let mut data = Vec::with_capacity(expected);
                    for _ in 0..n_rows {
                        let row = lines
                            .next()
                            .ok_or_else(|| Error::Parse(format!("truncated data for tensor '{key}'")))?;
                        for tok in row.split_whitespace() {
                            let v: f64 = tok
                                .parse()
                                .map_err(|_| Error::Parse(format!("bad float '{tok}' in tensor '{key}'")))?;
                            data.push(v);
                        }
                    }
                    let want = match rank {
                        0 => 1,
                        _ => shape.iter().product(),
                    };
                    if data.len() != want {
                        return Err(Error::Parse(format!(
                            "tensor '{key}' expected {want} values, found {}",
                            data.len()
                        )));
                    }
                    store.tensors.insert(key, TensorEntry { shape, data });
                }
                _ => return Err(Error::Parse(format!("unrecognized store line: {line}"))),
            }
        }
        Ok(store)
    }

    pub fn write_to_file(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
        Self::from_text(&text)
    }
}

fn push_row(out: &mut String, row: &[f64]) {
    let mut first = true;
    for v in row {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v:.16e}");
    }
    out.push('\n');
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\n', "\\n")
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('\\') => out.push('\\'),
                Some(other) => {
                    out.push('\\');
                    out.push(other);
                }
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn meta_escaping_roundtrips() {
        let mut store = TensorStore::new();
        store.insert_meta("config", "line one\nline two\\with backslash");
        let text = store.to_text();
        let back = TensorStore::from_text(&text).unwrap();
        assert_eq!(back.meta("config").unwrap(), "line one\nline two\\with backslash");
    }

    #[test]
    fn truncated_text_is_an_error() {
        let mut store = TensorStore::new();
        store.insert_vec("v", &[1.0, 2.0, 3.0]);
        let text = store.to_text();
        // Drop the whole data row: the declared element count no longer matches.
        let cut = &text[..text.len() - 25];
        assert!(TensorStore::from_text(cut).is_err());
        assert!(TensorStore::from_text("not a store").is_err());
    }

    proptest! {
        #[test]
        fn float_roundtrip_is_exact(values in proptest::collection::vec(-1e12f64..1e12, 1..40)) {
            let mut store = TensorStore::new();
            store.insert_vec("data", &values);
            store.insert_scalar("s", values[0]);
            let back = TensorStore::from_text(&store.to_text()).unwrap();
            prop_assert_eq!(back.get_vec("data").unwrap(), values.clone());
            prop_assert_eq!(back.get_scalar("s").unwrap(), values[0]);
        }

        #[test]
        fn matrix_roundtrip_is_exact(rows in 1usize..6, cols in 1usize..6, seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1e6..1e6));
            let mut store = TensorStore::new();
            store.insert_array2("m", &m);
            let back = TensorStore::from_text(&store.to_text()).unwrap();
            prop_assert_eq!(back.get_array2("m").unwrap(), m);
        }
    }
}
