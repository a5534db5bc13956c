use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::tensor::Matrix;

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    /// Uniform in `[-bound, bound]`.
    Uniform(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    /// `group.tensor`
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub init: Init,
}

impl ParamSpec {
    pub fn uniform(name: &str, rows: usize, cols: usize, bound: f64) -> Self {
        ParamSpec { name: name.to_string(), rows, cols, init: Init::Uniform(bound) }
    }

    pub fn zeros(name: &str, rows: usize, cols: usize) -> Self {
        ParamSpec { name: name.to_string(), rows, cols, init: Init::Zeros }
    }

    /// Fan-in scaled weight plus zero bias for an affine layer.
    pub fn linear(prefix: &str, fan_in: usize, fan_out: usize) -> [ParamSpec; 2] {
        [
            ParamSpec::uniform(&format!("{prefix}.weight"), fan_in, fan_out, 1.0 / (fan_in as f64).sqrt()),
            ParamSpec::zeros(&format!("{prefix}.bias"), 1, fan_out),
        ]
    }

    pub fn group(&self) -> &str {
        group_of(&self.name)
    }

    pub fn count(&self) -> usize {
        self.rows * self.cols
    }
}

pub fn group_of(name: &str) -> &str {
    name.split('.').next().unwrap_or(name)
}

/// Named parameter tensors in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    /// Each tensor draws from its own stream seeded by `seed` and its name, so a
    /// tensor's initial value does not depend on which other tensors exist.
    pub fn new(specs: &[ParamSpec], seed: u64) -> Self {
        let mut store = ParamStore { names: Vec::new(), values: Vec::new(), index: BTreeMap::new() };
        for s in specs {
            let value = match s.init {
                Init::Zeros => Matrix::zeros(s.rows, s.cols),
                Init::Uniform(bound) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(s.name.as_bytes()));
                    let data = (0..s.count()).map(|_| rng.gen_range(-bound..=bound)).collect();
                    Matrix::from_vec(s.rows, s.cols, data)
                }
            };
            store.push(&s.name, value);
        }
        store
    }

    pub(crate) fn push(&mut self, name: &str, value: Matrix) {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        self.index.insert(name.to_string(), self.names.len());
        self.names.push(name.to_string());
        self.values.push(value);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn value(&self, id: usize) -> &Matrix {
        &self.values[id]
    }

    pub fn value_mut(&mut self, id: usize) -> &mut Matrix {
        &mut self.values[id]
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.id(name).map(|i| &self.values[i])
    }

    /// Replaces a tensor, keeping its shape.
    pub fn set(&mut self, name: &str, value: Matrix) -> Result<(), String> {
        let id = self.id(name).ok_or_else(|| format!("unknown parameter {name}"))?;
        if self.values[id].shape() != value.shape() {
            return Err(format!(
                "parameter {name}: expected shape {:?}, got {:?}",
                self.values[id].shape(),
                value.shape()
            ));
        }
        self.values[id] = value;
        Ok(())
    }

    /// Total number of scalars.
    pub fn count(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    pub fn groups(&self) -> Vec<String> {
        let mut g: Vec<String> = self.names.iter().map(|n| group_of(n).to_string()).collect();
        g.dedup();
        g
    }

    pub fn zero_grads(&self) -> Vec<Matrix> {
        self.values.iter().map(|m| Matrix::zeros(m.rows, m.cols)).collect()
    }

    /// SHA-256 over names and little-endian value bits of tensors in `groups`.
    pub fn checksum(&self, groups: &[&str]) -> String {
        let mut h = Sha256::new();
        for (name, value) in self.names.iter().zip(&self.values) {
            if !groups.contains(&group_of(name)) {
                continue;
            }
            h.update(name.as_bytes());
            h.update([0u8]);
            for v in &value.data {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }
}
