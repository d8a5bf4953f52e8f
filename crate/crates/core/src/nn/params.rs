use std::collections::HashMap;

use super::{NnError, Tensor};

/// Ordered, named parameter set. Gradients and optimizer moments are kept
/// as `Vec<Tensor>` aligned with this ordering.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> usize {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let id = self.names.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(tensor);
        id
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Result<usize, NnError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| NnError::MissingParam(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensor(&self, id: usize) -> &Tensor {
        &self.tensors[id]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn zeros_like(&self) -> Vec<Tensor> {
        self.tensors
            .iter()
            .map(|t| Tensor::zeros(t.rows(), t.cols()))
            .collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.data().len()).sum()
    }

    /// Round every value to the nearest f32 so that the in-memory model is
    /// exactly what the weight blob will hold.
    pub fn round_to_f32(&mut self) {
        for t in &mut self.tensors {
            for v in t.data_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    /// Verify names and shapes against a reference layout.
    pub fn check_layout(&self, expected: &Params) -> Result<(), NnError> {
        for (name, t) in expected.iter() {
            let got = self
                .get(name)
                .ok_or_else(|| NnError::MissingParam(name.to_string()))?;
            if got.shape() != t.shape() {
                return Err(NnError::Shape(format!(
                    "{name}: stored {:?}, architecture needs {:?}",
                    got.shape(),
                    t.shape()
                )));
            }
        }
        if self.len() != expected.len() {
            let extra = self
                .names
                .iter()
                .find(|n| expected.get(n).is_none())
                .cloned()
                .unwrap_or_default();
            return Err(NnError::Shape(format!("unexpected parameter {extra:?}")));
        }
        Ok(())
    }
}
