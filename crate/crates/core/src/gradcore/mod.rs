//! Reverse-mode differentiation engine, Adam, and finite-difference checks.

mod adam;
pub mod gradcheck;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use tape::{Tape, Var};
pub use tensor::{Real, Tensor};

pub(crate) use tape::sigmoid;

/// A collection of named trainable tensors.
///
/// Names are stable identifiers: tapes report gradients under them, Adam
/// keys its moments by them and checkpoints store them.
pub trait ParamSet<T: Real> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)>;
    fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)>;

    fn num_params(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.numel()).sum()
    }
}

/// Plain ordered list of named tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NamedTensors<T: Real = f32> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Real> NamedTensors<T> {
    pub fn new(entries: Vec<(String, Tensor<T>)>) -> Self {
        Self { entries }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.entries.push((name.into(), t));
    }

    /// Registers every entry on `tape` as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.entries
            .iter()
            .map(|(n, t)| tape.param(n.clone(), t))
            .collect()
    }
}

impl<T: Real> ParamSet<T> for NamedTensors<T> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.clone(), t)).collect()
    }

    fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        self.entries
            .iter_mut()
            .map(|(n, t)| (n.clone(), t))
            .collect()
    }
}
