use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{shape_err, Result};
use crate::tensor::{Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Ordered, named collection of trainable tensors.
#[derive(Clone, Debug, Default)]
pub struct ParamSet<T: Element> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Element> ParamSet<T> {
    pub fn new() -> Self {
        Self { names: Vec::new(), tensors: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor<T>) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(t.detach());
        ParamId(self.tensors.len() - 1)
    }

    /// He-normal initialization for a conv kernel `[O, I, Kh, Kw]`, scaled by `gain`.
    pub fn add_conv_kernel(
        &mut self,
        name: impl Into<String>,
        shape: [usize; 4],
        gain: f64,
        rng: &mut impl Rng,
    ) -> ParamId {
        let fan_in = (shape[1] * shape[2] * shape[3]).max(1);
        let std = gain * (2.0 / fan_in as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| T::c(std * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        self.add(name, Tensor::from_vec(&shape, data).expect("kernel shape"))
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    /// Replaces a parameter with an untracked tensor of the same shape.
    pub fn set(&mut self, id: ParamId, t: Tensor<T>) {
        assert_eq!(t.shape(), self.tensors[id.0].shape(), "parameter shape is fixed");
        self.tensors[id.0] = t.detach();
    }

    /// Swaps in a full list of tensors (same order and shapes), e.g. tracked
    /// copies for gradient checks.
    pub fn replace_all(&mut self, tensors: Vec<Tensor<T>>) -> Result<()> {
        if tensors.len() != self.tensors.len()
            || tensors.iter().zip(&self.tensors).any(|(a, b)| a.shape() != b.shape())
        {
            return shape_err("replacement parameter list does not match");
        }
        self.tensors = tensors;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Total number of trainable scalars.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Replaces every tensor by a fresh gradient-tracked leaf.
    pub fn track(&mut self) {
        for t in &mut self.tensors {
            *t = t.requires_grad();
        }
    }

    /// Replaces every tensor by an untracked leaf.
    pub fn untrack(&mut self) {
        for t in &mut self.tensors {
            *t = t.detach();
        }
    }

    /// Accumulated gradient per parameter, zero-filled where none flowed.
    pub fn grads(&self) -> Vec<Vec<T>> {
        self.tensors
            .iter()
            .map(|t| t.grad().unwrap_or_else(|| vec![T::zero(); t.numel()]))
            .collect()
    }

    /// Overwrites the values of parameter `i`; shape is preserved.
    pub fn set_values(&mut self, i: usize, data: Vec<T>) -> Result<()> {
        let shape = self.tensors[i].shape().to_vec();
        self.tensors[i] = Tensor::from_vec(&shape, data)?;
        Ok(())
    }

    pub fn set_by_name(&mut self, name: &str, t: Tensor<T>) -> Result<()> {
        let Some(ParamId(i)) = self.find(name) else {
            return shape_err(format!("unknown parameter {name}"));
        };
        if t.shape() != self.tensors[i].shape() {
            return shape_err(format!(
                "parameter {name} has shape {:?}, got {:?}",
                self.tensors[i].shape(),
                t.shape()
            ));
        }
        self.tensors[i] = t.detach();
        Ok(())
    }
}
