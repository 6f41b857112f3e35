//! Trainable parameter slots.
//!
//! A `Param` owns the current value of one weight tensor plus its Adam
//! state. Forward passes borrow the value as a gradient-tracked leaf (or a
//! detached constant); after `backward`, `step` consumes the accumulated
//! gradient and swaps in the updated leaf.

use super::adam::{adam_step, AdamState};
use super::{Real, Tensor};
use crate::error::Result;

pub struct Param {
    name: String,
    tensor: Tensor,
    adam: AdamState,
}

impl Param {
    pub fn new(name: impl Into<String>, data: Vec<Real>, shape: &[usize]) -> Result<Param> {
        let len = data.len();
        Ok(Param {
            name: name.into(),
            tensor: Tensor::var(data, shape)?,
            adam: AdamState::new(len),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        self.tensor.shape()
    }

    pub fn data(&self) -> &[Real] {
        self.tensor.data()
    }

    /// The gradient-tracked leaf for trainable forward passes.
    pub fn tensor(&self) -> Tensor {
        self.tensor.clone()
    }

    /// A detached copy for frozen forward passes: gradients neither reach
    /// this parameter nor are recorded for it.
    pub fn constant(&self) -> Tensor {
        Tensor::from_vec(self.tensor.to_vec(), self.tensor.shape()).expect("shape consistent")
    }

    pub fn tensor_for(&self, frozen: bool) -> Tensor {
        if frozen {
            self.constant()
        } else {
            self.tensor()
        }
    }

    /// Applies one Adam update using the gradient accumulated on the
    /// current leaf. A parameter untouched by the last backward pass is
    /// left unchanged.
    pub fn step(&mut self, lr: Real) -> Result<()> {
        let Some(grad) = self.tensor.take_grad() else {
            return Ok(());
        };
        let mut data = self.tensor.to_vec();
        adam_step(&mut data, &grad, &mut self.adam, lr)?;
        self.tensor = Tensor::var(data, &self.tensor.shape().to_vec())?;
        Ok(())
    }

    /// Discards any accumulated gradient without updating.
    pub fn zero_grad(&self) {
        let _ = self.tensor.take_grad();
    }

    /// Replaces the value (used when loading checkpoints).
    pub fn set_data(&mut self, data: Vec<Real>) -> Result<()> {
        let shape = self.tensor.shape().to_vec();
        self.tensor = Tensor::var(data, &shape)?;
        self.adam = AdamState::new(self.tensor.numel());
        Ok(())
    }

    /// Overwrites a single element (used by finite-difference probes).
    pub fn set_value(&mut self, idx: usize, v: Real) {
        let mut data = self.tensor.to_vec();
        data[idx] = v;
        let shape = self.tensor.shape().to_vec();
        self.tensor = Tensor::var(data, &shape).expect("shape consistent");
    }

    pub fn get_value(&self, idx: usize) -> Real {
        self.tensor.data()[idx]
    }

    /// FNV-1a over the exact bit patterns; two params compare equal iff
    /// every element is bitwise identical.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.tensor.data() {
            for b in v.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x100_0000_01b3);
            }
        }
        h
    }
}

/// Combined checksum over a parameter list.
pub fn checksum_all<'a>(params: impl IntoIterator<Item = &'a Param>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in params {
        h ^= p.checksum();
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_consumes_gradient() {
        let mut p = Param::new("w", vec![1.0, 2.0], &[2]).unwrap();
        let loss = p.tensor().mul(&p.tensor()).unwrap().sum();
        loss.backward().unwrap();
        let before = p.checksum();
        p.step(0.1).unwrap();
        assert_ne!(before, p.checksum());
        // second step without a new backward is a no-op
        let after = p.checksum();
        p.step(0.1).unwrap();
        assert_eq!(after, p.checksum());
    }

    #[test]
    fn constant_is_detached() {
        let p = Param::new("w", vec![3.0], &[1]).unwrap();
        let loss = p.constant().mul(&p.constant()).unwrap().sum();
        loss.backward().unwrap();
        assert!(p.tensor().grad().is_none());
    }
}
