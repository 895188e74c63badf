use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Named trainable tensors of one network.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    pub names: Vec<String>,
    pub shapes: Vec<Vec<usize>>,
    pub values: Vec<Vec<f32>>,
}

pub enum Init {
    Zeros,
    Ones,
    /// He-normal for a leaky-ReLU network with the given fan-in.
    Kaiming { fan_in: usize },
}

/// Negative slope used by every leaky ReLU in the networks.
pub const LEAKY_SLOPE: f32 = 0.01;

impl ParamStore {
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Init, rng: &mut impl Rng) -> ParamId {
        let n: usize = shape.iter().product();
        let values = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Kaiming { fan_in } => {
                let gain = (2.0 / (1.0 + (LEAKY_SLOPE as f64).powi(2))).sqrt();
                let normal = Normal::new(0.0, gain / (fan_in as f64).sqrt()).expect("positive std");
                (0..n).map(|_| normal.sample(rng) as f32).collect()
            }
        };
        self.names.push(name.into());
        self.shapes.push(shape.to_vec());
        self.values.push(values);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &[f32] {
        &self.values[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    pub fn zeros_like(&self) -> Vec<Vec<f32>> {
        self.values.iter().map(|v| vec![0.0; v.len()]).collect()
    }

    /// Replaces all values, checking names and shapes line up.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        if self.names != other.names || self.shapes != other.shapes {
            return Err(Error::InvalidInput("parameter layout differs".into()));
        }
        self.values.clone_from(&other.values);
        Ok(())
    }
}
