use std::collections::HashMap;

use rand::Rng;

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<F> {
    pub name: String,
    pub value: Tensor<F>,
    pub trainable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Uniform in ±sqrt(6 / (fan_in + fan_out)) over a [fan_in, fan_out] matrix.
    XavierUniform,
    Zeros,
}

/// Named model parameters in declaration order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet<F> {
    params: Vec<Parameter<F>>,
    by_name: HashMap<String, usize>,
}

impl<F: Scalar> ParamSet<F> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn declare<R: Rng>(&mut self, name: &str, shape: &[usize], init: Init, rng: &mut R) -> Result<ParamId> {
        let mut value = Tensor::zeros(shape);
        if init == Init::XavierUniform {
            let fan_in = shape.first().copied().unwrap_or(1);
            let fan_out = shape.get(1).copied().unwrap_or(1);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in value.data_mut() {
                *v = F::of(rng.gen_range(-bound..bound));
            }
        }
        self.insert(name, value)
    }

    pub fn insert(&mut self, name: &str, value: Tensor<F>) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter name {name:?}")));
        }
        let id = ParamId(self.params.len());
        self.by_name.insert(name.to_owned(), id.0);
        self.params.push(Parameter {
            name: name.to_owned(),
            value,
            trainable: true,
        });
        Ok(id)
    }

    pub fn get(&self, id: ParamId) -> &Parameter<F> {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<F> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.params[id.0].value
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<F>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<F>> {
        self.params.iter_mut()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn cast<G: Scalar>(&self) -> ParamSet<G> {
        ParamSet {
            params: self
                .params
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    trainable: p.trainable,
                })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }

    /// Overwrites values by name; every parameter must be present with the
    /// same shape.
    pub fn load_values(&mut self, values: &[(String, Tensor<F>)]) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::CorruptCheckpoint(format!(
                "expected {} parameter arrays, found {}",
                self.params.len(),
                values.len()
            )));
        }
        for (name, value) in values {
            let id = self
                .id(name)
                .ok_or_else(|| Error::CorruptCheckpoint(format!("unknown parameter {name:?}")))?;
            let slot = &mut self.params[id.0].value;
            if slot.shape() != value.shape() {
                return Err(Error::CorruptCheckpoint(format!(
                    "parameter {name:?} has shape {:?}, expected {:?}",
                    value.shape(),
                    slot.shape()
                )));
            }
            *slot = value.clone();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn names_unique_and_ordered() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = ParamSet::<f32>::new();
        let a = p.declare("a", &[2, 3], Init::XavierUniform, &mut rng).unwrap();
        let b = p.declare("b", &[3], Init::Zeros, &mut rng).unwrap();
        assert!(p.declare("a", &[1], Init::Zeros, &mut rng).is_err());
        assert_eq!(p.iter().map(|x| x.name.as_str()).collect::<Vec<_>>(), ["a", "b"]);
        let bound = (6.0f32 / 5.0).sqrt();
        assert!(p.value(a).data().iter().all(|v| v.abs() <= bound));
        assert!(p.value(b).data().iter().all(|&v| v == 0.0));
    }
}
