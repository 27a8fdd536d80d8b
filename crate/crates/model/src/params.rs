//! Named parameter store and the small layer set the networks are built from.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use segland_core::{NamedTensors, TensorData};

use crate::error::{Error, Result};

/// Parameters keyed by dotted name.
///
/// A trainable store hands out [`Var`]s so the optimizer can update them in
/// place; a frozen store hands out plain tensors that never enter the
/// autograd graph.
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
    vars: BTreeMap<String, Var>,
    trainable: bool,
    device: Device,
}

impl ParamStore {
    pub fn new_trainable(device: &Device) -> Self {
        ParamStore {
            tensors: BTreeMap::new(),
            vars: BTreeMap::new(),
            trainable: true,
            device: device.clone(),
        }
    }

    /// Loads named tensors; `trainable` selects Var or constant storage.
    pub fn from_named(named: &NamedTensors, prefix: &str, trainable: bool, device: &Device) -> Result<Self> {
        let mut store = ParamStore {
            tensors: BTreeMap::new(),
            vars: BTreeMap::new(),
            trainable,
            device: device.clone(),
        };
        store.load(named, prefix)?;
        Ok(store)
    }

    /// Adds `named` under `prefix`.
    pub fn load(&mut self, named: &NamedTensors, prefix: &str) -> Result<()> {
        for (name, t) in named {
            let tensor = Tensor::from_vec(t.data.clone(), t.shape.as_slice(), &self.device)?;
            self.insert(format!("{prefix}{name}"), tensor)?;
        }
        Ok(())
    }

    fn insert(&mut self, name: String, tensor: Tensor) -> Result<Tensor> {
        if self.trainable {
            let var = Var::from_tensor(&tensor)?;
            let t = var.as_tensor().clone();
            self.vars.insert(name.clone(), var);
            self.tensors.insert(name, t.clone());
            Ok(t)
        } else {
            self.tensors.insert(name, tensor.clone());
            Ok(tensor)
        }
    }

    /// Returns the named tensor, creating it from `init` when absent.
    pub fn get_or_init(&mut self, name: &str, shape: &[usize], init: impl FnOnce() -> Vec<f32>) -> Result<Tensor> {
        if let Some(t) = self.tensors.get(name) {
            if t.dims() != shape {
                return Err(Error::Shape(format!(
                    "parameter `{name}` has shape {:?}, expected {shape:?}",
                    t.dims()
                )));
            }
            return Ok(t.clone());
        }
        if !self.trainable {
            return Err(Error::MissingParam(name.to_string()));
        }
        let tensor = Tensor::from_vec(init(), shape, &self.device)?;
        self.insert(name.to_string(), tensor)
    }

    pub fn vars(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Exports the tensors whose names start with `prefix`, prefix stripped.
    pub fn export(&self, prefix: &str) -> Result<NamedTensors> {
        let mut out = NamedTensors::new();
        for (name, t) in &self.tensors {
            if let Some(rest) = name.strip_prefix(prefix) {
                let data = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
                out.insert(rest.to_string(), TensorData::new(t.dims().to_vec(), data)?);
            }
        }
        Ok(out)
    }
}

pub(crate) fn normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize, std: f64) -> Vec<f32> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            (z * std) as f32
        })
        .collect()
}

/// 2-D convolution with bias, square kernel, "same"-style padding.
#[derive(Clone, Debug)]
pub struct Conv2d {
    weight: Tensor,
    bias: Tensor,
    stride: usize,
    padding: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// He-normal, for layers followed by ReLU.
    Relu,
    /// Unit-gain normal, for linear outputs.
    Linear,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        init: Init,
    ) -> Result<Self> {
        let fan_in = (c_in * kernel * kernel) as f64;
        let std = match init {
            Init::Relu => (2.0 / fan_in).sqrt(),
            Init::Linear => (1.0 / fan_in).sqrt(),
        };
        let weight = store.get_or_init(&format!("{name}.weight"), &[c_out, c_in, kernel, kernel], || {
            normal_vec(rng, c_out * c_in * kernel * kernel, std)
        })?;
        let bias = store.get_or_init(&format!("{name}.bias"), &[c_out], || vec![0.0; c_out])?;
        Ok(Conv2d {
            weight,
            bias,
            stride,
            padding: kernel / 2,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(&self.weight, self.padding, self.stride, 1, 1)?;
        let bias = self.bias.reshape((1, self.bias.dim(0)?, 1, 1))?;
        Ok(y.broadcast_add(&bias)?)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[0]
    }
}
