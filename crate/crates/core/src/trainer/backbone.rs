use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{gemm, gemm_nt, Mat, Prng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackboneKind {
    Linear,
    /// One tanh hidden layer of the given width.
    Hidden(usize),
}

impl fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackboneKind::Linear => f.write_str("linear"),
            BackboneKind::Hidden(h) => write!(f, "mlp:{h}"),
        }
    }
}

impl FromStr for BackboneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "linear" {
            return Ok(BackboneKind::Linear);
        }
        if let Some(w) = s.strip_prefix("mlp:") {
            if let Ok(h) = w.parse::<usize>() {
                if h > 0 {
                    return Ok(BackboneKind::Hidden(h));
                }
            }
        }
        Err(Error::invalid(format!(
            "unknown backbone '{s}' (expected linear or mlp:<width>)"
        )))
    }
}

/// Dense layer `y = x·Wᵀ + b`; `weight` is out×in, `bias` is 1×out.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Mat,
    pub bias: Mat,
}

impl Layer {
    fn init(rng: &mut Prng, fan_in: usize, fan_out: usize) -> Layer {
        let std = (2.0 / fan_in as f64).sqrt();
        Layer {
            weight: rng.normal_mat(fan_out, fan_in).scale(std),
            bias: Mat::zeros(1, fan_out),
        }
    }

    fn forward(&self, x: &Mat) -> Result<Mat> {
        let mut y = gemm_nt(x, &self.weight)?;
        let b = self.bias.row(0);
        for i in 0..y.rows() {
            for (v, bj) in y.row_mut(i).iter_mut().zip(b) {
                *v += bj;
            }
        }
        Ok(y)
    }

    /// Returns (dx, dW, db).
    fn backward(&self, x: &Mat, dy: &Mat) -> Result<(Mat, Mat, Mat)> {
        let dw = gemm(&dy.transpose(), x)?;
        let mut db = Mat::zeros(1, dy.cols());
        for i in 0..dy.rows() {
            for (s, g) in db.row_mut(0).iter_mut().zip(dy.row(i)) {
                *s += g;
            }
        }
        Ok((gemm(dy, &self.weight)?, dw, db))
    }
}

/// Small embedding network standing in for a convolutional backbone.
#[derive(Clone, Debug, PartialEq)]
pub struct Backbone {
    pub layers: Vec<Layer>,
}

/// Activations kept for the backward pass.
pub struct ForwardCache {
    input: Mat,
    hidden: Option<Mat>,
}

impl Backbone {
    /// Gaussian init with per-layer std √(2/fan_in); zero biases.
    pub fn new(kind: BackboneKind, d_in: usize, d_out: usize, rng: &mut Prng) -> Result<Self> {
        if d_in == 0 || d_out == 0 {
            return Err(Error::invalid("backbone dims must be positive"));
        }
        let layers = match kind {
            BackboneKind::Linear => vec![Layer::init(rng, d_in, d_out)],
            BackboneKind::Hidden(h) => vec![Layer::init(rng, d_in, h), Layer::init(rng, h, d_out)],
        };
        Ok(Backbone { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() || layers.len() > 2 {
            return Err(Error::invalid(format!(
                "a backbone has 1 or 2 layers, got {}",
                layers.len()
            )));
        }
        for l in &layers {
            if l.bias.shape() != (1, l.weight.rows()) {
                return Err(Error::shape("Backbone", "bias does not match weight rows"));
            }
        }
        if layers.len() == 2 && layers[1].weight.cols() != layers[0].weight.rows() {
            return Err(Error::shape("Backbone", "hidden widths disagree"));
        }
        Ok(Backbone { layers })
    }

    pub fn kind(&self) -> BackboneKind {
        match self.layers.len() {
            1 => BackboneKind::Linear,
            _ => BackboneKind::Hidden(self.layers[0].weight.rows()),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weight.rows()
    }

    pub fn forward(&self, x: &Mat) -> Result<(Mat, ForwardCache)> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(
                "Backbone::forward",
                format!(
                    "input dim {} != backbone input {}",
                    x.cols(),
                    self.input_dim()
                ),
            ));
        }
        match self.layers.as_slice() {
            [l] => Ok((
                l.forward(x)?,
                ForwardCache {
                    input: x.clone(),
                    hidden: None,
                },
            )),
            [l1, l2] => {
                let h = l1.forward(x)?.map(f64::tanh);
                let y = l2.forward(&h)?;
                Ok((
                    y,
                    ForwardCache {
                        input: x.clone(),
                        hidden: Some(h),
                    },
                ))
            }
            _ => unreachable!("validated layer count"),
        }
    }

    pub fn embed(&self, x: &Mat) -> Result<Mat> {
        self.forward(x).map(|(y, _)| y)
    }

    /// Parameter gradients in [`Backbone::params`] order.
    pub fn backward(&self, cache: &ForwardCache, dy: &Mat) -> Result<Vec<Mat>> {
        match (self.layers.as_slice(), &cache.hidden) {
            ([l], None) => {
                let (_, dw, db) = l.backward(&cache.input, dy)?;
                Ok(vec![dw, db])
            }
            ([l1, l2], Some(h)) => {
                let (dh, dw2, db2) = l2.backward(h, dy)?;
                let mut da = dh;
                for (g, hv) in da.as_mut_slice().iter_mut().zip(h.as_slice()) {
                    *g *= 1.0 - hv * hv;
                }
                let (_, dw1, db1) = l1.backward(&cache.input, &da)?;
                Ok(vec![dw1, db1, dw2, db2])
            }
            _ => Err(Error::invalid("forward cache does not match the backbone")),
        }
    }

    pub fn params(&self) -> Vec<&Mat> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Mat> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}
