use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Update gate `z`, reset gate `r` and candidate `h`, each with an input
/// matrix `w_*: [in, units]`, a recurrent matrix `u_*: [units, units]` and a bias.
#[derive(Clone, Debug, PartialEq)]
pub struct GruWeights<T> {
    pub w_z: Tensor<T>,
    pub w_r: Tensor<T>,
    pub w_h: Tensor<T>,
    pub u_z: Tensor<T>,
    pub u_r: Tensor<T>,
    pub u_h: Tensor<T>,
    pub b_z: Tensor<T>,
    pub b_r: Tensor<T>,
    pub b_h: Tensor<T>,
}

/// Input, forget and output gates plus the cell candidate `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmWeights<T> {
    pub w_i: Tensor<T>,
    pub w_f: Tensor<T>,
    pub w_o: Tensor<T>,
    pub w_c: Tensor<T>,
    pub u_i: Tensor<T>,
    pub u_f: Tensor<T>,
    pub u_o: Tensor<T>,
    pub u_c: Tensor<T>,
    pub b_i: Tensor<T>,
    pub b_f: Tensor<T>,
    pub b_o: Tensor<T>,
    pub b_c: Tensor<T>,
}

/// Filter bank `[filters, kernel, channels]` and bias `[filters]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvWeights<T> {
    pub filters: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub embedding: Tensor<T>,
    pub gru_fwd: GruWeights<T>,
    pub gru_bwd: GruWeights<T>,
    pub lstm_fwd: LstmWeights<T>,
    pub lstm_bwd: LstmWeights<T>,
    pub convs: Vec<ConvWeights<T>>,
    pub dense_w: Tensor<T>,
    pub dense_b: Tensor<T>,
}

const GRU_NAMES: [&str; 9] = ["w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h"];
const LSTM_NAMES: [&str; 12] = [
    "w_i", "w_f", "w_o", "w_c", "u_i", "u_f", "u_o", "u_c", "b_i", "b_f", "b_o", "b_c",
];

impl<T: Real> GruWeights<T> {
    fn tensors(&self) -> [&Tensor<T>; 9] {
        [
            &self.w_z, &self.w_r, &self.w_h, &self.u_z, &self.u_r, &self.u_h, &self.b_z, &self.b_r, &self.b_h,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor<T>; 9] {
        let GruWeights {
            w_z,
            w_r,
            w_h,
            u_z,
            u_r,
            u_h,
            b_z,
            b_r,
            b_h,
        } = self;
        [w_z, w_r, w_h, u_z, u_r, u_h, b_z, b_r, b_h]
    }
}

impl<T: Real> LstmWeights<T> {
    fn tensors(&self) -> [&Tensor<T>; 12] {
        [
            &self.w_i, &self.w_f, &self.w_o, &self.w_c, &self.u_i, &self.u_f, &self.u_o, &self.u_c, &self.b_i,
            &self.b_f, &self.b_o, &self.b_c,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor<T>; 12] {
        let LstmWeights {
            w_i,
            w_f,
            w_o,
            w_c,
            u_i,
            u_f,
            u_o,
            u_c,
            b_i,
            b_f,
            b_o,
            b_c,
        } = self;
        [w_i, w_f, w_o, w_c, u_i, u_f, u_o, u_c, b_i, b_f, b_o, b_c]
    }
}

/// Shape of every parameter tensor, in checkpoint order, derived from `config` alone.
pub fn expected_shapes(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let mut out = vec![("embedding".to_string(), vec![config.vocab_size, config.embed_dim])];
    let gru_in = config.embed_dim;
    let gh = config.gru_units;
    for dir in ["fwd", "bwd"] {
        for name in GRU_NAMES {
            let shape = match &name[..1] {
                "w" => vec![gru_in, gh],
                "u" => vec![gh, gh],
                _ => vec![gh],
            };
            out.push((format!("gru.{dir}.{name}"), shape));
        }
    }
    let lstm_in = 2 * gh;
    let lh = config.lstm_units;
    for dir in ["fwd", "bwd"] {
        for name in LSTM_NAMES {
            let shape = match &name[..1] {
                "w" => vec![lstm_in, lh],
                "u" => vec![lh, lh],
                _ => vec![lh],
            };
            out.push((format!("lstm.{dir}.{name}"), shape));
        }
    }
    for (i, &k) in config.conv_kernel_widths.iter().enumerate() {
        out.push((format!("conv.{i}.filters"), vec![config.conv_filters, k, 2 * lh]));
        out.push((format!("conv.{i}.bias"), vec![config.conv_filters]));
    }
    out.push(("dense.w".to_string(), vec![config.feature_width(), config.num_labels]));
    out.push(("dense.b".to_string(), vec![config.num_labels]));
    out
}

impl<T: Real> ModelParams<T> {
    pub fn zeros(config: &ModelConfig) -> Self {
        let shapes = expected_shapes(config);
        let mut it = shapes.iter().map(|(_, s)| Tensor::zeros(s));
        let mut next = || it.next().expect("shape list matches layout");
        let embedding = next();
        let mut gru = || GruWeights {
            w_z: next(),
            w_r: next(),
            w_h: next(),
            u_z: next(),
            u_r: next(),
            u_h: next(),
            b_z: next(),
            b_r: next(),
            b_h: next(),
        };
        let gru_fwd = gru();
        let gru_bwd = gru();
        let mut lstm = || LstmWeights {
            w_i: next(),
            w_f: next(),
            w_o: next(),
            w_c: next(),
            u_i: next(),
            u_f: next(),
            u_o: next(),
            u_c: next(),
            b_i: next(),
            b_f: next(),
            b_o: next(),
            b_c: next(),
        };
        let lstm_fwd = lstm();
        let lstm_bwd = lstm();
        let convs = config
            .conv_kernel_widths
            .iter()
            .map(|_| ConvWeights {
                filters: next(),
                bias: next(),
            })
            .collect();
        ModelParams {
            embedding,
            gru_fwd,
            gru_bwd,
            lstm_fwd,
            lstm_bwd,
            convs,
            dense_w: next(),
            dense_b: next(),
        }
    }

    /// Fresh parameters around a prepared embedding matrix.
    ///
    /// Weight matrices are Glorot-uniform (recurrent ones included, no
    /// orthogonalization), conv filters use Keras-style fans `k*C` / `k*F`,
    /// biases start at zero except the LSTM forget gate at one.
    pub fn init(config: &ModelConfig, embedding: Tensor<T>, seed: u64) -> Result<Self> {
        config.validate()?;
        if embedding.shape() != [config.vocab_size, config.embed_dim] {
            return Err(Error::Shape {
                op: "init_embedding",
                lhs: embedding.shape().to_vec(),
                rhs: vec![config.vocab_size, config.embed_dim],
            });
        }
        let mut params = Self::zeros(config);
        params.embedding = embedding;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let names: Vec<String> = expected_shapes(config).into_iter().map(|(n, _)| n).collect();
        for (name, t) in names.iter().zip(params.tensors_mut()).skip(1) {
            let shape = t.shape().to_vec();
            let leaf = name.rsplit('.').next().unwrap_or_default();
            let limit = match (leaf, shape.as_slice()) {
                ("filters", &[f, k, c]) => glorot_limit(k * c, k * f),
                (_, &[fan_in, fan_out]) => glorot_limit(fan_in, fan_out),
                _ => {
                    if name == "lstm.fwd.b_f" || name == "lstm.bwd.b_f" {
                        t.data_mut().iter_mut().for_each(|v| *v = T::one());
                    }
                    continue;
                }
            };
            for v in t.data_mut() {
                *v = T::lit(rng.gen_range(-limit..=limit));
            }
        }
        Ok(params)
    }

    /// Every tensor in checkpoint order, paired with its name.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out: Vec<&Tensor<T>> = vec![&self.embedding];
        out.extend(self.gru_fwd.tensors());
        out.extend(self.gru_bwd.tensors());
        out.extend(self.lstm_fwd.tensors());
        out.extend(self.lstm_bwd.tensors());
        for c in &self.convs {
            out.push(&c.filters);
            out.push(&c.bias);
        }
        out.push(&self.dense_w);
        out.push(&self.dense_b);
        let names = self.layout_names();
        names.into_iter().zip(out).collect()
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let ModelParams {
            embedding,
            gru_fwd,
            gru_bwd,
            lstm_fwd,
            lstm_bwd,
            convs,
            dense_w,
            dense_b,
        } = self;
        let mut out: Vec<&mut Tensor<T>> = vec![embedding];
        out.extend(gru_fwd.tensors_mut());
        out.extend(gru_bwd.tensors_mut());
        out.extend(lstm_fwd.tensors_mut());
        out.extend(lstm_bwd.tensors_mut());
        for c in convs.iter_mut() {
            out.push(&mut c.filters);
            out.push(&mut c.bias);
        }
        out.push(dense_w);
        out.push(dense_b);
        out
    }

    /// Tensors updated by the optimizer; the embedding is left out when frozen.
    pub fn trainable_mut(&mut self, freeze_embeddings: bool) -> Vec<&mut Tensor<T>> {
        let skip = usize::from(freeze_embeddings);
        self.tensors_mut().into_iter().skip(skip).collect()
    }

    pub fn trainable(&self, freeze_embeddings: bool) -> Vec<&Tensor<T>> {
        let skip = usize::from(freeze_embeddings);
        self.tensors().into_iter().skip(skip).collect()
    }

    fn layout_names(&self) -> Vec<String> {
        let mut names = vec!["embedding".to_string()];
        for dir in ["fwd", "bwd"] {
            names.extend(GRU_NAMES.iter().map(|n| format!("gru.{dir}.{n}")));
        }
        for dir in ["fwd", "bwd"] {
            names.extend(LSTM_NAMES.iter().map(|n| format!("lstm.{dir}.{n}")));
        }
        for i in 0..self.convs.len() {
            names.push(format!("conv.{i}.filters"));
            names.push(format!("conv.{i}.bias"));
        }
        names.push("dense.w".to_string());
        names.push("dense.b".to_string());
        names
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Checks every tensor name and shape against [`expected_shapes`].
    pub fn audit(&self, config: &ModelConfig) -> Result<()> {
        let expected = expected_shapes(config);
        let actual = self.named_tensors();
        if expected.len() != actual.len() {
            return Err(Error::validation(format!(
                "parameter count mismatch: config implies {} tensors, found {}",
                expected.len(),
                actual.len()
            )));
        }
        for ((en, es), (an, at)) in expected.iter().zip(&actual) {
            if en != an || es.as_slice() != at.shape() {
                return Err(Error::Shape {
                    op: "shape_audit",
                    lhs: at.shape().to_vec(),
                    rhs: es.clone(),
                });
            }
        }
        Ok(())
    }

    /// Rebuilds parameters from tensors listed in checkpoint order.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let expected = expected_shapes(config);
        if expected.len() != tensors.len() {
            return Err(Error::validation(format!(
                "expected {} tensors, got {}",
                expected.len(),
                tensors.len()
            )));
        }
        let mut params = Self::zeros(config);
        for ((dst, (en, es)), (name, t)) in params.tensors_mut().into_iter().zip(&expected).zip(tensors) {
            if &name != en {
                return Err(Error::validation(format!("expected tensor {en:?}, found {name:?}")));
            }
            if t.shape() != es.as_slice() {
                return Err(Error::Shape {
                    op: "load_tensor",
                    lhs: t.shape().to_vec(),
                    rhs: es.clone(),
                });
            }
            *dst = t;
        }
        Ok(params)
    }
}

fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
