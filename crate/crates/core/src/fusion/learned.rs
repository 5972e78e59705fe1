//! Shared plumbing of the trained fusion models: input standardisation and
//! the checkpoint format (JSON topology plus AVPF parameters).

use std::fs;
use std::path::{Path, PathBuf};

use avfusion_nn::{LayerSpec, Network};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::avpf;
use crate::error::{Error, Result};
use crate::types::Matrix;

/// Per-column affine map to zero mean and unit variance, fitted on training
/// data. Constant columns keep unit scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn fit<'a>(data: impl IntoIterator<Item = &'a Matrix>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut n = 0usize;
        for m in data {
            if sum.is_empty() {
                sum = vec![0.0; m.cols()];
                sq = vec![0.0; m.cols()];
            } else if m.cols() != sum.len() {
                return Err(Error::Shape(format!("{} columns, expected {}", m.cols(), sum.len())));
            }
            for row in m.iter_rows() {
                for (c, v) in row.iter().enumerate() {
                    sum[c] += v;
                    sq[c] += v * v;
                }
            }
            n += m.rows();
        }
        if n == 0 {
            return Err(Error::InvalidInput("cannot standardise an empty dataset".into()));
        }
        let nf = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let scale = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let sd = (q / nf - m * m).max(0.0).sqrt();
                if sd > 1e-8 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, m: &Matrix) -> Result<Matrix> {
        if m.cols() != self.dim() {
            return Err(Error::Shape(format!(
                "{} columns, standardiser expects {}",
                m.cols(),
                self.dim()
            )));
        }
        Ok(Matrix::from_fn(m.rows(), m.cols(), |t, c| {
            (m.get(t, c) - self.mean[c]) / self.scale[c]
        }))
    }
}

/// Rounds every parameter to single precision so an in-memory model behaves
/// exactly like one reloaded from its AVPF checkpoint.
pub fn quantize_parameters(net: &mut Network) {
    for p in net.params_mut() {
        p.value.iter_mut().for_each(|v| *v = *v as f32 as f64);
    }
}

/// Which trained model a checkpoint holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "dsw-mse")]
    DswMse,
    #[serde(rename = "dsw-ce")]
    DswCe,
    #[serde(rename = "dfn-lstm")]
    DfnLstm,
    #[serde(rename = "dfn-blstm")]
    DfnBlstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::DswMse,
        ModelKind::DswCe,
        ModelKind::DfnLstm,
        ModelKind::DfnBlstm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::DswMse => "dsw-mse",
            ModelKind::DswCe => "dsw-ce",
            ModelKind::DfnLstm => "dfn-lstm",
            ModelKind::DfnBlstm => "dfn-blstm",
        }
    }
}

pub const CHECKPOINT_FORMAT: &str = "avfusion-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// JSON side of a checkpoint. Parameters live in `params`, an AVPF file next
/// to the JSON holding every tensor flattened into one column, in network
/// parameter order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub model: ModelKind,
    pub input_dim: usize,
    pub num_states: usize,
    pub reliability_dim: usize,
    pub layers: Vec<LayerSpec>,
    pub param_shapes: Vec<(usize, usize)>,
    pub standardizer: Standardizer,
    pub params: String,
}

/// A trained network with its input standardisation.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: ModelKind,
    pub num_states: usize,
    pub net: Network,
    pub standardizer: Standardizer,
}

impl Checkpoint {
    pub fn json_path(dir: &Path, model: ModelKind) -> PathBuf {
        dir.join(format!("{}.json", model.name()))
    }

    /// Writes `<model>.json` and `<model>.params.avpf` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let params_name = format!("{}.params.avpf", self.model.name());
        let values: Vec<f64> = self.net.params().iter().flat_map(|p| p.value.iter().copied()).collect();
        let n = values.len();
        avpf::write(dir.join(&params_name), &Matrix::from_vec(n, 1, values)?)?;
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: self.model,
            input_dim: self.net.input_dim(),
            num_states: self.num_states,
            reliability_dim: self.standardizer.dim(),
            layers: self.net.specs().to_vec(),
            param_shapes: self.net.params().iter().map(|p| p.shape()).collect(),
            standardizer: self.standardizer.clone(),
            params: params_name,
        };
        let path = Self::json_path(dir, self.model);
        let text = serde_json::to_string_pretty(&header).map_err(|e| Error::Json {
            path: path.clone(),
            source: e,
        })?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let header = CheckpointHeader::from_json(&text).map_err(|e| match e {
            Error::Json { source, .. } => Error::Json {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let flat = avpf::read(dir.join(&header.params))?;
        Self::from_parts(header, &flat)
    }

    /// Rebuilds a checkpoint from its header and flattened parameter column.
    /// The parameter count is checked before anything is allocated, so a
    /// hostile header cannot request more memory than the file holds.
    pub fn from_parts(header: CheckpointHeader, flat: &Matrix) -> Result<Self> {
        let needed = Network::parameter_count(header.input_dim, &header.layers)
            .ok_or_else(|| Error::Shape("checkpoint topology overflows".into()))?;
        if flat.cols() != 1 || flat.rows() != needed {
            return Err(Error::Shape(format!(
                "parameter file holds {:?}, topology needs {needed}x1",
                flat.shape()
            )));
        }
        let st = &header.standardizer;
        if st.mean.len() != st.scale.len() || st.dim() != header.reliability_dim {
            return Err(Error::Shape(format!(
                "standardiser covers {} columns, header says {}",
                header.standardizer.dim(),
                header.reliability_dim
            )));
        }
        let mut net = Network::new(header.input_dim, &header.layers, &mut ChaCha8Rng::seed_from_u64(0))?;
        let shapes: Vec<(usize, usize)> = net.params().iter().map(|p| p.shape()).collect();
        if shapes != header.param_shapes {
            return Err(Error::Shape("parameter shapes do not match the topology".into()));
        }
        let mut values = Vec::with_capacity(shapes.len());
        let mut offset = 0;
        for (r, c) in shapes {
            values.push(flat.as_slice()[offset..offset + r * c].to_vec());
            offset += r * c;
        }
        net.load_parameter_values(&values)?;
        Ok(Self {
            model: header.model,
            num_states: header.num_states,
            net,
            standardizer: header.standardizer,
        })
    }
}

impl CheckpointHeader {
    /// Parses the JSON side of a checkpoint and checks its format tag.
    pub fn from_json(text: &str) -> Result<Self> {
        let header: CheckpointHeader = serde_json::from_str(text).map_err(|e| Error::Json {
            path: PathBuf::from("<checkpoint>"),
            source: e,
        })?;
        if header.format != CHECKPOINT_FORMAT || header.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidInput(format!(
                "not a version {CHECKPOINT_VERSION} `{CHECKPOINT_FORMAT}` checkpoint"
            )));
        }
        Ok(header)
    }
}
