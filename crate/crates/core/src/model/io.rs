//! Model artifacts: `model.json` (config and parameter shapes) next to
//! `weights.bin` (every parameter as little-endian `f64`, in store order).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{JointModel, Matrix, ModelConfig, ModelError};
use crate::scalar::Scalar;

pub const MODEL_FILE: &str = "model.json";
pub const WEIGHTS_FILE: &str = "weights.bin";

#[derive(Serialize, Deserialize)]
struct ParamShape {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    params: Vec<ParamShape>,
}

fn artifact<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> ModelError + '_ {
    move |e| ModelError::Artifact(format!("{}: {e}", path.display()))
}

impl<T: Scalar> JointModel<T> {
    /// Writes `model.json` and `weights.bin` into `dir`, creating it.
    pub fn save(&self, dir: &Path) -> Result<(), ModelError> {
        fs::create_dir_all(dir).map_err(artifact(dir))?;
        let header = Header {
            config: self.config.clone(),
            params: self
                .params
                .iter()
                .map(|(_, p)| ParamShape {
                    name: p.name.clone(),
                    rows: p.value.rows(),
                    cols: p.value.cols(),
                })
                .collect(),
        };
        let json_path = dir.join(MODEL_FILE);
        let json = serde_json::to_string_pretty(&header).map_err(artifact(&json_path))?;
        fs::write(&json_path, json).map_err(artifact(&json_path))?;

        let bin_path = dir.join(WEIGHTS_FILE);
        let file = fs::File::create(&bin_path).map_err(artifact(&bin_path))?;
        let mut out = BufWriter::new(file);
        for (_, p) in self.params.iter() {
            for v in p.value.data() {
                out.write_all(&v.as_f64().to_le_bytes()).map_err(artifact(&bin_path))?;
            }
        }
        out.flush().map_err(artifact(&bin_path))
    }

    /// Rebuilds the architecture from `model.json` and fills it from
    /// `weights.bin`; names and shapes must match exactly.
    pub fn load(dir: &Path) -> Result<Self, ModelError> {
        let json_path = dir.join(MODEL_FILE);
        let text = fs::read_to_string(&json_path).map_err(artifact(&json_path))?;
        let header: Header = serde_json::from_str(&text).map_err(artifact(&json_path))?;
        let mut model = JointModel::new(header.config, 0)?;
        if header.params.len() != model.params.len() {
            return Err(ModelError::Artifact(format!(
                "{} parameters recorded, architecture has {}",
                header.params.len(),
                model.params.len()
            )));
        }

        let bin_path = dir.join(WEIGHTS_FILE);
        let bytes = fs::read(&bin_path).map_err(artifact(&bin_path))?;
        let expected: usize = header.params.iter().map(|p| p.rows * p.cols * 8).sum();
        if bytes.len() != expected {
            return Err(ModelError::Artifact(format!(
                "{}: {} bytes, expected {expected}",
                bin_path.display(),
                bytes.len()
            )));
        }
        let mut offset = 0;
        for shape in &header.params {
            let id = model
                .params
                .id(&shape.name)
                .ok_or_else(|| ModelError::Artifact(format!("unknown parameter {}", shape.name)))?;
            if model.params.value(id).shape() != (shape.rows, shape.cols) {
                return Err(ModelError::Artifact(format!("shape mismatch for {}", shape.name)));
            }
            let n = shape.rows * shape.cols;
            let data = bytes[offset..offset + 8 * n]
                .chunks_exact(8)
                .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
                .collect();
            offset += 8 * n;
            *model.params.value_mut(id) = Matrix::from_vec(shape.rows, shape.cols, data);
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EncoderConfig, ModelVariant};

    #[test]
    fn save_load_preserves_logits() {
        let dir = tempfile::tempdir().unwrap();
        let m = JointModel::<f64>::new(ModelConfig::new(EncoderConfig::tiny(40), ModelVariant::Joint1), 9).unwrap();
        m.save(dir.path()).unwrap();
        let back = JointModel::<f64>::load(dir.path()).unwrap();
        assert_eq!(back.config(), m.config());
        assert_eq!(back.logits(&[2, 8, 9, 3]).unwrap(), m.logits(&[2, 8, 9, 3]).unwrap());
    }

    #[test]
    fn truncated_weights_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = JointModel::<f32>::new(ModelConfig::new(EncoderConfig::tiny(40), ModelVariant::Joint2), 1).unwrap();
        m.save(dir.path()).unwrap();
        let path = dir.path().join(WEIGHTS_FILE);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(JointModel::<f32>::load(dir.path()), Err(ModelError::Artifact(_))));
    }
}
