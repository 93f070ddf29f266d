//! JSON weight files: self-describing, row-major, shortest round-trip numbers.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ModelParams, GATE_ORDER, INPUT_CHANNELS};
use super::{Normalization, OdometryModel};
use crate::error::{Error, Result};
use crate::real::Real;

pub const WEIGHTS_FORMAT: &str = "bilstm-polar-odometry";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Tensor {
    name: String,
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NormalizationFile {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct WeightsFile {
    format: String,
    version: u32,
    window_len: usize,
    hidden_size: usize,
    input_channels: usize,
    gate_order: Vec<String>,
    epochs_trained: usize,
    normalization: NormalizationFile,
    tensors: Vec<Tensor>,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

fn to_f64<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64_lossless()).collect()
}

pub fn save_params<T: Real>(model: &OdometryModel<T>, path: &Path) -> Result<()> {
    let params = &model.params;
    let file = WeightsFile {
        format: WEIGHTS_FORMAT.into(),
        version: WEIGHTS_VERSION,
        window_len: model.window_len,
        hidden_size: params.hidden(),
        input_channels: INPUT_CHANNELS,
        gate_order: GATE_ORDER.iter().map(|s| s.to_string()).collect(),
        epochs_trained: model.epochs_trained,
        normalization: NormalizationFile {
            mean: to_f64(&model.normalization.mean),
            scale: to_f64(&model.normalization.scale),
        },
        tensors: params
            .tensor_specs()
            .into_iter()
            .map(|s| Tensor {
                data: to_f64(&params.as_slice()[s.range()]),
                shape: [s.rows, s.cols],
                name: s.name,
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).map_err(|e| Error::corrupt(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_params<T: Real>(path: &Path) -> Result<OdometryModel<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header: Header = serde_json::from_str(&text).map_err(|e| Error::corrupt(path, e))?;
    if header.format != WEIGHTS_FORMAT {
        return Err(Error::corrupt(path, format!("unknown format {:?}", header.format)));
    }
    if header.version != WEIGHTS_VERSION {
        return Err(Error::VersionMismatch {
            found: header.version,
            expected: WEIGHTS_VERSION,
        });
    }
    let file: WeightsFile = serde_json::from_str(&text).map_err(|e| Error::corrupt(path, e))?;
    let bad = |m: String| Error::corrupt(path, m);
    if file.input_channels != INPUT_CHANNELS || file.gate_order != GATE_ORDER {
        return Err(bad("unsupported input channels or gate order".into()));
    }
    if file.window_len < 2 {
        return Err(bad(format!("window length {} is too short", file.window_len)));
    }
    let mut params = ModelParams::<T>::zeros(file.hidden_size);
    let specs = params.tensor_specs();
    if specs.len() != file.tensors.len() {
        return Err(bad(format!(
            "expected {} tensors, found {}",
            specs.len(),
            file.tensors.len()
        )));
    }
    for (spec, tensor) in specs.iter().zip(&file.tensors) {
        if spec.name != tensor.name || tensor.shape != [spec.rows, spec.cols] || tensor.data.len() != spec.len() {
            return Err(bad(format!(
                "tensor {} does not match {} {:?}",
                tensor.name,
                spec.name,
                [spec.rows, spec.cols]
            )));
        }
        for (dst, &v) in params.as_mut_slice()[spec.range()].iter_mut().zip(&tensor.data) {
            *dst = T::lit(v);
        }
    }
    let channels = |v: &[f64]| -> Result<[T; INPUT_CHANNELS]> {
        let arr: [f64; INPUT_CHANNELS] = v
            .try_into()
            .map_err(|_| bad(format!("normalization needs {INPUT_CHANNELS} values")))?;
        Ok(arr.map(T::lit))
    };
    let normalization = Normalization {
        mean: channels(&file.normalization.mean)?,
        scale: channels(&file.normalization.scale)?,
    };
    if !normalization.is_valid() || !params.is_finite() {
        return Err(bad("non-finite weights or invalid normalization".into()));
    }
    Ok(OdometryModel {
        params,
        normalization,
        window_len: file.window_len,
        epochs_trained: file.epochs_trained,
    })
}
