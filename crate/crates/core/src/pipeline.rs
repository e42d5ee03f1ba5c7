//! The two-stage metric: nullspace projection followed by the normalized
//! kernel maximum margin embedding, plus model persistence.
//!
//! # Model file
//!
//! A JSON object:
//!
//! ```text
//! {
//!   "format": "nk3ml-model",
//!   "version": 1,
//!   "library_version": "0.1.0",
//!   "fit_timestamp": null | "<seconds since the Unix epoch>",
//!   "input_dim": d,
//!   "class_count": c,
//!   "kernel": {"kind": "rbf", "width": s} | {"kind": "linear"},
//!   "reg": r,
//!   "weighting": "verbatim" | "prior",
//!   "nullspace": {"w_n": MATRIX, "train_mean": MATRIX},
//!   "kernel_stage": {"train_points": MATRIX, "coefficients": MATRIX, "eigenvalues": MATRIX}
//! }
//! ```
//!
//! where `MATRIX` is `{"rows": r, "cols": c, "data": base64}` and `data`
//! holds `r * c` little-endian f64 values in row-major order. Vectors are
//! stored as single-column matrices.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::LabeledDataset;
use crate::error::{Error, Result, Stage};
use crate::kernel::{Kernel, KernelSpec};
use crate::linalg::{Matrix, Vector};
use crate::maxmargin::{nkmmc_fit, KernelDiscriminant, NkmmcOptions, Weighting};
use crate::nfst::{nfst_fit, NullspaceProjection};

pub const MODEL_FORMAT: &str = "nk3ml-model";
pub const MODEL_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PipelineConfig {
    pub kernel: KernelSpec,
    pub nkmmc: NkmmcOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelMetadata {
    pub input_dim: usize,
    pub class_count: usize,
    pub reg: f64,
    pub weighting: Weighting,
    pub library_version: String,
    pub fit_timestamp: Option<String>,
}

/// A fitted two-stage metric.
#[derive(Debug, Clone, PartialEq)]
pub struct Nk3mlModel {
    pub nullspace: NullspaceProjection,
    pub kernel_stage: KernelDiscriminant,
    pub metadata: ModelMetadata,
}

impl Nk3mlModel {
    pub fn input_dim(&self) -> usize {
        self.nullspace.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.kernel_stage.output_dim()
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel_stage.kernel
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vector> {
        nk3ml_transform(self, x)
    }

    /// Embeds every row of `x`.
    pub fn transform_rows(&self, x: &Matrix) -> Result<Matrix> {
        let z = self.nullspace.project_rows(x)?;
        self.kernel_stage.project_rows(&z)
    }
}

/// Fits the nullspace projection, then the kernel stage on the projected
/// training points. An automatic kernel width is resolved here and frozen.
pub fn nk3ml_fit(train: &LabeledDataset, config: &PipelineConfig) -> Result<Nk3mlModel> {
    let nullspace = nfst_fit(train).map_err(|e| e.at_stage(Stage::Nfst))?;
    let z = nullspace.project_rows(train.features())?;
    let kernel = config
        .kernel
        .resolve(&z)
        .map_err(|e| e.at_stage(Stage::Kernel))?;
    let fixed = match kernel {
        Kernel::Linear => KernelSpec::linear(),
        Kernel::Rbf { width } => KernelSpec {
            kind: crate::kernel::KernelKind::Rbf,
            width: crate::kernel::KernelWidth::Fixed(width),
        },
    };
    let kernel_stage = nkmmc_fit(&z, train.labels(), &fixed, &config.nkmmc)
        .map_err(|e| e.at_stage(Stage::Nkmmc))?;
    Ok(Nk3mlModel {
        metadata: ModelMetadata {
            input_dim: train.dim(),
            class_count: train.class_count(),
            reg: config.nkmmc.reg,
            weighting: config.nkmmc.weighting,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            fit_timestamp: None,
        },
        nullspace,
        kernel_stage,
    })
}

/// Nullspace projection followed by the kernel expansion.
pub fn nk3ml_transform(model: &Nk3mlModel, x: &[f64]) -> Result<Vector> {
    let z = model.nullspace.project(x)?;
    model.kernel_stage.project(z.as_slice())
}

#[derive(Serialize, Deserialize)]
struct MatrixPayload {
    rows: usize,
    cols: usize,
    data: String,
}

impl MatrixPayload {
    fn encode(m: &Matrix) -> Self {
        let mut bytes = Vec::with_capacity(8 * m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                bytes.extend_from_slice(&m[(i, j)].to_le_bytes());
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: BASE64.encode(bytes),
        }
    }

    fn decode(&self, field: &str) -> Result<Matrix> {
        let bytes = BASE64
            .decode(&self.data)
            .map_err(|e| Error::model(field, format!("bad base64: {e}")))?;
        let expected = self
            .rows
            .checked_mul(self.cols)
            .and_then(|c| c.checked_mul(8))
            .ok_or_else(|| Error::model(field, "shape overflows"))?;
        if bytes.len() != expected {
            return Err(Error::model(
                field,
                format!(
                    "{}x{} needs {expected} bytes, payload has {}",
                    self.rows,
                    self.cols,
                    bytes.len()
                ),
            ));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::model(field, "non-finite entry"));
        }
        Ok(Matrix::from_row_slice(self.rows, self.cols, &values))
    }
}

#[derive(Serialize, Deserialize)]
struct NullspacePayload {
    w_n: MatrixPayload,
    train_mean: MatrixPayload,
}

#[derive(Serialize, Deserialize)]
struct KernelStagePayload {
    train_points: MatrixPayload,
    coefficients: MatrixPayload,
    eigenvalues: MatrixPayload,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u64,
    library_version: String,
    fit_timestamp: Option<String>,
    input_dim: usize,
    class_count: usize,
    kernel: Kernel,
    reg: f64,
    weighting: Weighting,
    nullspace: NullspacePayload,
    kernel_stage: KernelStagePayload,
}

fn vector_payload(v: &Vector) -> MatrixPayload {
    MatrixPayload::encode(&Matrix::from_column_slice(v.len(), 1, v.as_slice()))
}

fn decode_vector(p: &MatrixPayload, field: &str) -> Result<Vector> {
    let m = p.decode(field)?;
    if m.ncols() != 1 {
        return Err(Error::model(field, "expected a single column"));
    }
    Ok(m.column(0).into_owned())
}

/// Serializes the model to its JSON document.
pub fn model_to_json(model: &Nk3mlModel) -> String {
    let env = Envelope {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        library_version: model.metadata.library_version.clone(),
        fit_timestamp: model.metadata.fit_timestamp.clone(),
        input_dim: model.metadata.input_dim,
        class_count: model.metadata.class_count,
        kernel: model.kernel_stage.kernel,
        reg: model.metadata.reg,
        weighting: model.metadata.weighting,
        nullspace: NullspacePayload {
            w_n: MatrixPayload::encode(&model.nullspace.w_n),
            train_mean: vector_payload(&model.nullspace.train_mean),
        },
        kernel_stage: KernelStagePayload {
            train_points: MatrixPayload::encode(&model.kernel_stage.train_points),
            coefficients: MatrixPayload::encode(&model.kernel_stage.coefficients),
            eigenvalues: vector_payload(&model.kernel_stage.eigenvalues),
        },
    };
    serde_json::to_string_pretty(&env).expect("model envelope serializes")
}

pub fn model_from_json(text: &str) -> Result<Nk3mlModel> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| Error::model("<document>", e.to_string()))?;
    match value.get("format").and_then(Value::as_str) {
        Some(MODEL_FORMAT) => {}
        Some(other) => return Err(Error::model("format", format!("unknown format `{other}`"))),
        None => return Err(Error::model("format", "missing")),
    }
    match value.get("version").and_then(Value::as_u64) {
        Some(MODEL_VERSION) => {}
        Some(v) => {
            return Err(Error::model(
                "version",
                format!("unsupported version {v}, expected {MODEL_VERSION}"),
            ))
        }
        None => return Err(Error::model("version", "missing or not an integer")),
    }
    let env: Envelope = serde_json::from_value(value).map_err(|e| Error::model("<document>", e.to_string()))?;

    let w_n = env.nullspace.w_n.decode("nullspace.w_n")?;
    let train_mean = decode_vector(&env.nullspace.train_mean, "nullspace.train_mean")?;
    let train_points = env.kernel_stage.train_points.decode("kernel_stage.train_points")?;
    let coefficients = env.kernel_stage.coefficients.decode("kernel_stage.coefficients")?;
    let eigenvalues = decode_vector(&env.kernel_stage.eigenvalues, "kernel_stage.eigenvalues")?;

    let shape_err = |field: &str, msg: String| Err(Error::model(field, msg));
    if w_n.nrows() != env.input_dim || train_mean.len() != env.input_dim {
        return shape_err("nullspace.w_n", format!("row count must equal input_dim {}", env.input_dim));
    }
    if train_points.ncols() != w_n.ncols() {
        return shape_err(
            "kernel_stage.train_points",
            format!("column count must equal the {} nullspace directions", w_n.ncols()),
        );
    }
    if coefficients.nrows() != train_points.nrows() || coefficients.ncols() != eigenvalues.len() {
        return shape_err(
            "kernel_stage.coefficients",
            "shape must be (training points) x (eigenvalues)".into(),
        );
    }
    if let Kernel::Rbf { width } = env.kernel {
        if !(width > 0.0 && width.is_finite()) {
            return shape_err("kernel.width", format!("must be positive, got {width}"));
        }
    }

    Ok(Nk3mlModel {
        nullspace: NullspaceProjection {
            w_n,
            train_mean,
            class_count: env.class_count,
            input_dim: env.input_dim,
        },
        kernel_stage: KernelDiscriminant {
            train_points,
            coefficients,
            eigenvalues,
            kernel: env.kernel,
        },
        metadata: ModelMetadata {
            input_dim: env.input_dim,
            class_count: env.class_count,
            reg: env.reg,
            weighting: env.weighting,
            library_version: env.library_version,
            fit_timestamp: env.fit_timestamp,
        },
    })
}

pub fn save_model(model: &Nk3mlModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = model_to_json(model);
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Nk3mlModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}
