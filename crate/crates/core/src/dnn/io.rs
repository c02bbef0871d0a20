use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_dims, DnnError, GroupShape, Layer, Network};

pub const MODEL_VERSION: &str = "1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: String,
    group: Option<GroupShape>,
    dims: Vec<usize>,
    activation: String,
    out: String,
    threshold: f64,
    col_scale: Vec<f64>,
    layers: Vec<Layer>,
    seed: u64,
    train_meta: BTreeMap<String, serde_json::Value>,
}

impl Network {
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            version: MODEL_VERSION.into(),
            group: self.group,
            dims: self.dims.clone(),
            activation: "relu".into(),
            out: "sigmoid".into(),
            threshold: self.threshold,
            col_scale: self.col_scale.clone(),
            layers: self.layers.clone(),
            seed: self.seed,
            train_meta: self.train_meta.clone(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Network, DnnError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| DnnError::Format(e.to_string()))?;
        match value.get("version") {
            Some(serde_json::Value::String(v)) if v == MODEL_VERSION => {}
            Some(v) => {
                let v = v.as_str().map_or_else(|| v.to_string(), str::to_string);
                return Err(DnnError::UnsupportedVersion(v));
            }
            None => return Err(DnnError::Format("missing version".into())),
        }
        let f: ModelFile =
            serde_json::from_value(value).map_err(|e| DnnError::Format(e.to_string()))?;
        let bad = |msg: String| Err(DnnError::Format(msg));
        check_dims(&f.dims).map_err(|e| DnnError::Format(e.to_string()))?;
        if f.activation != "relu" || f.out != "sigmoid" {
            return bad(format!("unsupported activations {}/{}", f.activation, f.out));
        }
        if !(f.threshold > 0.0 && f.threshold < 1.0) {
            return bad(format!("threshold {} outside (0, 1)", f.threshold));
        }
        if f.col_scale.len() != f.dims[0] || f.col_scale.iter().any(|s| !s.is_finite() || *s < 1.0) {
            return bad("col_scale must hold one factor >= 1 per input".into());
        }
        if f.layers.len() != f.dims.len() - 1 {
            return bad("layer count does not match dims".into());
        }
        for (l, (layer, io)) in f.layers.iter().zip(f.dims.windows(2)).enumerate() {
            if layer.b.len() != io[1]
                || layer.w.len() != io[1]
                || layer.w.iter().any(|r| r.len() != io[0])
            {
                return bad(format!("layer {l} does not have shape {}x{}", io[1], io[0]));
            }
        }
        if let Some(g) = f.group {
            if g.rows * g.cols != f.dims[0] {
                return bad(format!("group {}x{} does not match {} inputs", g.rows, g.cols, f.dims[0]));
            }
        }
        Ok(Network {
            dims: f.dims,
            layers: f.layers,
            col_scale: f.col_scale,
            threshold: f.threshold,
            group: f.group,
            seed: f.seed,
            train_meta: f.train_meta,
        })
    }
}

pub fn save_network(net: &Network, path: &Path) -> Result<(), DnnError> {
    let mut text = net.to_json();
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_network(path: &Path) -> Result<Network, DnnError> {
    Network::from_json(&std::fs::read_to_string(path)?)
}
