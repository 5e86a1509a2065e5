use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::CurvePoint;
use crate::tensor::{read_tensor_stream, write_tensor_stream, LayerParams, ModelParams, Tensor};
use crate::{Error, Result};

pub const CHECKPOINT_TENSORS: &str = "params.bin";
pub const CHECKPOINT_MANIFEST: &str = "manifest.json";

/// Writes `step,train_loss,eval_loss,task_loss,distill_loss`; evaluation
/// cells are empty on steps without an evaluation.
pub fn write_loss_csv(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(crate::exec::csv_error)?;
    for p in curve {
        w.serialize(p).map_err(crate::exec::csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    /// Layer names, in node order; parameterless layers have no tensors.
    pub layers: Vec<CheckpointLayer>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointLayer {
    pub name: String,
    pub weight_shape: Option<Vec<usize>>,
    pub bias_len: Option<usize>,
}

/// Saves `params` as `params.bin` (weight then bias of each parameterised
/// layer) plus `manifest.json` in `dir`.
pub fn save_checkpoint(dir: &Path, names: &[String], params: &ModelParams, metadata: serde_json::Value) -> Result<()> {
    if names.len() != params.layers.len() {
        return Err(Error::shape("one name per layer is required"));
    }
    fs::create_dir_all(dir)?;
    let layers = names
        .iter()
        .zip(&params.layers)
        .map(|(n, p)| CheckpointLayer {
            name: n.clone(),
            weight_shape: p.as_ref().map(|p| p.weight.shape().to_vec()),
            bias_len: p.as_ref().map(|p| p.bias.len()),
        })
        .collect();
    let manifest = CheckpointManifest {
        format: "pipevid-checkpoint-1".into(),
        layers,
        metadata,
    };
    let tensors: Vec<Tensor> = params.tensors().cloned().collect();
    let file = fs::File::create(dir.join(CHECKPOINT_TENSORS))?;
    write_tensor_stream(std::io::BufWriter::new(file), &tensors)?;
    fs::write(dir.join(CHECKPOINT_MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(CheckpointManifest, ModelParams)> {
    let manifest: CheckpointManifest = serde_json::from_str(&fs::read_to_string(dir.join(CHECKPOINT_MANIFEST))?)?;
    let file = fs::File::open(dir.join(CHECKPOINT_TENSORS))?;
    let mut tensors = read_tensor_stream(std::io::BufReader::new(file))?.into_iter();
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for l in &manifest.layers {
        match (&l.weight_shape, l.bias_len) {
            (Some(ws), Some(bl)) => {
                let (Some(weight), Some(bias)) = (tensors.next(), tensors.next()) else {
                    return Err(Error::shape(format!("checkpoint ends before layer '{}'", l.name)));
                };
                if weight.shape() != ws.as_slice() || bias.len() != bl {
                    return Err(Error::shape(format!("layer '{}' does not match its manifest entry", l.name)));
                }
                layers.push(Some(LayerParams { weight, bias }));
            }
            (None, None) => layers.push(None),
            _ => return Err(Error::shape(format!("layer '{}' lists only a weight or a bias", l.name))),
        }
    }
    if tensors.next().is_some() {
        return Err(Error::shape("checkpoint holds more tensors than its manifest lists"));
    }
    Ok((manifest, ModelParams { layers }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ChainBuilder;

    #[test]
    fn checkpoint_round_trip() {
        let arch = ChainBuilder::new(3).build();
        let topo = arch.resolve().unwrap();
        let params = ModelParams::init(&topo.ops(), 9);
        let names: Vec<String> = topo.nodes.iter().map(|n| n.name.clone()).collect();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &names, &params, serde_json::json!({"seed": 9})).unwrap();
        let (manifest, back) = load_checkpoint(dir.path()).unwrap();
        assert!(back.bitwise_eq(&params));
        assert_eq!(manifest.metadata["seed"], 9);
    }

    #[test]
    fn loss_csv_header_and_blank_eval() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        let curve = [
            CurvePoint { step: 1, train_loss: 0.5, eval_loss: None, task_loss: 0.5, distill_loss: 0.0 },
            CurvePoint { step: 2, train_loss: 0.25, eval_loss: Some(0.3), task_loss: 0.25, distill_loss: 0.0 },
        ];
        write_loss_csv(&path, &curve).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,train_loss,eval_loss,task_loss,distill_loss");
        assert_eq!(lines[1], "1,0.5,,0.5,0.0");
        assert_eq!(lines[2], "2,0.25,0.3,0.25,0.0");
    }
}
