use std::collections::{HashMap, HashSet};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::tensor::ops::{output_extent, Nonlinearity, PoolKind};
use crate::tensor::Op;
use crate::{Error, Result};

/// Name that refers to the raw input frames in `inputs` lists.
pub const INPUT: &str = "input";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    Maxpool,
    Avgpool,
    Concat,
    Upsample,
    Dense,
    Nonlinearity,
}

impl LayerKind {
    pub fn is_pool(self) -> bool {
        matches!(self, LayerKind::Maxpool | LayerKind::Avgpool)
    }

    fn has_temporal_kernel(self) -> bool {
        matches!(
            self,
            LayerKind::Conv | LayerKind::Maxpool | LayerKind::Avgpool | LayerKind::Dense
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    /// `(t, h, w)`.
    pub kernel: [usize; 3],
    /// `(t, h, w)`. The temporal component is realised by clock rates.
    pub stride: [usize; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_channels: Option<usize>,
    #[serde(default)]
    pub block: String,
    /// Partition granule (miniblock, inception block). Consecutive layers
    /// with equal labels, or consecutive unlabelled layers, form one unit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch: Option<String>,
    /// Producer layer names; defaults to the previous layer (or the input
    /// frames for the first layer).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inputs: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<Nonlinearity>,
    /// Target `(h, w)` of an upsample layer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<[usize; 2]>,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind, kernel: [usize; 3], stride: [usize; 3]) -> Self {
        LayerSpec {
            name: name.into(),
            kind,
            kernel,
            stride,
            out_channels: None,
            block: String::new(),
            unit: None,
            branch: None,
            inputs: None,
            activation: None,
            resolution: None,
        }
    }

    /// Number of consecutive producer outputs one instance consumes.
    pub fn temporal_extent(&self) -> usize {
        if self.kind.has_temporal_kernel() {
            self.kernel[0]
        } else {
            1
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Per-frame spatial prediction (heatmaps) at a fixed resolution.
    Dense,
    /// Global average pooling followed by a linear classifier.
    Classifier,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadSpec {
    pub kind: HeadKind,
    pub inputs: Vec<String>,
    pub kernel: [usize; 3],
    pub out_channels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<[usize; 2]>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackSpec {
    /// Layer that receives the previous frame's head output.
    pub target: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub name: String,
    /// `(time, height, width, channels)`.
    pub input_shape: [usize; 4],
    pub layers: Vec<LayerSpec>,
    #[serde(default)]
    pub skip_edges: Vec<(String, String)>,
    pub head: HeadSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<FeedbackSpec>,
}

/// Where a node reads one of its inputs from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Source {
    Frames,
    Layer(usize),
    /// The head output of the previous frame.
    Feedback,
}

/// A layer or the head with every name and shape resolved.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedNode {
    pub name: String,
    /// Main inputs, then skip edges, then feedback.
    pub sources: Vec<Source>,
    pub extent: usize,
    pub op: Op,
    /// Spatial size every source is resized to before concatenation.
    pub resize_to: Option<(usize, usize)>,
    pub in_channels: usize,
    /// `[C, H, W]` of one output frame.
    pub out_shape: [usize; 3],
    pub block: String,
    pub unit: Option<String>,
    pub kind: Option<LayerKind>,
}

/// A maximal run of layers sharing a unit label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Unit {
    pub label: Option<String>,
    pub layers: Range<usize>,
}

/// Validated, shape-propagated view of an [`ArchitectureSpec`].
///
/// Nodes are the layers in order followed by the head.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    pub nodes: Vec<ResolvedNode>,
    /// `[C, H, W]` of one input frame.
    pub frame_shape: [usize; 3],
    pub units: Vec<Unit>,
}

impl Topology {
    pub fn num_layers(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn head(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Shape of whatever `source` yields for one frame.
    pub fn source_shape(&self, source: Source) -> [usize; 3] {
        match source {
            Source::Frames => self.frame_shape,
            Source::Layer(i) => self.nodes[i].out_shape,
            Source::Feedback => self.nodes[self.head()].out_shape,
        }
    }

    pub fn ops(&self) -> Vec<Op> {
        self.nodes.iter().map(|n| n.op.clone()).collect()
    }

    /// Labelled units only (miniblocks, inception blocks).
    pub fn labelled_units(&self) -> impl Iterator<Item = &Unit> {
        self.units.iter().filter(|u| u.label.is_some())
    }

    /// Unit index of every layer.
    pub fn unit_of_layer(&self) -> Vec<usize> {
        let mut out = vec![0; self.num_layers()];
        for (u, unit) in self.units.iter().enumerate() {
            for l in unit.layers.clone() {
                out[l] = u;
            }
        }
        out
    }
}

impl ArchitectureSpec {
    pub fn frame_count(&self) -> usize {
        self.input_shape[0]
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    /// Block labels in chain order, one entry per contiguous block.
    pub fn blocks(&self) -> Vec<(String, Range<usize>)> {
        let mut out: Vec<(String, Range<usize>)> = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            match out.last_mut() {
                Some((b, r)) if *b == l.block => r.end = i + 1,
                _ => out.push((l.block.clone(), i..i + 1)),
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.resolve().map(|_| ())
    }

    /// Checks every structural invariant and propagates shapes.
    pub fn resolve(&self) -> Result<Topology> {
        let [_, h, w, c] = self.input_shape;
        if self.input_shape.contains(&0) {
            return Err(Error::validation(format!(
                "input_shape {:?} has a zero extent",
                self.input_shape
            )));
        }
        if self.layers.is_empty() {
            return Err(Error::validation("architecture has no layers"));
        }
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (i, l) in self.layers.iter().enumerate() {
            if l.name == INPUT {
                return Err(Error::validation(format!("layer name '{INPUT}' is reserved")));
            }
            if index.insert(l.name.as_str(), i).is_some() {
                return Err(Error::validation(format!("duplicate layer name '{}'", l.name)));
            }
            if l.kernel.contains(&0) || l.stride.contains(&0) {
                return Err(Error::validation(format!(
                    "layer '{}': kernel {:?} and stride {:?} must be positive",
                    l.name, l.kernel, l.stride
                )));
            }
            if matches!(l.out_channels, Some(0)) {
                return Err(Error::validation(format!("layer '{}' has zero channels", l.name)));
            }
        }
        check_contiguous(
            self.layers
                .iter()
                .map(|l| (!l.block.is_empty()).then_some(l.block.as_str())),
            "block",
        )?;
        check_contiguous(self.layers.iter().map(|l| l.unit.as_deref()), "unit")?;

        let lookup = |name: &str, consumer: usize, what: &str| -> Result<Source> {
            if name == INPUT {
                return Ok(Source::Frames);
            }
            match index.get(name) {
                Some(&p) if p < consumer => Ok(Source::Layer(p)),
                Some(_) => Err(Error::validation(format!(
                    "{what} '{name}' does not precede its consumer"
                ))),
                None => Err(Error::validation(format!("{what} references unknown layer '{name}'"))),
            }
        };

        let n = self.layers.len();
        let mut sources: Vec<Vec<Source>> = Vec::with_capacity(n + 1);
        for (i, l) in self.layers.iter().enumerate() {
            let s = match &l.inputs {
                Some(names) if names.is_empty() => {
                    return Err(Error::validation(format!("layer '{}' has an empty input list", l.name)))
                }
                Some(names) => names
                    .iter()
                    .map(|nm| lookup(nm, i, "input"))
                    .collect::<Result<Vec<_>>>()?,
                None if i == 0 => vec![Source::Frames],
                None => vec![Source::Layer(i - 1)],
            };
            sources.push(s);
        }
        for (from, to) in &self.skip_edges {
            let t = *index
                .get(to.as_str())
                .ok_or_else(|| Error::validation(format!("skip edge references unknown layer '{to}'")))?;
            let f = lookup(from, t, "skip edge source")?;
            if sources[t].contains(&f) {
                return Err(Error::validation(format!("skip edge {from} -> {to} duplicates an input")));
            }
            sources[t].push(f);
        }
        if self.head.inputs.is_empty() {
            return Err(Error::validation("head has no inputs"));
        }
        sources.push(
            self.head
                .inputs
                .iter()
                .map(|nm| lookup(nm, n, "head input"))
                .collect::<Result<_>>()?,
        );
        let feedback_target = match &self.feedback {
            Some(fb) => {
                if self.head.kind != HeadKind::Dense {
                    return Err(Error::validation("feedback requires a dense prediction head"));
                }
                let t = *index.get(fb.target.as_str()).ok_or_else(|| {
                    Error::validation(format!("feedback target '{}' does not exist", fb.target))
                })?;
                sources[t].push(Source::Feedback);
                Some(t)
            }
            None => None,
        };

        // Every layer must feed the head.
        let mut live = vec![false; n + 1];
        live[n] = true;
        for i in (0..=n).rev() {
            if live[i] {
                for s in &sources[i] {
                    if let Source::Layer(p) = *s {
                        live[p] = true;
                    }
                }
            }
        }
        if let Some(dead) = (0..n).find(|&i| !live[i]) {
            return Err(Error::validation(format!(
                "layer '{}' does not reach the head",
                self.layers[dead].name
            )));
        }

        let frame_shape = [c, h, w];
        let mut nodes: Vec<ResolvedNode> = Vec::with_capacity(n + 1);
        let head_shape = match self.head.kind {
            HeadKind::Dense => {
                let [rh, rw] = self.head.resolution.ok_or_else(|| {
                    Error::validation("dense head needs a resolution")
                })?;
                [self.head.out_channels, rh, rw]
            }
            HeadKind::Classifier => [self.head.out_channels, 1, 1],
        };
        if self.head.out_channels == 0 || self.head.kernel.contains(&0) || head_shape.contains(&0) {
            return Err(Error::validation("head has a zero channel count or extent"));
        }
        let shape_of = |nodes: &[ResolvedNode], s: Source| match s {
            Source::Frames => frame_shape,
            Source::Layer(p) => nodes[p].out_shape,
            Source::Feedback => head_shape,
        };
        for (i, l) in self.layers.iter().enumerate() {
            let srcs = &sources[i];
            let regular: Vec<[usize; 3]> = srcs
                .iter()
                .filter(|s| **s != Source::Feedback)
                .map(|&s| shape_of(&nodes, s))
                .collect();
            let (ih, iw) = (regular[0][1], regular[0][2]);
            if let Some(bad) = regular.iter().find(|s| (s[1], s[2]) != (ih, iw)) {
                return Err(Error::validation(format!(
                    "layer '{}': inputs have different spatial sizes {:?} and {:?}",
                    l.name, regular[0], bad
                )));
            }
            let in_channels: usize = srcs.iter().map(|&s| shape_of(&nodes, s)[0]).sum();
            let resize_to = (feedback_target == Some(i)).then_some((ih, iw));
            let spatial = (l.kernel[1], l.kernel[2]);
            let stride = (l.stride[1], l.stride[2]);
            let (op, out_shape) = match l.kind {
                LayerKind::Conv => {
                    let oc = required_channels(l)?;
                    (
                        Op::Conv {
                            in_channels,
                            out_channels: oc,
                            extent: l.kernel[0],
                            kernel: spatial,
                            stride,
                            activation: l.activation,
                        },
                        [oc, output_extent(ih, stride.0), output_extent(iw, stride.1)],
                    )
                }
                LayerKind::Maxpool | LayerKind::Avgpool => (
                    Op::Pool {
                        kind: if l.kind == LayerKind::Maxpool {
                            PoolKind::Max
                        } else {
                            PoolKind::Avg
                        },
                        kernel: spatial,
                        stride,
                    },
                    [in_channels, output_extent(ih, stride.0), output_extent(iw, stride.1)],
                ),
                LayerKind::Concat => (Op::Concat, [in_channels, ih, iw]),
                LayerKind::Upsample => {
                    let [rh, rw] = l.resolution.ok_or_else(|| {
                        Error::validation(format!("upsample layer '{}' needs a resolution", l.name))
                    })?;
                    if rh == 0 || rw == 0 {
                        return Err(Error::validation(format!("layer '{}' has a zero resolution", l.name)));
                    }
                    (Op::Upsample { size: (rh, rw) }, [in_channels, rh, rw])
                }
                LayerKind::Dense => {
                    let oc = required_channels(l)?;
                    (
                        Op::Linear {
                            in_features: in_channels * ih * iw * l.kernel[0],
                            out_features: oc,
                            activation: l.activation,
                        },
                        [oc, 1, 1],
                    )
                }
                LayerKind::Nonlinearity => (
                    Op::Activation(l.activation.unwrap_or(Nonlinearity::Relu)),
                    [in_channels, ih, iw],
                ),
            };
            nodes.push(ResolvedNode {
                name: l.name.clone(),
                sources: srcs.clone(),
                extent: l.temporal_extent(),
                op,
                resize_to,
                in_channels,
                out_shape,
                block: l.block.clone(),
                unit: l.unit.clone(),
                kind: Some(l.kind),
            });
        }

        let head_sources = &sources[n];
        let in_channels: usize = head_sources.iter().map(|&s| shape_of(&nodes, s)[0]).sum();
        let (op, resize_to, extent) = match self.head.kind {
            HeadKind::Dense => (
                Op::Conv {
                    in_channels,
                    out_channels: self.head.out_channels,
                    extent: self.head.kernel[0],
                    kernel: (self.head.kernel[1], self.head.kernel[2]),
                    stride: (1, 1),
                    activation: None,
                },
                Some((head_shape[1], head_shape[2])),
                self.head.kernel[0],
            ),
            HeadKind::Classifier => {
                let first = shape_of(&nodes, head_sources[0]);
                if let Some(bad) = head_sources
                    .iter()
                    .map(|&s| shape_of(&nodes, s))
                    .find(|s| (s[1], s[2]) != (first[1], first[2]))
                {
                    return Err(Error::validation(format!(
                        "classifier inputs have different spatial sizes {first:?} and {bad:?}"
                    )));
                }
                (
                    Op::Classifier {
                        in_channels,
                        classes: self.head.out_channels,
                    },
                    None,
                    1,
                )
            }
        };
        nodes.push(ResolvedNode {
            name: "head".to_string(),
            sources: head_sources.clone(),
            extent,
            op,
            resize_to,
            in_channels,
            out_shape: head_shape,
            block: "Head".to_string(),
            unit: None,
            kind: None,
        });

        let mut units: Vec<Unit> = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            match units.last_mut() {
                Some(u) if u.label == l.unit => u.layers.end = i + 1,
                _ => units.push(Unit {
                    label: l.unit.clone(),
                    layers: i..i + 1,
                }),
            }
        }
        Ok(Topology {
            nodes,
            frame_shape,
            units,
        })
    }
}

fn required_channels(l: &LayerSpec) -> Result<usize> {
    match l.out_channels {
        Some(c) if c > 0 => Ok(c),
        _ => Err(Error::validation(format!(
            "layer '{}' needs a positive out_channels",
            l.name
        ))),
    }
}

fn check_contiguous<'a>(labels: impl Iterator<Item = Option<&'a str>>, what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    let mut prev: Option<Option<&str>> = None;
    for label in labels {
        if prev != Some(label) {
            if let Some(l) = label {
                if !seen.insert(l) {
                    return Err(Error::validation(format!(
                        "{what} label '{l}' is not contiguous"
                    )));
                }
            }
            prev = Some(label);
        }
    }
    Ok(())
}
