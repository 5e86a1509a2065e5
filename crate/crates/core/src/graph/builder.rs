use super::{ArchitectureSpec, FeedbackSpec, HeadKind, HeadSpec, LayerKind, LayerSpec, INPUT};
use crate::tensor::ops::Nonlinearity;

/// Builds small conv chains for tests, examples and synthetic training.
///
/// Every layer is its own partition unit, so any subnetwork count up to the
/// depth is valid.
#[derive(Clone, Debug)]
pub struct ChainBuilder {
    depth: usize,
    channels: usize,
    input_channels: usize,
    size: (usize, usize),
    frames: usize,
    kernel: usize,
    extents: Vec<usize>,
    identity: bool,
    activation: Option<Nonlinearity>,
    head: HeadKind,
    head_channels: usize,
    skips: Vec<(usize, usize)>,
    feedback: Option<usize>,
}

impl ChainBuilder {
    pub fn new(depth: usize) -> Self {
        ChainBuilder {
            depth,
            channels: 2,
            input_channels: 1,
            size: (5, 5),
            frames: 8,
            kernel: 3,
            extents: vec![1; depth],
            identity: false,
            activation: Some(Nonlinearity::Tanh),
            head: HeadKind::Dense,
            head_channels: 1,
            skips: Vec::new(),
            feedback: None,
        }
    }

    pub fn channels(mut self, c: usize) -> Self {
        self.channels = c;
        self
    }

    pub fn input_channels(mut self, c: usize) -> Self {
        self.input_channels = c;
        self
    }

    pub fn size(mut self, h: usize, w: usize) -> Self {
        self.size = (h, w);
        self
    }

    pub fn frames(mut self, t: usize) -> Self {
        self.frames = t;
        self
    }

    /// Spatial kernel size of every conv.
    pub fn kernel(mut self, k: usize) -> Self {
        self.kernel = k;
        self
    }

    pub fn extent(mut self, layer: usize, e: usize) -> Self {
        self.extents[layer] = e;
        self
    }

    pub fn extents(mut self, e: Vec<usize>) -> Self {
        self.extents = e;
        self
    }

    /// Parameter-free identity layers (single-input concats).
    pub fn identity(mut self) -> Self {
        self.identity = true;
        self
    }

    pub fn activation(mut self, a: Option<Nonlinearity>) -> Self {
        self.activation = a;
        self
    }

    pub fn classifier(mut self, classes: usize) -> Self {
        self.head = HeadKind::Classifier;
        self.head_channels = classes;
        self
    }

    pub fn dense_head(mut self, channels: usize) -> Self {
        self.head = HeadKind::Dense;
        self.head_channels = channels;
        self
    }

    /// Extra input from layer `from` into layer `to`.
    pub fn skip(mut self, from: usize, to: usize) -> Self {
        self.skips.push((from, to));
        self
    }

    pub fn feedback(mut self, target: usize) -> Self {
        self.feedback = Some(target);
        self
    }

    pub fn build(self) -> ArchitectureSpec {
        let name = |i: usize| format!("layer_{i}");
        let layers = (0..self.depth)
            .map(|i| {
                let mut l = if self.identity {
                    LayerSpec::new(name(i), LayerKind::Concat, [1, 1, 1], [1, 1, 1])
                } else {
                    let mut l = LayerSpec::new(
                        name(i),
                        LayerKind::Conv,
                        [self.extents[i], self.kernel, self.kernel],
                        [1, 1, 1],
                    );
                    l.out_channels = Some(self.channels);
                    l.activation = self.activation;
                    l
                };
                l.block = "chain".into();
                l.unit = Some(name(i));
                l
            })
            .collect();
        let last = if self.depth == 0 {
            INPUT.to_string()
        } else {
            name(self.depth - 1)
        };
        ArchitectureSpec {
            name: format!("chain{}", self.depth),
            input_shape: [self.frames, self.size.0, self.size.1, self.input_channels],
            layers,
            skip_edges: self.skips.iter().map(|&(a, b)| (name(a), name(b))).collect(),
            head: HeadSpec {
                kind: self.head,
                inputs: vec![last],
                kernel: [1, 1, 1],
                out_channels: self.head_channels,
                resolution: (self.head == HeadKind::Dense).then_some([self.size.0, self.size.1]),
            },
            feedback: self.feedback.map(|t| FeedbackSpec { target: name(t) }),
        }
    }
}
