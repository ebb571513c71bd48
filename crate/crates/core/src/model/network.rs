//! Split networks: a backbone cut into a feature extractor (a "branch") and
//! a classifier head.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{self, ConvCache, ConvShape, Planes};
use super::params::{ParamSet, Real};
use crate::datasets::ImageTensor;
use crate::error::{Result, ZddaError};
use crate::seed;

const FEATURE_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LayerKind {
    Conv { out: usize, kernel: usize },
    Pool,
    /// Fully connected, optionally followed by a rectifier.
    Linear { out: usize, relu: bool },
}

#[derive(Debug, Clone, Copy)]
struct LayerDef {
    name: &'static str,
    kind: LayerKind,
}

/// Layer list of a known backbone, up to its last feature layer.
fn backbone_layers(id: &str) -> Option<&'static [LayerDef]> {
    // conv20 - pool - conv50 - pool - fc500 (+ in-place rectifier)
    const LENET: &[LayerDef] = &[
        LayerDef {
            name: "conv1",
            kind: LayerKind::Conv { out: 20, kernel: 5 },
        },
        LayerDef {
            name: "pool1",
            kind: LayerKind::Pool,
        },
        LayerDef {
            name: "conv2",
            kind: LayerKind::Conv { out: 50, kernel: 5 },
        },
        LayerDef {
            name: "pool2",
            kind: LayerKind::Pool,
        },
        LayerDef {
            name: "ip1",
            kind: LayerKind::Linear {
                out: 500,
                relu: true,
            },
        },
    ];
    match id {
        "lenet" => Some(LENET),
        _ => None,
    }
}

/// Backbone identity plus the layer where features end (inclusive).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitNetworkSpec {
    pub backbone_id: String,
    pub split_layer: String,
    pub feature_dim: usize,
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
}

/// Activation geometry after a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Geometry {
    Planes { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl Geometry {
    fn width(self) -> usize {
        match self {
            Geometry::Planes { c, h, w } => c * h * w,
            Geometry::Flat(d) => d,
        }
    }
}

impl SplitNetworkSpec {
    /// LeNet cut after `ip1`: 500-dimensional features from 28x28 input.
    pub fn lenet(input_channels: usize) -> Self {
        Self {
            backbone_id: "lenet".into(),
            split_layer: "ip1".into(),
            feature_dim: 500,
            input_channels,
            input_height: 28,
            input_width: 28,
        }
    }

    /// Same spec with a different input size (feature width recomputed).
    pub fn with_input_size(mut self, height: usize, width: usize) -> Result<Self> {
        self.input_height = height;
        self.input_width = width;
        let geo = self.trace_geometry()?;
        self.feature_dim = geo.last().map(|g| g.width()).unwrap_or(0);
        Ok(self)
    }

    fn layers(&self) -> Result<&'static [LayerDef]> {
        let all = backbone_layers(&self.backbone_id).ok_or_else(|| {
            ZddaError::Configuration(format!("unknown backbone {:?}", self.backbone_id))
        })?;
        let end = all
            .iter()
            .position(|l| l.name == self.split_layer)
            .ok_or_else(|| {
                ZddaError::Configuration(format!(
                    "backbone {} has no layer {:?}",
                    self.backbone_id, self.split_layer
                ))
            })?;
        Ok(&all[..=end])
    }

    fn trace_geometry(&self) -> Result<Vec<Geometry>> {
        if self.input_channels != 1 && self.input_channels != 3 {
            return Err(ZddaError::Configuration(format!(
                "input_channels must be 1 or 3, got {}",
                self.input_channels
            )));
        }
        let mut geo = Geometry::Planes {
            c: self.input_channels,
            h: self.input_height,
            w: self.input_width,
        };
        let mut out = Vec::new();
        for layer in self.layers()? {
            geo = match (layer.kind, geo) {
                (LayerKind::Conv { out, kernel }, Geometry::Planes { h, w, .. }) => {
                    if h < kernel || w < kernel {
                        return Err(ZddaError::Configuration(format!(
                            "{}: {h}x{w} input smaller than {kernel}x{kernel} kernel",
                            layer.name
                        )));
                    }
                    Geometry::Planes {
                        c: out,
                        h: h - kernel + 1,
                        w: w - kernel + 1,
                    }
                }
                (LayerKind::Pool, Geometry::Planes { c, h, w }) => {
                    if h < 2 || w < 2 {
                        return Err(ZddaError::Configuration(format!(
                            "{}: {h}x{w} input too small to pool",
                            layer.name
                        )));
                    }
                    Geometry::Planes {
                        c,
                        h: h / 2,
                        w: w / 2,
                    }
                }
                (LayerKind::Linear { out, .. }, _) => Geometry::Flat(out),
                (_, Geometry::Flat(_)) => {
                    return Err(ZddaError::Configuration(format!(
                        "{}: spatial layer after a flat one",
                        layer.name
                    )))
                }
            };
            out.push(geo);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let geo = self.trace_geometry()?;
        let width = geo.last().map(|g| g.width()).unwrap_or(0);
        if width != self.feature_dim {
            return Err(ZddaError::Configuration(format!(
                "feature_dim {} but {} at {} yields {width}",
                self.feature_dim, self.backbone_id, self.split_layer
            )));
        }
        Ok(())
    }
}

/// Which role a feature extractor plays in the training procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchTag {
    /// Target-modality extractor, pretrained then frozen.
    T,
    /// Source extractor aligned to `t`.
    S1,
    /// Source extractor trained jointly with the source classifier.
    S2,
    /// Fusion source branch.
    S3,
    /// Frozen copy of `s1` simulating target features in fusion training.
    S4,
    /// Fully supervised reference network.
    Reference,
}

impl BranchTag {
    pub fn as_str(self) -> &'static str {
        match self {
            BranchTag::T => "t",
            BranchTag::S1 => "s1",
            BranchTag::S2 => "s2",
            BranchTag::S3 => "s3",
            BranchTag::S4 => "s4",
            BranchTag::Reference => "reference",
        }
    }
}

/// One feature extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchState<T = f32> {
    pub spec: SplitNetworkSpec,
    pub params: ParamSet<T>,
    pub frozen: bool,
    pub tag: BranchTag,
    /// Seeds and copies this state descends from, oldest first.
    pub lineage: Vec<String>,
}

fn uniform_fan_in<T: Real>(rng: &mut impl Rng, fan_in: usize, len: usize) -> Vec<T> {
    let bound = (3.0 / fan_in as f64).sqrt();
    (0..len)
        .map(|_| T::from_f64(rng.random_range(-bound..bound)))
        .collect()
}

/// Fresh branch with seeded fan-in-scaled uniform weights and zero biases.
pub fn build_branch<T: Real>(spec: &SplitNetworkSpec, seed: u64, tag: BranchTag) -> Result<BranchState<T>> {
    spec.validate()?;
    let mut rng = seed::rng(seed);
    let mut params = ParamSet::new();
    let mut width_in = spec.input_channels;
    let mut flat_in = spec.input_channels * spec.input_height * spec.input_width;
    let geometry = spec.trace_geometry()?;
    for (layer, geo) in spec.layers()?.iter().zip(&geometry) {
        match layer.kind {
            LayerKind::Conv { out, kernel } => {
                let fan_in = width_in * kernel * kernel;
                params.push(
                    format!("{}.weight", layer.name),
                    vec![out, width_in, kernel, kernel],
                    uniform_fan_in(&mut rng, fan_in, out * fan_in),
                );
                params.push(format!("{}.bias", layer.name), vec![out], vec![T::zero(); out]);
                width_in = out;
            }
            LayerKind::Pool => {}
            LayerKind::Linear { out, .. } => {
                params.push(
                    format!("{}.weight", layer.name),
                    vec![out, flat_in],
                    uniform_fan_in(&mut rng, flat_in, out * flat_in),
                );
                params.push(format!("{}.bias", layer.name), vec![out], vec![T::zero(); out]);
            }
        }
        flat_in = geo.width();
    }
    Ok(BranchState {
        spec: spec.clone(),
        params,
        frozen: false,
        tag,
        lineage: vec![format!("init:{seed}")],
    })
}

enum Stage<T> {
    Conv {
        cache: ConvCache<T>,
        shape: ConvShape,
        name: &'static str,
    },
    Pool {
        argmax: Vec<u32>,
        in_h: usize,
        in_w: usize,
    },
    Linear {
        input: Array2<T>,
        output: Option<Array2<T>>,
        name: &'static str,
        /// Geometry of the planes flattened into `input`, if any.
        unflatten: Option<(usize, usize, usize)>,
    },
}

/// Intermediate values from a forward pass, consumed by backward.
pub struct BranchTrace<T> {
    stages: Vec<Stage<T>>,
    /// Geometry of the final planes when the split is a spatial layer.
    final_planes: Option<(usize, usize, usize)>,
}

enum Act<T> {
    Planes(Planes<T>),
    Rows(Array2<T>),
}

impl<T: Real> BranchState<T> {
    pub fn feature_dim(&self) -> usize {
        self.spec.feature_dim
    }

    pub fn checksum(&self) -> String {
        self.params.checksum()
    }

    /// Copy with a new tag, unfrozen, lineage extended.
    pub fn derive(&self, tag: BranchTag) -> Self {
        let mut lineage = self.lineage.clone();
        lineage.push(format!("copy:{}->{}", self.tag.as_str(), tag.as_str()));
        Self {
            spec: self.spec.clone(),
            params: self.params.clone(),
            frozen: false,
            tag,
            lineage,
        }
    }

    pub fn freeze(mut self) -> Self {
        self.frozen = true;
        self
    }

    fn batch_planes(&self, batch: &[ImageTensor]) -> Result<Planes<T>> {
        let s = &self.spec;
        let expect = (s.input_channels, s.input_height, s.input_width);
        let plane = s.input_height * s.input_width;
        let mut p = Planes::zeros(s.input_channels, batch.len(), s.input_height, s.input_width);
        for (n, im) in batch.iter().enumerate() {
            if im.shape() != expect {
                return Err(ZddaError::Dimension(format!(
                    "branch {} expects {:?} images, got {:?}",
                    self.tag.as_str(),
                    expect,
                    im.shape()
                )));
            }
            for c in 0..s.input_channels {
                let dst = &mut p.data[(c * batch.len() + n) * plane..][..plane];
                for (d, &v) in dst.iter_mut().zip(&im.data()[c * plane..(c + 1) * plane]) {
                    *d = T::from_f64(v as f64);
                }
            }
        }
        Ok(p)
    }

    fn run(&self, batch: &[ImageTensor], keep: bool) -> Result<(Array2<T>, BranchTrace<T>)> {
        let mut act = Act::Planes(self.batch_planes(batch)?);
        let mut stages = Vec::new();
        let mut in_c = self.spec.input_channels;
        for layer in self.spec.layers()? {
            act = match (layer.kind, act) {
                (LayerKind::Conv { out, kernel }, Act::Planes(p)) => {
                    let shape = ConvShape {
                        in_channels: in_c,
                        out_channels: out,
                        kernel,
                    };
                    let (y, cache) = layers::conv_forward(
                        &p,
                        shape,
                        self.params.data(&format!("{}.weight", layer.name)),
                        self.params.data(&format!("{}.bias", layer.name)),
                    );
                    if keep {
                        stages.push(Stage::Conv {
                            cache,
                            shape,
                            name: layer.name,
                        });
                    }
                    in_c = out;
                    Act::Planes(y)
                }
                (LayerKind::Pool, Act::Planes(p)) => {
                    let (y, argmax) = layers::maxpool_forward(&p);
                    if keep {
                        stages.push(Stage::Pool {
                            argmax,
                            in_h: p.height,
                            in_w: p.width,
                        });
                    }
                    Act::Planes(y)
                }
                (LayerKind::Linear { relu, .. }, a) => {
                    let (x, unflatten) = match a {
                        Act::Planes(p) => (p.to_rows(), Some((p.channels, p.height, p.width))),
                        Act::Rows(r) => (r, None),
                    };
                    let mut y = layers::linear_forward(
                        x.view(),
                        self.params.data(&format!("{}.weight", layer.name)),
                        self.params.data(&format!("{}.bias", layer.name)),
                    );
                    if relu {
                        layers::relu_inplace(&mut y);
                    }
                    if keep {
                        stages.push(Stage::Linear {
                            input: x,
                            output: relu.then(|| y.clone()),
                            name: layer.name,
                            unflatten,
                        });
                    }
                    Act::Rows(y)
                }
                (_, Act::Rows(_)) => unreachable!("validated geometry"),
            };
        }
        let (features, final_planes) = match act {
            Act::Rows(r) => (r, None),
            Act::Planes(p) => {
                let g = (p.channels, p.height, p.width);
                (p.to_rows(), Some(g))
            }
        };
        Ok((
            features,
            BranchTrace {
                stages,
                final_planes,
            },
        ))
    }

    /// Features for a batch, `[n, feature_dim]`.
    pub fn forward_features(&self, batch: &[ImageTensor]) -> Result<Array2<T>> {
        if batch.is_empty() {
            return Ok(Array2::zeros((0, self.feature_dim())));
        }
        self.run(batch, false).map(|(f, _)| f)
    }

    /// Features for any number of images, computed in parallel chunks.
    pub fn forward_features_batched(&self, images: &[ImageTensor]) -> Result<Array2<T>> {
        use rayon::prelude::*;
        let parts = images
            .par_chunks(FEATURE_CHUNK)
            .map(|c| self.forward_features(c))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Array2::zeros((images.len(), self.feature_dim()));
        for (i, p) in parts.into_iter().enumerate() {
            let start = i * FEATURE_CHUNK;
            out.slice_mut(ndarray::s![start..start + p.nrows(), ..]).assign(&p);
        }
        Ok(out)
    }

    /// Features plus the trace needed by [`BranchState::backward`].
    pub fn forward_traced(&self, batch: &[ImageTensor]) -> Result<(Array2<T>, BranchTrace<T>)> {
        self.run(batch, true)
    }

    /// Parameter gradients given the gradient of the loss w.r.t. features.
    pub fn backward(&self, trace: BranchTrace<T>, dfeatures: ArrayView2<'_, T>) -> ParamSet<T> {
        let mut grads = self.params.zeros_like();
        let mut d_rows: Option<Array2<T>> = None;
        let mut d_planes: Option<Planes<T>> = match trace.final_planes {
            Some((c, h, w)) => Some(Planes::from_rows(dfeatures, c, h, w)),
            None => {
                d_rows = Some(dfeatures.to_owned());
                None
            }
        };
        for (idx, stage) in trace.stages.into_iter().enumerate().rev() {
            let first = idx == 0;
            match stage {
                Stage::Linear {
                    input,
                    output,
                    name,
                    unflatten,
                } => {
                    let mut dy = d_rows.take().expect("row gradient");
                    if let Some(out) = &output {
                        layers::relu_backward_inplace(&mut dy, out);
                    }
                    let wname = format!("{name}.weight");
                    let (dw, db, dx) = layers::linear_backward(
                        dy.view(),
                        input.view(),
                        self.params.data(&wname),
                        !first,
                    );
                    grads.get_mut(&wname).unwrap().data = dw;
                    grads.get_mut(&format!("{name}.bias")).unwrap().data = db;
                    if let Some(dx) = dx {
                        match unflatten {
                            Some((c, h, w)) => d_planes = Some(Planes::from_rows(dx.view(), c, h, w)),
                            None => d_rows = Some(dx),
                        }
                    }
                }
                Stage::Pool { argmax, in_h, in_w } => {
                    let dy = d_planes.take().expect("plane gradient");
                    d_planes = Some(layers::maxpool_backward(&dy, &argmax, in_h, in_w));
                }
                Stage::Conv { cache, shape, name } => {
                    let dy = d_planes.take().expect("plane gradient");
                    let wname = format!("{name}.weight");
                    let (dw, db, dx) =
                        layers::conv_backward(&dy, &cache, shape, self.params.data(&wname), !first);
                    grads.get_mut(&wname).unwrap().data = dw;
                    grads.get_mut(&format!("{name}.bias")).unwrap().data = db;
                    d_planes = dx;
                }
            }
        }
        grads
    }
}

/// Classifier head shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum ClassifierKind {
    /// One fully connected layer (the backbone remainder after the split).
    Source,
    /// Two fully connected layers with a rectifier in between.
    Joint { hidden: usize },
}

impl ClassifierKind {
    /// Joint head with the 1024-unit hidden layer.
    pub const JOINT: ClassifierKind = ClassifierKind::Joint { hidden: 1024 };
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierState<T = f32> {
    pub kind: ClassifierKind,
    pub input_dim: usize,
    pub class_count: usize,
    pub params: ParamSet<T>,
    pub frozen: bool,
}

pub fn build_classifier<T: Real>(
    kind: ClassifierKind,
    input_dim: usize,
    class_count: usize,
    seed: u64,
) -> Result<ClassifierState<T>> {
    if input_dim == 0 || class_count == 0 {
        return Err(ZddaError::Configuration(
            "classifier needs positive input width and class count".into(),
        ));
    }
    let mut rng = seed::rng(seed);
    let mut params = ParamSet::new();
    match kind {
        ClassifierKind::Source => {
            params.push(
                "fc.weight",
                vec![class_count, input_dim],
                uniform_fan_in(&mut rng, input_dim, class_count * input_dim),
            );
            params.push("fc.bias", vec![class_count], vec![T::zero(); class_count]);
        }
        ClassifierKind::Joint { hidden } => {
            params.push(
                "fc1.weight",
                vec![hidden, input_dim],
                uniform_fan_in(&mut rng, input_dim, hidden * input_dim),
            );
            params.push("fc1.bias", vec![hidden], vec![T::zero(); hidden]);
            params.push(
                "fc2.weight",
                vec![class_count, hidden],
                uniform_fan_in(&mut rng, hidden, class_count * hidden),
            );
            params.push("fc2.bias", vec![class_count], vec![T::zero(); class_count]);
        }
    }
    Ok(ClassifierState {
        kind,
        input_dim,
        class_count,
        params,
        frozen: false,
    })
}

/// Intermediate values of a classifier forward pass.
pub struct ClassifierTrace<T> {
    input: Array2<T>,
    hidden: Option<Array2<T>>,
}

impl<T: Real> ClassifierState<T> {
    fn check_width(&self, features: &ArrayView2<'_, T>) -> Result<()> {
        if features.ncols() != self.input_dim {
            return Err(ZddaError::Dimension(format!(
                "classifier takes {}-wide features, got {}",
                self.input_dim,
                features.ncols()
            )));
        }
        Ok(())
    }

    fn run(&self, features: ArrayView2<'_, T>) -> (Array2<T>, Option<Array2<T>>) {
        match self.kind {
            ClassifierKind::Source => (
                layers::linear_forward(
                    features,
                    self.params.data("fc.weight"),
                    self.params.data("fc.bias"),
                ),
                None,
            ),
            ClassifierKind::Joint { .. } => {
                let mut h = layers::linear_forward(
                    features,
                    self.params.data("fc1.weight"),
                    self.params.data("fc1.bias"),
                );
                layers::relu_inplace(&mut h);
                let y = layers::linear_forward(
                    h.view(),
                    self.params.data("fc2.weight"),
                    self.params.data("fc2.bias"),
                );
                (y, Some(h))
            }
        }
    }

    /// Logits `[n, class_count]`.
    pub fn forward_logits(&self, features: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.check_width(&features)?;
        if features.nrows() == 0 {
            return Ok(Array2::zeros((0, self.class_count)));
        }
        Ok(self.run(features).0)
    }

    pub fn forward_traced(&self, features: ArrayView2<'_, T>) -> Result<(Array2<T>, ClassifierTrace<T>)> {
        self.check_width(&features)?;
        let (y, hidden) = self.run(features);
        Ok((
            y,
            ClassifierTrace {
                input: features.to_owned(),
                hidden,
            },
        ))
    }

    /// `(parameter gradients, gradient w.r.t. input features)`.
    pub fn backward(&self, trace: ClassifierTrace<T>, dlogits: ArrayView2<'_, T>) -> (ParamSet<T>, Array2<T>) {
        let mut grads = self.params.zeros_like();
        let dx = match (self.kind, trace.hidden) {
            (ClassifierKind::Source, _) => {
                let (dw, db, dx) = layers::linear_backward(
                    dlogits,
                    trace.input.view(),
                    self.params.data("fc.weight"),
                    true,
                );
                grads.get_mut("fc.weight").unwrap().data = dw;
                grads.get_mut("fc.bias").unwrap().data = db;
                dx.expect("input gradient")
            }
            (ClassifierKind::Joint { .. }, Some(hidden)) => {
                let (dw2, db2, dh) = layers::linear_backward(
                    dlogits,
                    hidden.view(),
                    self.params.data("fc2.weight"),
                    true,
                );
                let mut dh = dh.expect("hidden gradient");
                layers::relu_backward_inplace(&mut dh, &hidden);
                let (dw1, db1, dx) = layers::linear_backward(
                    dh.view(),
                    trace.input.view(),
                    self.params.data("fc1.weight"),
                    true,
                );
                grads.get_mut("fc2.weight").unwrap().data = dw2;
                grads.get_mut("fc2.bias").unwrap().data = db2;
                grads.get_mut("fc1.weight").unwrap().data = dw1;
                grads.get_mut("fc1.bias").unwrap().data = db1;
                dx.expect("input gradient")
            }
            (ClassifierKind::Joint { .. }, None) => unreachable!("joint trace keeps hidden"),
        };
        (grads, dx)
    }

    pub fn checksum(&self) -> String {
        self.params.checksum()
    }
}
