//! Two-layer resonance classifier for 28x28 images.
//!
//! Layer 1 learns 7x7 tile prototypes. Layer 2 stores, per class, the
//! sequences of layer-1 winners seen during training. Both layers only ever
//! append nodes.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::approx::{resonator_breakpoints, Curve, LutTable, Method};
use crate::resonance::{rho_from_sigma, ResonanceError};

pub const SIDE: usize = 28;
pub const PIXELS: usize = SIDE * SIDE;
pub const TILE_SIDE: usize = 7;
pub const TILE_PIXELS: usize = TILE_SIDE * TILE_SIDE;
pub const TILES: usize = 16;
pub const CLASSES: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArnError {
    #[error("image has {0} pixels, expected 784")]
    Shape(usize),
    #[error("pixel {index} = {value} is outside [0, 1]")]
    Pixel { index: usize, value: f64 },
    #[error("label {0} is outside 0-9")]
    Label(u8),
    #[error("{images} images but {labels} labels")]
    Count { images: usize, labels: usize },
    #[error("rotation {0} degrees is beyond the 15 degree limit")]
    Rotation(f64),
    #[error("translation ({0}, {1}) is beyond one pixel")]
    Translation(i32, i32),
    #[error("model has no layer-2 nodes")]
    EmptyModel,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Resonance(#[from] ResonanceError),
}

/// Normalised grey-level image, row-major.
#[derive(Clone, PartialEq)]
pub struct Image(Box<[f64; PIXELS]>);

impl Image {
    pub fn from_pixels(pixels: &[f64]) -> Result<Self, ArnError> {
        let arr: [f64; PIXELS] = pixels
            .try_into()
            .map_err(|_| ArnError::Shape(pixels.len()))?;
        if let Some((index, &value)) = arr
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(ArnError::Pixel { index, value });
        }
        Ok(Self(Box::new(arr)))
    }

    /// Bytes divided by 255.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ArnError> {
        let arr: [u8; PIXELS] = bytes.try_into().map_err(|_| ArnError::Shape(bytes.len()))?;
        Ok(Self(Box::new(arr.map(|b| b as f64 / 255.0))))
    }

    pub fn constant(v: f64) -> Result<Self, ArnError> {
        Self::from_pixels(&[v; PIXELS])
    }

    pub fn pixels(&self) -> &[f64; PIXELS] {
        &self.0
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.0[row * SIDE + col]
    }
}

impl fmt::Debug for Image {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ink = self.0.iter().filter(|&&v| v > 0.0).count();
        write!(f, "Image({ink} lit pixels)")
    }
}

/// One 7x7 tile, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tile(pub [f64; TILE_PIXELS]);

/// Split into 16 tiles numbered row-major from the top left.
pub fn tile_image(img: &Image) -> [Tile; TILES] {
    std::array::from_fn(|t| {
        let (tr, tc) = (t / 4, t % 4);
        Tile(std::array::from_fn(|p| {
            img.at(
                tr * TILE_SIDE + p / TILE_SIDE,
                tc * TILE_SIDE + p % TILE_SIDE,
            )
        }))
    })
}

pub fn tile_pixels(pixels: &[f64]) -> Result<[Tile; TILES], ArnError> {
    Ok(tile_image(&Image::from_pixels(pixels)?))
}

/// How node outputs are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NodeEval {
    #[default]
    Exact,
    Table(Method),
}

impl fmt::Display for NodeEval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeEval::Exact => f.write_str("exact"),
            NodeEval::Table(m) => write!(f, "{m}"),
        }
    }
}

impl FromStr for NodeEval {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("exact") {
            Ok(NodeEval::Exact)
        } else {
            s.parse().map(NodeEval::Table)
        }
    }
}

/// Per-pixel response with unit peak, `sech^2(rho d / 2)`.
#[derive(Debug, Clone)]
enum Response {
    Exact,
    Table(LutTable<f64>),
}

impl Response {
    fn new(eval: NodeEval, rho: f64) -> Result<Self, ArnError> {
        Ok(match eval {
            NodeEval::Exact => Response::Exact,
            NodeEval::Table(m) => Response::Table(
                LutTable::build(Curve::Resonator { rho }, m, &resonator_breakpoints())
                    .map_err(|e| ArnError::Config(e.to_string()))?,
            ),
        })
    }

    #[inline]
    fn term(&self, rho: f64, d: f64) -> f64 {
        match self {
            Response::Exact => {
                let e = (-(rho * d).abs()).exp();
                4.0 * e / ((1.0 + e) * (1.0 + e))
            }
            Response::Table(t) => (4.0 * t.eval(d)).clamp(0.0, 1.0),
        }
    }
}

/// Layer-1 node: a stored tile.
#[derive(Debug, Clone, PartialEq)]
pub struct L1Node {
    /// Creation order, starting at 1.
    pub index: usize,
    pub resonant: [f64; TILE_PIXELS],
    pub rho: f64,
    pub threshold: f64,
}

/// Layer-2 node: a labelled sequence of layer-1 indices.
#[derive(Debug, Clone, PartialEq)]
pub struct L2Node {
    pub index: usize,
    pub pattern: [usize; TILES],
    pub label: u8,
    pub rho2: f64,
    pub threshold2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArnConfig {
    pub rho: f64,
    pub threshold: f64,
    pub rho2: f64,
    pub threshold2: f64,
    pub train_size: usize,
    pub seed: u64,
    pub eval: NodeEval,
}

impl Default for ArnConfig {
    fn default() -> Self {
        Self {
            rho: 2.42,
            threshold: 0.9,
            rho2: 2.42,
            threshold2: 0.9,
            train_size: 200,
            seed: 1,
            eval: NodeEval::Exact,
        }
    }
}

impl ArnConfig {
    pub fn validate(&self) -> Result<(), ArnError> {
        let bad = |m: &str| Err(ArnError::Config(m.to_string()));
        if !(self.rho > 0.0 && self.rho2 > 0.0) {
            return bad("rho values must be positive");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must lie in (0, 1)");
        }
        if !(self.threshold2 > 0.0 && self.threshold2 <= 1.0) {
            return bad("threshold2 must lie in (0, 1]");
        }
        Ok(())
    }
}

/// Outcome of a layer-1 lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum L1Match {
    Winner { index: usize, output: f64 },
    Miss,
}

impl L1Match {
    /// Node index, 0 for a miss.
    pub fn index(&self) -> usize {
        match self {
            L1Match::Winner { index, .. } => *index,
            L1Match::Miss => 0,
        }
    }
}

/// Append-only layer of tile prototypes.
#[derive(Debug, Clone)]
pub struct Layer1 {
    nodes: Vec<L1Node>,
    response: Response,
    /// Tables for nodes whose sharpness differs from the layer default.
    own: Vec<Option<Response>>,
    eval: NodeEval,
    rho: f64,
    threshold: f64,
}

impl Layer1 {
    pub fn new(rho: f64, threshold: f64, eval: NodeEval) -> Result<Self, ArnError> {
        Ok(Self {
            nodes: Vec::new(),
            response: Response::new(eval, rho)?,
            own: Vec::new(),
            eval,
            rho,
            threshold,
        })
    }

    pub fn from_nodes(
        nodes: Vec<L1Node>,
        rho: f64,
        threshold: f64,
        eval: NodeEval,
    ) -> Result<Self, ArnError> {
        let mut layer = Self::new(rho, threshold, eval)?;
        layer.own = nodes
            .iter()
            .map(|n| match eval {
                NodeEval::Table(_) if n.rho != rho => Response::new(eval, n.rho).map(Some),
                _ => Ok(None),
            })
            .collect::<Result<_, _>>()?;
        layer.nodes = nodes;
        Ok(layer)
    }

    pub fn nodes(&self) -> &[L1Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Normalised output of node `index` (1-based) for a tile.
    pub fn output(&self, index: usize, tile: &Tile) -> f64 {
        self.output_with(&self.nodes[index - 1], tile, self.nodes[index - 1].rho)
    }

    fn response_of(&self, node: &L1Node) -> &Response {
        self.own[node.index - 1].as_ref().unwrap_or(&self.response)
    }

    fn output_with(&self, node: &L1Node, tile: &Tile, rho: f64) -> f64 {
        let r = self.response_of(node);
        let sum: f64 = tile
            .0
            .iter()
            .zip(&node.resonant)
            .map(|(&x, &m)| r.term(rho, x - m))
            .sum();
        sum / TILE_PIXELS as f64
    }

    /// Output at a relaxed sharpness.
    pub fn relaxed_output(&self, index: usize, tile: &Tile, factor: f64) -> f64 {
        let node = &self.nodes[index - 1];
        let response = if factor == 1.0 {
            None
        } else {
            Response::new(self.eval, node.rho * factor).ok()
        };
        let rho = node.rho * factor;
        let r = response.as_ref().unwrap_or(self.response_of(node));
        tile.0
            .iter()
            .zip(&node.resonant)
            .map(|(&x, &m)| r.term(rho, x - m))
            .sum::<f64>()
            / TILE_PIXELS as f64
    }

    /// Highest output above the threshold; earliest node wins exact ties.
    pub fn best_match(&self, tile: &Tile) -> L1Match {
        let mut floor = self.threshold;
        let mut best = L1Match::Miss;
        let need = |floor: f64| floor * TILE_PIXELS as f64;
        for node in &self.nodes {
            // Each pixel term is at most 1, so stop once the deficit
            // already rules this node out.
            let budget = TILE_PIXELS as f64 - need(floor);
            let mut deficit = 0.0;
            let mut sum = 0.0;
            let mut pruned = false;
            let r = self.response_of(node);
            for (&x, &m) in tile.0.iter().zip(&node.resonant) {
                let t = r.term(node.rho, x - m);
                sum += t;
                deficit += 1.0 - t;
                if deficit > budget {
                    pruned = true;
                    break;
                }
            }
            if pruned {
                continue;
            }
            let output = sum / TILE_PIXELS as f64;
            if output > floor {
                floor = output;
                best = L1Match::Winner {
                    index: node.index,
                    output,
                };
            }
        }
        best
    }

    /// Store `tile` as a new node and return its index.
    pub fn push(&mut self, tile: &Tile) -> usize {
        let index = self.nodes.len() + 1;
        self.nodes.push(L1Node {
            index,
            resonant: tile.0,
            rho: self.rho,
            threshold: self.threshold,
        });
        self.own.push(None);
        index
    }

    /// Winner index, creating a node on a miss.
    pub fn learn(&mut self, tile: &Tile) -> usize {
        match self.best_match(tile) {
            L1Match::Winner { index, .. } => index,
            L1Match::Miss => self.push(tile),
        }
    }

    /// Layer-1 indices of an image, 0 where nothing resonates.
    pub fn pattern(&self, img: &Image) -> [usize; TILES] {
        tile_image(img).map(|t| self.best_match(&t).index())
    }
}

impl PartialEq for Layer1 {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
            && self.eval == other.eval
            && self.rho == other.rho
            && self.threshold == other.threshold
    }
}

impl Layer1 {
    pub fn eval(&self) -> NodeEval {
        self.eval
    }
}

/// Fraction of positions holding the same layer-1 node.
pub fn pattern_score(a: &[usize; TILES], b: &[usize; TILES]) -> f64 {
    a.iter().zip(b).filter(|(x, y)| x == y && **x != 0).count() as f64 / TILES as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub layer1: Layer1,
    pub layer2: Vec<L2Node>,
    pub config: ArnConfig,
}

/// Layer-1 match over the existing nodes, without creating any.
pub fn l1_match(layer1: &Layer1, tile: &Tile) -> L1Match {
    layer1.best_match(tile)
}

fn check_inputs(images: &[Image], labels: &[u8]) -> Result<(), ArnError> {
    if images.len() != labels.len() {
        return Err(ArnError::Count {
            images: images.len(),
            labels: labels.len(),
        });
    }
    if let Some(&l) = labels.iter().find(|&&l| l as usize >= CLASSES) {
        return Err(ArnError::Label(l));
    }
    Ok(())
}

/// Learn layer-1 tile prototypes from every tile in presentation order.
pub fn train_layer1(images: &[Image], cfg: &ArnConfig) -> Result<Layer1, ArnError> {
    cfg.validate()?;
    let mut layer1 = Layer1::new(cfg.rho, cfg.threshold, cfg.eval)?;
    for img in images {
        for tile in tile_image(img) {
            layer1.learn(&tile);
        }
    }
    Ok(layer1)
}

/// Build layer 2 on a finished layer 1. A pattern becomes a node when no
/// stored pattern of its class scores at least `threshold2`.
pub fn train_layer2(
    layer1: &Layer1,
    images: &[Image],
    labels: &[u8],
    cfg: &ArnConfig,
) -> Vec<L2Node> {
    let mut layer2: Vec<L2Node> = Vec::new();
    for (img, &label) in images.iter().zip(labels) {
        let pattern = layer1.pattern(img);
        let best = layer2
            .iter()
            .filter(|n| n.label == label)
            .map(|n| pattern_score(&n.pattern, &pattern))
            .fold(0.0, f64::max);
        if layer2.iter().all(|n| n.label != label) || best < cfg.threshold2 {
            layer2.push(L2Node {
                index: layer2.len() + 1,
                pattern,
                label,
                rho2: cfg.rho2,
                threshold2: cfg.threshold2,
            });
        }
    }
    layer2
}

/// Train both layers in presentation order.
pub fn train(images: &[Image], labels: &[u8], cfg: &ArnConfig) -> Result<TrainedModel, ArnError> {
    check_inputs(images, labels)?;
    let layer1 = train_layer1(images, cfg)?;
    let layer2 = train_layer2(&layer1, images, labels, cfg);
    let mut model = TrainedModel {
        layer1,
        layer2,
        config: *cfg,
    };
    model.repair(images, labels);
    Ok(model)
}

/// Retune each layer-1 node's sharpness from the spread of the tiles it
/// wins, then rebuild layer 2.
pub fn retune(
    model: &TrainedModel,
    images: &[Image],
    labels: &[u8],
) -> Result<TrainedModel, ArnError> {
    check_inputs(images, labels)?;
    let n = model.layer1.len();
    let mut sq = vec![0.0; n];
    let mut count = vec![0usize; n];
    for img in images {
        for tile in tile_image(img) {
            if let L1Match::Winner { index, .. } = model.layer1.best_match(&tile) {
                let node = &model.layer1.nodes[index - 1];
                sq[index - 1] += tile
                    .0
                    .iter()
                    .zip(&node.resonant)
                    .map(|(x, m)| (x - m) * (x - m))
                    .sum::<f64>();
                count[index - 1] += 1;
            }
        }
    }
    let mut nodes = model.layer1.nodes.clone();
    for ((node, s), c) in nodes.iter_mut().zip(sq).zip(count) {
        let sigma = (s / (c * TILE_PIXELS) as f64).sqrt();
        if c >= 2 && sigma > 0.0 {
            node.rho = rho_from_sigma(sigma)?;
        }
    }
    let cfg = model.config;
    let layer1 = Layer1::from_nodes(nodes, cfg.rho, cfg.threshold, cfg.eval)?;
    let layer2 = train_layer2(&layer1, images, labels, &cfg);
    let mut model = TrainedModel {
        layer1,
        layer2,
        config: cfg,
    };
    model.repair(images, labels);
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictKind {
    Single,
    Multiple,
    NoRecognition,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Winner {
    /// Layer-2 node index.
    pub node: usize,
    pub label: u8,
    pub output: f64,
}

/// Winning indices at each layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub layer1: [usize; TILES],
    pub layer2: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub label: Option<u8>,
    /// One entry per class sharing the top output.
    pub winners: Vec<Winner>,
    pub path: Path,
}

impl Verdict {
    /// Classes credited by this verdict, each with equal weight.
    pub fn credited(&self) -> Vec<u8> {
        match self.kind {
            VerdictKind::NoRecognition => (0..CLASSES as u8).collect(),
            _ => self.winners.iter().map(|w| w.label).collect(),
        }
    }
}

impl TrainedModel {
    /// Layer-2 decision for a layer-1 pattern.
    pub fn decide(&self, pattern: &[usize; TILES]) -> Verdict {
        let mut per_class: [Option<Winner>; CLASSES] = [None; CLASSES];
        for node in &self.layer2 {
            let output = pattern_score(&node.pattern, pattern);
            let slot = &mut per_class[node.label as usize];
            if slot.is_none_or(|w| output > w.output) {
                *slot = Some(Winner {
                    node: node.index,
                    label: node.label,
                    output,
                });
            }
        }
        let top = per_class
            .iter()
            .flatten()
            .map(|w| w.output)
            .fold(0.0, f64::max);
        let winners: Vec<Winner> = per_class
            .iter()
            .flatten()
            .filter(|w| w.output == top)
            .copied()
            .collect();
        let (kind, label, layer2) = match winners.as_slice() {
            _ if top == 0.0 => (VerdictKind::NoRecognition, None, None),
            [w] => (VerdictKind::Single, Some(w.label), Some(w.node)),
            _ => (VerdictKind::Multiple, None, None),
        };
        let winners = if kind == VerdictKind::NoRecognition {
            Vec::new()
        } else {
            winners
        };
        Verdict {
            kind,
            label,
            winners,
            path: Path {
                layer1: *pattern,
                layer2,
            },
        }
    }

    pub fn classify(&self, img: &Image) -> Result<Verdict, ArnError> {
        if self.layer2.is_empty() {
            return Err(ArnError::EmptyModel);
        }
        Ok(self.decide(&self.layer1.pattern(img)))
    }

    /// Re-derive a verdict from its recorded layer-1 path alone.
    pub fn replay(&self, path: &Path) -> Verdict {
        self.decide(&path.layer1)
    }

    /// Append the full pattern of any training image that a node of
    /// another class ties or beats. Returns how many were added.
    pub fn repair(&mut self, images: &[Image], labels: &[u8]) -> usize {
        let mut added = 0;
        for (img, &label) in images.iter().zip(labels) {
            let pattern = self.layer1.pattern(img);
            let v = self.decide(&pattern);
            if v.kind != VerdictKind::Single || v.label != Some(label) {
                self.layer2.push(L2Node {
                    index: self.layer2.len() + 1,
                    pattern,
                    label,
                    rho2: self.config.rho2,
                    threshold2: self.config.threshold2,
                });
                added += 1;
            }
        }
        added
    }

    pub fn l2_node(&self, index: usize) -> &L2Node {
        &self.layer2[index - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum AmbiguityPolicy {
    #[default]
    Report,
    /// Rescore tied winners at sharpness `rho * (1 - delta)`.
    RelaxRho { delta: f64 },
}

impl AmbiguityPolicy {
    pub const RELAX: Self = AmbiguityPolicy::RelaxRho { delta: 0.05 };
}

/// Mean relaxed layer-1 output of the image tiles against a stored pattern.
pub fn relaxed_score(
    model: &TrainedModel,
    tiles: &[Tile; TILES],
    pattern: &[usize; TILES],
    factor: f64,
) -> f64 {
    tiles
        .iter()
        .zip(pattern)
        .filter(|(_, &i)| i != 0)
        .map(|(t, &i)| model.layer1.relaxed_output(i, t, factor))
        .sum::<f64>()
        / TILES as f64
}

/// Break a multiple-winner tie by relaxing layer-1 sharpness.
pub fn resolve_ambiguity(
    model: &TrainedModel,
    img: &Image,
    verdict: &Verdict,
    policy: AmbiguityPolicy,
) -> Verdict {
    let delta = match policy {
        AmbiguityPolicy::RelaxRho { delta }
            if delta > 0.0 && verdict.kind == VerdictKind::Multiple =>
        {
            delta
        }
        _ => return verdict.clone(),
    };
    let tiles = tile_image(img);
    let scored: Vec<(Winner, f64)> = verdict
        .winners
        .iter()
        .map(|w| {
            (
                *w,
                relaxed_score(model, &tiles, &model.l2_node(w.node).pattern, 1.0 - delta),
            )
        })
        .collect();
    let top = scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<Winner> = scored.iter().filter(|s| s.1 == top).map(|s| s.0).collect();
    let mut out = verdict.clone();
    if let [w] = kept.as_slice() {
        out.kind = VerdictKind::Single;
        out.label = Some(w.label);
        out.path.layer2 = Some(w.node);
    }
    out.winners = kept;
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VerdictCounts {
    pub correct: usize,
    pub wrong: usize,
    pub multiple: usize,
    pub none: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Confusion {
    /// Rows are true classes, columns predictions; tied verdicts split
    /// their unit of mass evenly.
    pub matrix: [[f64; CLASSES]; CLASSES],
    pub counts: VerdictCounts,
    pub total: usize,
}

impl Confusion {
    pub fn accuracy(&self) -> f64 {
        let diag: f64 = (0..CLASSES).map(|c| self.matrix[c][c]).sum();
        diag / self.total.max(1) as f64
    }

    pub fn wrong_rate(&self) -> f64 {
        self.counts.wrong as f64 / self.total.max(1) as f64
    }

    pub fn row_sum(&self, class: usize) -> f64 {
        self.matrix[class].iter().sum()
    }

    /// CSV with a header row and a per-class total column.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("actual");
        for c in 0..CLASSES {
            s.push_str(&format!(",{c}"));
        }
        s.push_str(",total\n");
        for (r, row) in self.matrix.iter().enumerate() {
            s.push_str(&r.to_string());
            for v in row {
                s.push_str(&format!(",{v:.2}"));
            }
            s.push_str(&format!(",{:.0}\n", self.row_sum(r)));
        }
        s
    }

    pub fn add(&mut self, truth: u8, verdict: &Verdict) {
        let credited = verdict.credited();
        let share = 1.0 / credited.len() as f64;
        for c in &credited {
            self.matrix[truth as usize][*c as usize] += share;
        }
        self.total += 1;
        match verdict.kind {
            VerdictKind::Single if verdict.label == Some(truth) => self.counts.correct += 1,
            VerdictKind::Single => self.counts.wrong += 1,
            VerdictKind::Multiple => self.counts.multiple += 1,
            VerdictKind::NoRecognition => self.counts.none += 1,
        }
    }
}

impl Default for Confusion {
    fn default() -> Self {
        Self {
            matrix: [[0.0; CLASSES]; CLASSES],
            counts: VerdictCounts::default(),
            total: 0,
        }
    }
}

/// Classify a labelled set and tally the verdicts.
pub fn confusion_matrix(
    model: &TrainedModel,
    images: &[Image],
    labels: &[u8],
    policy: AmbiguityPolicy,
) -> Result<Confusion, ArnError> {
    check_inputs(images, labels)?;
    let mut conf = Confusion::default();
    for (img, &truth) in images.iter().zip(labels) {
        let v = model.classify(img)?;
        conf.add(truth, &resolve_ambiguity(model, img, &v, policy));
    }
    Ok(conf)
}

/// Small geometric variations of an image.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Perturbation {
    /// Rotation angles in degrees.
    pub rotations: Vec<f64>,
    /// Shifts as (columns, rows).
    pub translations: Vec<(i32, i32)>,
}

fn sample_or_zero(img: &Image, r: isize, c: isize) -> f64 {
    if (0..SIDE as isize).contains(&r) && (0..SIDE as isize).contains(&c) {
        img.at(r as usize, c as usize)
    } else {
        0.0
    }
}

/// Nearest-neighbour rotation about the image centre.
pub fn rotate(img: &Image, degrees: f64) -> Result<Image, ArnError> {
    if degrees.abs() > 15.0 {
        return Err(ArnError::Rotation(degrees));
    }
    let (s, c) = degrees.to_radians().sin_cos();
    let mid = (SIDE as f64 - 1.0) / 2.0;
    let px: Vec<f64> = (0..PIXELS)
        .map(|i| {
            let (y, x) = ((i / SIDE) as f64 - mid, (i % SIDE) as f64 - mid);
            let sx = c * x + s * y + mid;
            let sy = -s * x + c * y + mid;
            sample_or_zero(img, sy.round() as isize, sx.round() as isize)
        })
        .collect();
    Image::from_pixels(&px)
}

pub fn translate(img: &Image, dx: i32, dy: i32) -> Result<Image, ArnError> {
    if dx.abs() > 1 || dy.abs() > 1 {
        return Err(ArnError::Translation(dx, dy));
    }
    let px: Vec<f64> = (0..PIXELS)
        .map(|i| {
            sample_or_zero(
                img,
                (i / SIDE) as isize - dy as isize,
                (i % SIDE) as isize - dx as isize,
            )
        })
        .collect();
    Image::from_pixels(&px)
}

/// Every variant named by `pert`, rotations first.
pub fn perturb(img: &Image, pert: &Perturbation) -> Result<Vec<Image>, ArnError> {
    let rotated = pert.rotations.iter().map(|&d| rotate(img, d));
    let shifted = pert
        .translations
        .iter()
        .map(|&(dx, dy)| translate(img, dx, dy));
    rotated.chain(shifted).collect()
}

/// Each image followed by its variants, labels repeated to match.
pub fn augment(
    images: &[Image],
    labels: &[u8],
    pert: &Perturbation,
) -> Result<(Vec<Image>, Vec<u8>), ArnError> {
    check_inputs(images, labels)?;
    let mut out_i = Vec::new();
    let mut out_l = Vec::new();
    for (img, &l) in images.iter().zip(labels) {
        out_i.push(img.clone());
        out_l.push(l);
        for v in perturb(img, pert)? {
            out_i.push(v);
            out_l.push(l);
        }
    }
    Ok((out_i, out_l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, ink: f64) -> Image {
        let px: Vec<f64> = (0..PIXELS)
            .map(|_| {
                if rng.gen_bool(ink) {
                    rng.gen_range(0.3..=1.0)
                } else {
                    0.0
                }
            })
            .collect();
        Image::from_pixels(&px).unwrap()
    }

    fn gradient() -> Image {
        Image::from_pixels(
            &(0..PIXELS)
                .map(|i| i as f64 / PIXELS as f64)
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn tiling() {
        let img = gradient();
        let tiles = tile_image(&img);
        for p in 0..TILE_PIXELS {
            assert_eq!(tiles[0].0[p], img.at(p / 7, p % 7));
            assert_eq!(tiles[15].0[p], img.at(21 + p / 7, 21 + p % 7));
        }
        assert_eq!(tiles[5].0[0], img.at(7, 7));
        let flat = tile_image(&Image::constant(0.4).unwrap());
        assert!(flat.iter().all(|t| t.0 == [0.4; TILE_PIXELS]));
        assert!(Image::from_pixels(&[0.0; 100]).is_err());
        assert!(Image::from_pixels(&[1.5; PIXELS]).is_err());
    }

    #[test]
    fn reversed_tiles_rotate_layout() {
        let img = gradient();
        let turned: Vec<f64> = (0..PIXELS).map(|i| img.pixels()[PIXELS - 1 - i]).collect();
        let turned = Image::from_pixels(&turned).unwrap();
        let (a, b) = (tile_image(&img), tile_image(&turned));
        for t in 0..TILES {
            let mut rev = a[TILES - 1 - t].0;
            rev.reverse();
            assert_eq!(rev, b[t].0);
        }
    }

    #[test]
    fn matching_basics() {
        let mut layer = Layer1::new(2.42, 0.9, NodeEval::Exact).unwrap();
        let t = tile_image(&gradient())[3];
        assert_eq!(l1_match(&layer, &t), L1Match::Miss);
        let i = layer.learn(&t);
        assert_eq!(i, 1);
        assert_eq!(
            l1_match(&layer, &t),
            L1Match::Winner {
                index: 1,
                output: 1.0
            }
        );
        layer.push(&t);
        assert_eq!(l1_match(&layer, &t).index(), 1);
    }

    #[test]
    fn two_pixel_example() {
        // Seed nodes whose coverages tile the unit square; the input
        // resonates most strongly with node 8.
        let mut layer = Layer1::new(2.42, 0.9, NodeEval::Exact).unwrap();
        let centres = [
            (0.1, 0.1),
            (0.5, 0.1),
            (0.9, 0.1),
            (0.1, 0.5),
            (0.9, 0.5),
            (0.1, 0.9),
            (0.9, 0.9),
            (0.5, 0.4),
        ];
        for (a, b) in centres {
            let mut px = [0.0; TILE_PIXELS];
            px[0] = a;
            px[1] = b;
            layer.push(&Tile(px));
        }
        let mut probe = [0.0; TILE_PIXELS];
        probe[0] = 0.45;
        probe[1] = 0.29;
        assert_eq!(l1_match(&layer, &Tile(probe)).index(), 8);
    }

    #[test]
    fn exact_pruning_agrees_with_full_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let imgs: Vec<_> = (0..40).map(|_| random_image(&mut rng, 0.2)).collect();
        let layer = train_layer1(
            &imgs,
            &ArnConfig {
                threshold: 0.8,
                ..ArnConfig::default()
            },
        )
        .unwrap();
        for img in imgs.iter().take(10) {
            for t in tile_image(img) {
                let full = (1..=layer.len())
                    .map(|i| (i, layer.output(i, &t)))
                    .fold((0, 0.8), |b, (i, o)| if o > b.1 { (i, o) } else { b });
                assert_eq!(layer.best_match(&t).index(), full.0);
            }
        }
    }

    #[test]
    fn retraining_same_image_adds_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = random_image(&mut rng, 0.3);
        let mut layer = Layer1::new(2.42, 0.9, NodeEval::Exact).unwrap();
        tile_image(&img).iter().for_each(|t| {
            layer.learn(t);
        });
        let n = layer.len();
        tile_image(&img).iter().for_each(|t| {
            layer.learn(t);
        });
        assert_eq!(layer.len(), n);
    }

    #[test]
    fn memorised_training_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let imgs: Vec<_> = (0..30).map(|_| random_image(&mut rng, 0.25)).collect();
        let labels: Vec<u8> = (0..30).map(|i| (i / 3) as u8).collect();
        let model = train(&imgs, &labels, &ArnConfig::default()).unwrap();
        let conf = confusion_matrix(&model, &imgs, &labels, AmbiguityPolicy::Report).unwrap();
        for (r, row) in conf.matrix.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                assert_eq!(*v, if r == c { 3.0 } else { 0.0 });
            }
        }
        for img in &imgs {
            let v = model.classify(img).unwrap();
            assert!(v.winners[0].output >= model.config.threshold2);
            assert_eq!(model.replay(&v.path), v);
        }
        assert!(train(&imgs[..1], &[12], &ArnConfig::default()).is_err());
    }

    #[test]
    fn relax_rho_prefers_closer_pattern() {
        let base = [0.2; TILE_PIXELS];
        let near = Tile([0.25; TILE_PIXELS]);
        let far = Tile([0.9; TILE_PIXELS]);
        let mut layer = Layer1::new(2.42, 0.9, NodeEval::Exact).unwrap();
        layer.push(&Tile(base));
        layer.push(&far);
        layer.push(&near);
        let probe_tiles: [Tile; TILES] = [Tile([0.3; TILE_PIXELS]); TILES];
        let mut px = vec![0.0; PIXELS];
        for (t, tile) in probe_tiles.iter().enumerate() {
            for p in 0..TILE_PIXELS {
                px[((t / 4) * 7 + p / 7) * SIDE + (t % 4) * 7 + p % 7] = tile.0[p];
            }
        }
        let img = Image::from_pixels(&px).unwrap();
        let mut a = [1usize; TILES];
        let mut b = [1usize; TILES];
        a[0] = 3;
        b[0] = 2;
        let model = TrainedModel {
            layer1: layer,
            layer2: vec![
                L2Node {
                    index: 1,
                    pattern: a,
                    label: 4,
                    rho2: 2.42,
                    threshold2: 0.9,
                },
                L2Node {
                    index: 2,
                    pattern: b,
                    label: 7,
                    rho2: 2.42,
                    threshold2: 0.9,
                },
            ],
            config: ArnConfig::default(),
        };
        let tie = model.decide(&[1; TILES]);
        assert_eq!(tie.kind, VerdictKind::Multiple);
        let r = resolve_ambiguity(
            &model,
            &img,
            &tie,
            AmbiguityPolicy::RelaxRho { delta: 0.05 },
        );
        assert_eq!((r.kind, r.label), (VerdictKind::Single, Some(4)));
        assert_eq!(
            resolve_ambiguity(&model, &img, &tie, AmbiguityPolicy::RelaxRho { delta: 0.0 }),
            tie
        );
        assert_eq!(
            resolve_ambiguity(&model, &img, &tie, AmbiguityPolicy::Report),
            tie
        );
        let single = model.decide(&a);
        assert_eq!(
            resolve_ambiguity(&model, &img, &single, AmbiguityPolicy::RELAX),
            single
        );
        let mut conf = Confusion::default();
        conf.add(4, &tie);
        assert_eq!(
            (conf.matrix[4][4], conf.matrix[4][7], conf.row_sum(4)),
            (0.5, 0.5, 1.0)
        );
    }

    #[test]
    fn faint_pixels_are_not_masked() {
        let faint = Tile([0.05; TILE_PIXELS]);
        let mut layer = Layer1::new(2.42, 0.9, NodeEval::Exact).unwrap();
        layer.push(&Tile([0.0; TILE_PIXELS]));
        assert!(layer.output(1, &faint) < 1.0);
        let mut px = [0.0; PIXELS];
        px[0] = 0.05;
        assert_eq!(tile_image(&Image::from_pixels(&px).unwrap())[0].0[0], 0.05);
    }

    #[test]
    fn perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let img = random_image(&mut rng, 0.3);
        assert_eq!(rotate(&img, 0.0).unwrap(), img);
        assert!(rotate(&img, 20.0).is_err());
        assert!(translate(&img, 2, 0).is_err());
        let back = translate(&translate(&img, 1, 0).unwrap(), -1, 0).unwrap();
        for r in 0..SIDE {
            for c in 1..SIDE - 1 {
                assert_eq!(back.at(r, c), img.at(r, c));
            }
        }
        let pert = Perturbation {
            rotations: vec![-5.0, 5.0],
            translations: vec![(1, 0)],
        };
        assert_eq!(perturb(&img, &pert).unwrap().len(), 3);
        let (i, l) = augment(std::slice::from_ref(&img), &[3], &pert).unwrap();
        assert_eq!((i.len(), l), (4, vec![3; 4]));
    }

    #[test]
    fn table_path_close_to_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let imgs: Vec<_> = (0..5).map(|_| random_image(&mut rng, 0.3)).collect();
        let ex = train_layer1(&imgs, &ArnConfig::default()).unwrap();
        let tb = Layer1::from_nodes(ex.nodes().to_vec(), 2.42, 0.9, NodeEval::Table(Method::Soi))
            .unwrap();
        for t in tile_image(&imgs[4]) {
            for i in 1..=ex.len() {
                assert!((ex.output(i, &t) - tb.output(i, &t)).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn retune_keeps_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let imgs: Vec<_> = (0..20).map(|_| random_image(&mut rng, 0.2)).collect();
        let labels: Vec<u8> = (0..20).map(|i| (i % 10) as u8).collect();
        let model = train(
            &imgs,
            &labels,
            &ArnConfig {
                threshold: 0.8,
                ..ArnConfig::default()
            },
        )
        .unwrap();
        let tuned = retune(&model, &imgs, &labels).unwrap();
        assert_eq!(tuned.layer1.len(), model.layer1.len());
        assert!(tuned.layer1.nodes().iter().all(|n| n.rho > 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn appending_nodes_leaves_outputs_alone(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let imgs: Vec<_> = (0..4).map(|_| random_image(&mut rng, 0.3)).collect();
            let mut layer = train_layer1(&imgs, &ArnConfig::default()).unwrap();
            let probes: Vec<Tile> = (0..50).map(|_| tile_image(&random_image(&mut rng, 0.3))[rng.gen_range(0..TILES)]).collect();
            let before: Vec<Vec<f64>> = probes.iter().map(|t| (1..=layer.len()).map(|i| layer.output(i, t)).collect()).collect();
            layer.push(&probes[0]);
            for (t, row) in probes.iter().zip(&before) {
                for (i, &o) in row.iter().enumerate() {
                    prop_assert_eq!(layer.output(i + 1, t), o);
                }
            }
        }
    }
}
