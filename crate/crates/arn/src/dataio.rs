//! Dataset loading (IDX, CSV), seeded per-class sampling and model files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::arnnet::{
    ArnConfig, ArnError, Image, L1Node, L2Node, Layer1, NodeEval, TrainedModel, CLASSES, PIXELS,
    SIDE, TILES, TILE_PIXELS,
};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad magic 0x{found:08x}, expected 0x{expected:08x}")]
    Magic { expected: u32, found: u32 },
    #[error("image size {rows}x{cols}, expected 28x28")]
    Dims { rows: u32, cols: u32 },
    #[error("{images} images but {labels} labels")]
    Count { images: usize, labels: usize },
    #[error("truncated file: {missing} bytes missing")]
    Truncated { missing: usize },
    #[error("label {label} at position {position} is outside 0-9")]
    Label { position: usize, label: u8 },
    #[error("csv row {row}: {msg}")]
    Csv { row: usize, msg: String },
    #[error("class {class} has {have} samples, {need} requested")]
    Class { class: u8, have: usize, need: usize },
    #[error("per_class must be at least 1")]
    EmptySample,
    #[error("model format version {0} is not supported")]
    Version(String),
    #[error("model line {line}: {msg}")]
    Model { line: usize, msg: String },
    #[error("layer-2 node {node} refers to layer-1 node {index} but only {count} exist")]
    Reference {
        node: usize,
        index: usize,
        count: usize,
    },
    #[error(transparent)]
    Arn(#[from] ArnError),
}

fn read(path: &Path) -> Result<Vec<u8>, DataError> {
    fs::read(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), DataError> {
    fs::write(path, text).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Raw 8-bit images with labels, in file order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    images: Vec<[u8; PIXELS]>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(images: Vec<[u8; PIXELS]>, labels: Vec<u8>) -> Result<Self, DataError> {
        if images.len() != labels.len() {
            return Err(DataError::Count {
                images: images.len(),
                labels: labels.len(),
            });
        }
        if let Some((position, &label)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l as usize >= CLASSES)
        {
            return Err(DataError::Label { position, label });
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &[[u8; PIXELS]] {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Pixels scaled to [0, 1] by dividing by 255.
    pub fn normalized(&self) -> Vec<Image> {
        self.images
            .iter()
            .map(|b| Image::from_bytes(b).expect("784 bytes"))
            .collect()
    }

    pub fn select(&self, positions: &[usize]) -> Dataset {
        Dataset {
            images: positions.iter().map(|&i| self.images[i]).collect(),
            labels: positions.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn class_counts(&self) -> [usize; CLASSES] {
        let mut c = [0; CLASSES];
        self.labels.iter().for_each(|&l| c[l as usize] += 1);
        c
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        let end = self.at + n;
        if end > self.bytes.len() {
            return Err(DataError::Truncated {
                missing: end - self.bytes.len(),
            });
        }
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, DataError> {
        Ok(u32::from_be_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn magic(&mut self, expected: u32) -> Result<(), DataError> {
        match self.u32()? {
            found if found == expected => Ok(()),
            found => Err(DataError::Magic { expected, found }),
        }
    }
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<[u8; PIXELS]>, DataError> {
    let mut cur = Cursor { bytes, at: 0 };
    cur.magic(IMAGE_MAGIC)?;
    let count = cur.u32()? as usize;
    let (rows, cols) = (cur.u32()?, cur.u32()?);
    if (rows, cols) != (SIDE as u32, SIDE as u32) {
        return Err(DataError::Dims { rows, cols });
    }
    let body = cur.take(count * PIXELS)?;
    Ok(body
        .chunks_exact(PIXELS)
        .map(|c| c.try_into().expect("784 bytes"))
        .collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, DataError> {
    let mut cur = Cursor { bytes, at: 0 };
    cur.magic(LABEL_MAGIC)?;
    let count = cur.u32()? as usize;
    Ok(cur.take(count)?.to_vec())
}

pub fn load_idx(
    image_path: impl AsRef<Path>,
    label_path: impl AsRef<Path>,
) -> Result<Dataset, DataError> {
    let images = parse_idx_images(&read(image_path.as_ref())?)?;
    let labels = parse_idx_labels(&read(label_path.as_ref())?)?;
    Dataset::new(images, labels)
}

pub fn idx_bytes(ds: &Dataset) -> (Vec<u8>, Vec<u8>) {
    let n = (ds.len() as u32).to_be_bytes();
    let mut img = Vec::with_capacity(16 + ds.len() * PIXELS);
    img.extend(IMAGE_MAGIC.to_be_bytes());
    img.extend(n);
    img.extend((SIDE as u32).to_be_bytes());
    img.extend((SIDE as u32).to_be_bytes());
    ds.images.iter().for_each(|i| img.extend_from_slice(i));
    let mut lab = Vec::with_capacity(8 + ds.len());
    lab.extend(LABEL_MAGIC.to_be_bytes());
    lab.extend(n);
    lab.extend_from_slice(&ds.labels);
    (img, lab)
}

/// Label-first rows of 785 integers. `rows` limits how many are read.
pub fn parse_csv(text: &str, rows: Option<usize>) -> Result<Dataset, DataError> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (row, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .take(rows.unwrap_or(usize::MAX))
    {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != PIXELS + 1 {
            return Err(DataError::Csv {
                row,
                msg: format!("{} columns, expected {}", cells.len(), PIXELS + 1),
            });
        }
        let mut vals = [0u8; PIXELS + 1];
        for (col, (cell, v)) in cells.iter().zip(vals.iter_mut()).enumerate() {
            *v = cell.trim().parse().map_err(|_| DataError::Csv {
                row,
                msg: format!("column {col}: {cell:?} is not a byte"),
            })?;
        }
        if vals[0] as usize >= CLASSES {
            return Err(DataError::Csv {
                row,
                msg: format!("label {} is outside 0-9", vals[0]),
            });
        }
        labels.push(vals[0]);
        images.push(vals[1..].try_into().expect("784 cells"));
    }
    Dataset::new(images, labels)
}

pub fn load_csv(path: impl AsRef<Path>, rows: Option<usize>) -> Result<Dataset, DataError> {
    let bytes = read(path.as_ref())?;
    let text = String::from_utf8(bytes).map_err(|e| DataError::Csv {
        row: 0,
        msg: e.to_string(),
    })?;
    parse_csv(&text, rows)
}

pub fn csv_text(ds: &Dataset) -> String {
    let mut out = String::with_capacity(ds.len() * PIXELS * 2);
    for (img, label) in ds.images.iter().zip(&ds.labels) {
        out.push_str(&label.to_string());
        for p in img {
            write!(out, ",{p}").expect("string write");
        }
        out.push('\n');
    }
    out
}

pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    write(path.as_ref(), &csv_text(ds))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleSpec {
    pub per_class: usize,
    pub seed: u64,
    pub split: Split,
}

/// Draw `per_class` positions from each class; output is class-sorted with
/// file order kept inside a class.
pub fn sample(ds: &Dataset, spec: &SampleSpec) -> Result<Dataset, DataError> {
    if spec.per_class == 0 {
        return Err(DataError::EmptySample);
    }
    let salt = match spec.split {
        Split::Train => 0,
        Split::Test => 0x9e37_79b9_7f4a_7c15,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ salt);
    let mut chosen = Vec::with_capacity(spec.per_class * CLASSES);
    for class in 0..CLASSES as u8 {
        let members: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
        if members.len() < spec.per_class {
            return Err(DataError::Class {
                class,
                have: members.len(),
                need: spec.per_class,
            });
        }
        let mut picks: Vec<usize> = index::sample(&mut rng, members.len(), spec.per_class)
            .into_iter()
            .collect();
        picks.sort_unstable();
        chosen.extend(picks.into_iter().map(|p| members[p]));
    }
    Ok(ds.select(&chosen))
}

/// How reals are written in a model file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Encoding {
    /// Shortest decimal that reads back to the same value.
    #[default]
    Decimal,
    /// IEEE-754 bit patterns as 16 hex digits.
    Hex,
}

fn real(v: f64, enc: Encoding) -> String {
    match enc {
        Encoding::Decimal => format!("{v:?}"),
        Encoding::Hex => format!("{:016x}", v.to_bits()),
    }
}

/// Versioned text form of a model.
///
/// ```text
/// arn-model 1 decimal
/// config <rho> <threshold> <rho2> <threshold2> <train_size> <seed> <eval>
/// layer1 <count>
/// <index> <rho> <threshold> <49 resonant values>
/// layer2 <count>
/// <index> <label> <rho2> <threshold2> <16 layer-1 indices>
/// end
/// ```
pub fn model_text(m: &TrainedModel, enc: Encoding) -> String {
    let c = &m.config;
    let r = |v| real(v, enc);
    let mut s = format!(
        "arn-model {MODEL_VERSION} {}\nconfig {} {} {} {} {} {} {}\nlayer1 {}\n",
        if enc == Encoding::Hex {
            "hex"
        } else {
            "decimal"
        },
        r(c.rho),
        r(c.threshold),
        r(c.rho2),
        r(c.threshold2),
        c.train_size,
        c.seed,
        c.eval,
        m.layer1.len()
    );
    for n in m.layer1.nodes() {
        write!(s, "{} {} {}", n.index, r(n.rho), r(n.threshold)).expect("string write");
        n.resonant
            .iter()
            .for_each(|&v| write!(s, " {}", r(v)).expect("string write"));
        s.push('\n');
    }
    writeln!(s, "layer2 {}", m.layer2.len()).expect("string write");
    for n in &m.layer2 {
        write!(
            s,
            "{} {} {} {}",
            n.index,
            n.label,
            r(n.rho2),
            r(n.threshold2)
        )
        .expect("string write");
        n.pattern
            .iter()
            .for_each(|&v| write!(s, " {v}").expect("string write"));
        s.push('\n');
    }
    s.push_str("end\n");
    s
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
    enc: Encoding,
}

impl<'a> Lines<'a> {
    fn err(&self, msg: impl Into<String>) -> DataError {
        DataError::Model {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn next(&mut self) -> Result<Vec<&'a str>, DataError> {
        let (i, l) = self
            .iter
            .next()
            .ok_or_else(|| self.err("unexpected end of file"))?;
        self.line = i + 1;
        Ok(l.split_whitespace().collect())
    }

    fn keyed(&mut self, key: &str, fields: usize) -> Result<Vec<&'a str>, DataError> {
        let t = self.next()?;
        if t.first() != Some(&key) || t.len() != fields + 1 {
            return Err(self.err(format!("expected `{key}` with {fields} fields")));
        }
        Ok(t[1..].to_vec())
    }

    fn real(&self, s: &str) -> Result<f64, DataError> {
        let v = match self.enc {
            Encoding::Decimal => s.parse().ok(),
            Encoding::Hex => u64::from_str_radix(s, 16).ok().map(f64::from_bits),
        };
        v.ok_or_else(|| self.err(format!("{s:?} is not a number")))
    }

    fn int<T: std::str::FromStr>(&self, s: &str) -> Result<T, DataError> {
        s.parse()
            .map_err(|_| self.err(format!("{s:?} is not an integer")))
    }
}

pub fn parse_model(text: &str) -> Result<TrainedModel, DataError> {
    let mut ln = Lines {
        iter: text.lines().enumerate(),
        line: 0,
        enc: Encoding::Decimal,
    };
    let head = ln.next()?;
    match head.as_slice() {
        ["arn-model", v, enc] => {
            if *v != MODEL_VERSION.to_string() {
                return Err(DataError::Version(v.to_string()));
            }
            ln.enc = match *enc {
                "decimal" => Encoding::Decimal,
                "hex" => Encoding::Hex,
                e => return Err(ln.err(format!("unknown encoding {e:?}"))),
            };
        }
        ["arn-model", v, ..] => return Err(DataError::Version(v.to_string())),
        _ => return Err(ln.err("missing `arn-model` header")),
    }
    let c = ln.keyed("config", 7)?;
    let config = ArnConfig {
        rho: ln.real(c[0])?,
        threshold: ln.real(c[1])?,
        rho2: ln.real(c[2])?,
        threshold2: ln.real(c[3])?,
        train_size: ln.int(c[4])?,
        seed: ln.int(c[5])?,
        eval: c[6].parse::<NodeEval>().map_err(|e| ln.err(e))?,
    };
    let count = ln.keyed("layer1", 1)?;
    let n1: usize = ln.int(count[0])?;
    let mut l1 = Vec::with_capacity(n1);
    for k in 1..=n1 {
        let t = ln.next()?;
        if t.len() != 3 + TILE_PIXELS {
            return Err(ln.err(format!(
                "layer-1 row has {} fields, expected {}",
                t.len(),
                3 + TILE_PIXELS
            )));
        }
        let index: usize = ln.int(t[0])?;
        if index != k {
            return Err(ln.err(format!("layer-1 index {index} out of sequence")));
        }
        let mut resonant = [0.0; TILE_PIXELS];
        for (v, s) in resonant.iter_mut().zip(&t[3..]) {
            *v = ln.real(s)?;
        }
        l1.push(L1Node {
            index,
            rho: ln.real(t[1])?,
            threshold: ln.real(t[2])?,
            resonant,
        });
    }
    let count = ln.keyed("layer2", 1)?;
    let n2: usize = ln.int(count[0])?;
    let mut l2 = Vec::with_capacity(n2);
    for k in 1..=n2 {
        let t = ln.next()?;
        if t.len() != 4 + TILES {
            return Err(ln.err(format!(
                "layer-2 row has {} fields, expected {}",
                t.len(),
                4 + TILES
            )));
        }
        let index: usize = ln.int(t[0])?;
        if index != k {
            return Err(ln.err(format!("layer-2 index {index} out of sequence")));
        }
        let label: u8 = ln.int(t[1])?;
        if label as usize >= CLASSES {
            return Err(ln.err(format!("label {label} is outside 0-9")));
        }
        let mut pattern = [0usize; TILES];
        for (v, s) in pattern.iter_mut().zip(&t[4..]) {
            *v = ln.int(s)?;
            if *v > n1 {
                return Err(DataError::Reference {
                    node: index,
                    index: *v,
                    count: n1,
                });
            }
        }
        l2.push(L2Node {
            index,
            label,
            rho2: ln.real(t[2])?,
            threshold2: ln.real(t[3])?,
            pattern,
        });
    }
    ln.keyed("end", 0)?;
    let layer1 = Layer1::from_nodes(l1, config.rho, config.threshold, config.eval)?;
    Ok(TrainedModel {
        layer1,
        layer2: l2,
        config,
    })
}

pub fn save_model(
    m: &TrainedModel,
    path: impl AsRef<Path>,
    enc: Encoding,
) -> Result<(), DataError> {
    write(path.as_ref(), &model_text(m, enc))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel, DataError> {
    let bytes = read(path.as_ref())?;
    parse_model(&String::from_utf8_lossy(&bytes))
}
