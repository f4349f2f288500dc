use std::fmt::Write as _;
use std::path::PathBuf;

use arn::arnnet::{
    confusion_matrix, resolve_ambiguity, train as train_model, AmbiguityPolicy, ArnConfig,
    NodeEval, VerdictKind, CLASSES,
};
use arn::dataio::{
    load_csv, load_idx, load_model, sample, save_model, Dataset, Encoding, SampleSpec, Split,
};
use clap::{Args, ValueEnum};

use crate::{node_eval, positive, unit_open, CliError, OutArgs, Outcome};

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Directory holding the four MNIST IDX files.
    #[arg(long, default_value = "data/mnist-subset")]
    pub data: PathBuf,
    /// Label-first CSV used instead of the IDX files for this split.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

impl DataArgs {
    fn load(&self, split: Split) -> Result<Dataset, CliError> {
        if let Some(csv) = &self.csv {
            return Ok(load_csv(csv, None)?);
        }
        // Official MNIST names the test split t10k.
        let stems: &[&str] = match split {
            Split::Train => &["train"],
            Split::Test => &["test", "t10k"],
        };
        let pick = |kind: &str| {
            stems
                .iter()
                .map(|st| self.data.join(format!("{st}-{kind}")))
                .find(|p| p.exists())
                .unwrap_or_else(|| self.data.join(format!("{}-{kind}", stems[0])))
        };
        Ok(load_idx(
            pick("images-idx3-ubyte"),
            pick("labels-idx1-ubyte"),
        )?)
    }

    fn draw(&self, split: Split, per_class: usize) -> Result<Dataset, CliError> {
        Ok(sample(
            &self.load(split)?,
            &SampleSpec {
                per_class,
                seed: self.seed,
                split,
            },
        )?)
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 2.42, value_parser = positive)]
    pub rho: f64,
    #[arg(long, default_value_t = 0.9, value_parser = unit_open)]
    pub threshold: f64,
    #[arg(long, default_value_t = 2.42, value_parser = positive)]
    pub rho2: f64,
    #[arg(long, default_value_t = 0.9, value_parser = unit_open)]
    pub threshold2: f64,
    /// Training images per class.
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    pub train_size: u64,
    /// Node evaluation: pwl, soi or exact.
    #[arg(long, default_value = "pwl", value_parser = node_eval)]
    pub method: NodeEval,
    /// Write reals as hex bit patterns.
    #[arg(long)]
    pub hex: bool,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Policy {
    Report,
    RelaxRho,
}

#[derive(Args, Debug)]
pub struct TestArgs {
    /// Model file; defaults to model.arn under --out.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Test images per class.
    #[arg(long, default_value_t = 60, value_parser = clap::value_parser!(u64).range(1..))]
    pub test_size: u64,
    #[arg(long, value_enum, default_value_t = Policy::Report)]
    pub policy: Policy,
    /// Relative relaxation of rho for relax-rho.
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn train(a: &TrainArgs) -> Result<Outcome, CliError> {
    let per_class = a.train_size as usize;
    let cfg = ArnConfig {
        rho: a.rho,
        threshold: a.threshold,
        rho2: a.rho2,
        threshold2: a.threshold2,
        train_size: per_class,
        seed: a.data.seed,
        eval: a.method,
    };
    let ds = a.data.draw(Split::Train, per_class)?;
    let model = train_model(&ds.normalized(), ds.labels(), &cfg)?;
    let path = a.out.out.join("model.arn");
    std::fs::create_dir_all(&a.out.out).map_err(|e| crate::io_err(&a.out.out, e))?;
    save_model(
        &model,
        &path,
        if a.hex {
            Encoding::Hex
        } else {
            Encoding::Decimal
        },
    )?;

    let mut s = String::new();
    writeln!(s, "training sample size\trho\tT\tL1 nodes\tL2 nodes").unwrap();
    writeln!(
        s,
        "{per_class}x{CLASSES}\t{}\t{}\t{}\t{}",
        a.rho,
        a.threshold,
        model.layer1.len(),
        model.layer2.len()
    )
    .unwrap();
    let mut per_label = [0usize; CLASSES];
    model
        .layer2
        .iter()
        .for_each(|n| per_label[n.label as usize] += 1);
    writeln!(s, "\nlabel\tL2 nodes").unwrap();
    for (l, n) in per_label.iter().enumerate() {
        writeln!(s, "{l}\t{n}").unwrap();
    }
    writeln!(s, "\nL1 nodes: {}", model.layer1.len()).unwrap();
    writeln!(s, "L2 nodes: {}", model.layer2.len()).unwrap();
    a.out.write("train_summary.txt", &s)?;
    print!("{s}");
    Ok(Outcome::Clean)
}

pub fn test(a: &TestArgs) -> Result<Outcome, CliError> {
    if !(0.0..1.0).contains(&a.delta) {
        return Err(CliError::Usage("--delta must lie in [0, 1)".into()));
    }
    let path = a
        .model
        .clone()
        .unwrap_or_else(|| a.out.out.join("model.arn"));
    let model = load_model(&path)?;
    let policy = match a.policy {
        Policy::Report => AmbiguityPolicy::Report,
        Policy::RelaxRho => AmbiguityPolicy::RelaxRho { delta: a.delta },
    };
    let ds = a.data.draw(Split::Test, a.test_size as usize)?;
    let images = ds.normalized();
    let conf = confusion_matrix(&model, &images, ds.labels(), policy)?;

    let mut s = String::new();
    writeln!(s, "model: {}", path.display()).unwrap();
    writeln!(s, "test sample size: {}x{CLASSES}", a.test_size).unwrap();
    writeln!(s, "policy: {:?}", a.policy).unwrap();
    writeln!(s, "accuracy: {:.2}%", 100.0 * conf.accuracy()).unwrap();
    let c = conf.counts;
    let pct = |n: usize| 100.0 * n as f64 / conf.total as f64;
    writeln!(
        s,
        "correct recognition: {} ({:.2}%)",
        c.correct,
        pct(c.correct)
    )
    .unwrap();
    writeln!(s, "wrong recognition: {} ({:.2}%)", c.wrong, pct(c.wrong)).unwrap();
    writeln!(
        s,
        "multiple recognitions: {} ({:.2}%)",
        c.multiple,
        pct(c.multiple)
    )
    .unwrap();
    writeln!(s, "no recognition: {} ({:.2}%)", c.none, pct(c.none)).unwrap();
    a.out.write("test_report.txt", &s)?;
    a.out.write("confusion.csv", &conf.to_csv())?;
    a.out.write(
        "verdicts.txt",
        &examples(&model, &images, ds.labels(), policy)?,
    )?;
    print!("{s}");
    Ok(Outcome::Clean)
}

/// First few test indices of each verdict kind with the layer-2 nodes they
/// matched.
fn examples(
    model: &arn::arnnet::TrainedModel,
    images: &[arn::arnnet::Image],
    labels: &[u8],
    policy: AmbiguityPolicy,
) -> Result<String, CliError> {
    const SHOWN: usize = 5;
    let mut rows: [Vec<String>; 4] = Default::default();
    for (i, (img, &truth)) in images.iter().zip(labels).enumerate() {
        let v = resolve_ambiguity(model, img, &model.classify(img)?, policy);
        let slot = match v.kind {
            VerdictKind::Single if v.label == Some(truth) => 0,
            VerdictKind::Single => 1,
            VerdictKind::Multiple => 2,
            VerdictKind::NoRecognition => 3,
        };
        if rows[slot].len() < SHOWN {
            let nodes: Vec<String> = v
                .winners
                .iter()
                .map(|w| format!("{}:{}", w.node, w.label))
                .collect();
            rows[slot].push(format!("{i}\t{truth}\t{}", nodes.join(" ")));
        }
    }
    let mut s =
        String::from("recognition type\ttest index\tlabel\tmatched layer-2 nodes (node:label)\n");
    let names = ["correct", "wrong", "multiple", "none"];
    for (name, lines) in names.iter().zip(&rows) {
        for l in lines {
            writeln!(s, "{name}\t{l}").unwrap();
        }
    }
    Ok(s)
}
