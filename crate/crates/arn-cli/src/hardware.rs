use std::fmt::Write as _;

use arn::approx::{
    audit_error, grid, nonuniform_breakpoints, resonator_breakpoints, uniform_breakpoints, Curve,
    LutTable, Method,
};
use arn::fxp::LSB;
use arn::moadder::{
    add4xm_serial, carry_upper_bound, column_transition, digit_count, max_column_sum,
    tight_carry_bound, AdderTree,
};
use arn::neuron::{throughput_compare, ArnNeuron16, Perceptron16, ThroughputScenario, INPUTS};
use arn::SFx16;
use clap::{Args, ValueEnum};

use crate::{method, positive, CliError, OutArgs, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CurveName {
    Sigmoid,
    Tanh,
    Resonator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Spacing {
    #[value(name = "0.5")]
    Half,
    #[value(name = "0.25")]
    Quarter,
    Nonuniform,
    All,
}

#[derive(Args, Debug)]
pub struct ApproxArgs {
    #[arg(long, value_enum, default_value_t = CurveName::Sigmoid)]
    pub curve: CurveName,
    #[arg(long, default_value = "pwl", value_parser = method)]
    pub method: Method,
    #[arg(long, value_enum, default_value_t = Spacing::All)]
    pub spacing: Spacing,
    /// Sharpness of the resonator curve.
    #[arg(long, default_value_t = 2.42, value_parser = positive)]
    pub rho: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

fn curve_of(a: &ApproxArgs) -> Curve<f64> {
    match a.curve {
        CurveName::Sigmoid => Curve::Sigmoid,
        CurveName::Tanh => Curve::Tanh,
        CurveName::Resonator => Curve::Resonator { rho: a.rho },
    }
}

/// Input range the tables cover: distances up to 1 for the resonator.
fn span(curve: Curve<f64>) -> f64 {
    match curve {
        Curve::Resonator { .. } => *resonator_breakpoints().last().expect("non-empty"),
        _ => curve.domain().1,
    }
}

fn breakpoints(curve: Curve<f64>, spacing: Spacing) -> Vec<f64> {
    let hi = span(curve);
    match (spacing, curve) {
        (Spacing::Half, _) => uniform_breakpoints(0.5, hi),
        (Spacing::Quarter, _) => uniform_breakpoints(0.25, hi),
        (_, Curve::Resonator { .. }) => resonator_breakpoints(),
        _ => nonuniform_breakpoints(),
    }
}

pub fn eval_approx(a: &ApproxArgs) -> Result<Outcome, CliError> {
    let curve = curve_of(a);
    let spacings = match a.spacing {
        Spacing::All => vec![Spacing::Half, Spacing::Quarter, Spacing::Nonuniform],
        s => vec![s],
    };
    let hi = span(curve);
    let mut s = String::new();
    writeln!(s, "curve {curve}").unwrap();
    writeln!(s, "spacing\tmethod\tmax rel error %\tat x").unwrap();
    let mut last = None;
    for sp in &spacings {
        let lut = LutTable::build(curve, a.method, &breakpoints(curve, *sp))?;
        let audit = audit_error(&lut, |x| curve.value(x), &grid(0.0, hi, 50_000));
        let name = match sp {
            Spacing::Half => "uniform 0.5",
            Spacing::Quarter => "uniform 0.25",
            _ => "non-uniform",
        };
        writeln!(
            s,
            "{name}\t{}\t{:.4}\t{:.5}",
            a.method, audit.max_rel_error, audit.argmax_x
        )
        .unwrap();
        last = Some((lut, audit.max_rel_error));
    }
    let (lut, err) = last.expect("at least one spacing");
    writeln!(s, "\nmax rel error {err:.4}%").unwrap();

    writeln!(
        s,
        "\nx\ty_a (exact)\ty_i (table)\ty_o (Q4.12)\terror_i %\terror_o %\tclocks"
    )
    .unwrap();
    for x in [0.0125, 0.025, 0.0375, 0.05, 0.0625] {
        let xq = SFx16::encode(x)?;
        let y_a = curve.value(x);
        let y_i = lut.eval(x);
        let fx = lut.eval_fx(xq);
        let y_o = fx.y.decode();
        let rel = |y: f64| {
            if y_a == 0.0 {
                (y - y_a).abs()
            } else {
                ((y - y_a) / y_a).abs() * 100.0
            }
        };
        writeln!(
            s,
            "{x}\t{y_a:.9}\t{y_i:.9}\t{y_o:.9}\t{:.6}\t{:.6}\t{}",
            rel(y_i),
            rel(y_o),
            fx.clocks
        )
        .unwrap();
    }
    writeln!(s, "\nQ4.12 resolution {LSB:.3e}").unwrap();
    a.out.write("approx_errors.txt", &s)?;
    a.out.write("lut.txt", &lut.to_text())?;
    print!("{s}");
    Ok(Outcome::Clean)
}

#[derive(Args, Debug)]
pub struct AdderArgs {
    /// Digit bases to sweep, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2,8,10,16")]
    pub base: Vec<u64>,
    #[arg(long, default_value_t = 64)]
    pub max_n: u64,
    /// Largest column count M.
    #[arg(long, default_value_t = 4)]
    pub max_m: u32,
    /// Hex operands to add with the 4-operand module and the adder tree.
    #[arg(long, value_delimiter = ',')]
    pub operands: Vec<String>,
    /// Operand width in bits for --operands.
    #[arg(long, default_value_t = 16)]
    pub width: u32,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn verify_adder(a: &AdderArgs) -> Result<Outcome, CliError> {
    if a.max_n < 2 || a.max_m == 0 || a.base.iter().any(|&b| b < 2) {
        return Err(CliError::Usage(
            "need --max-n >= 2, --max-m >= 1 and bases >= 2".into(),
        ));
    }
    let mut csv = String::from("base,N,M,predicted bound,observed max carry,next transition N\n");
    let mut violations = 0;
    for &b in &a.base {
        for m in 1..=a.max_m {
            let radix = (b as u128)
                .checked_pow(m)
                .ok_or_else(|| CliError::Usage("base^M overflows".into()))?;
            for n in 2..=a.max_n {
                let predicted = tight_carry_bound(n, radix as u64)?;
                let observed = max_column_sum(n, b, m).carry;
                let digits = digit_count(observed, b as u128);
                let transition = column_transition(b, m, digits);
                if observed > carry_upper_bound(n)? as u128 || observed != predicted as u128 {
                    violations += 1;
                }
                writeln!(csv, "{b},{n},{m},{predicted},{observed},{transition}").unwrap();
            }
        }
    }
    a.out.write("adder_bounds.csv", &csv)?;
    let mut s = format!("bound violations: {violations}\n");
    let mut failed = violations > 0;
    if !a.operands.is_empty() {
        let ops: Vec<u64> = a
            .operands
            .iter()
            .map(|h| u64::from_str_radix(h.trim().trim_start_matches("0x"), 16))
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::Usage("--operands takes hex words".into()))?;
        let want: u64 = ops.iter().sum();
        if ops.len() == 4 {
            let m = add4xm_serial([ops[0], ops[1], ops[2], ops[3]], a.width);
            let got = m.value(a.width);
            writeln!(
                s,
                "4x{} module: {got:X} in {} clocks (oracle {want:X})",
                a.width, m.clocks
            )
            .unwrap();
            failed |= got != want;
        }
        let tree = AdderTree::build(ops.len().max(2), a.width)?;
        let t = tree.add(&ops)?;
        writeln!(
            s,
            "{}x{} tree: {:X} in {} clocks (oracle {want:X})",
            ops.len(),
            a.width,
            t.value,
            t.clocks
        )
        .unwrap();
        failed |= t.value != want;
    }
    writeln!(s, "oracle: {}", if failed { "FAIL" } else { "pass" }).unwrap();
    a.out.write("adder_report.txt", &s)?;
    print!("{s}");
    Ok(if failed {
        Outcome::OracleFailed
    } else {
        Outcome::Clean
    })
}

#[derive(Args, Debug)]
pub struct ThroughputArgs {
    /// Parallel area over serial area.
    #[arg(long, default_value_t = 32.0, value_parser = positive)]
    pub area_ratio: f64,
    /// Serial latency over parallel latency.
    #[arg(long, default_value_t = 17.0, value_parser = positive)]
    pub time_ratio: f64,
    /// Longest time in parallel-unit latencies.
    #[arg(long, default_value_t = 170.0, value_parser = positive)]
    pub time: f64,
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn bench_throughput(a: &ThroughputArgs) -> Result<Outcome, CliError> {
    let mut csv = String::from("time,serial ops,parallel ops,serial wins\n");
    let steps = a.steps.max(1);
    for i in 1..=steps {
        let time = a.time * i as f64 / steps as f64;
        let r = throughput_compare(&ThroughputScenario {
            area_ratio: a.area_ratio,
            time_ratio: a.time_ratio,
            time,
        })?;
        writeln!(
            csv,
            "{time},{},{},{}",
            r.serial_ops, r.parallel_ops, r.serial_wins
        )
        .unwrap();
    }
    a.out.write("throughput.csv", &csv)?;
    print!("{csv}");
    Ok(Outcome::Clean)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NeuronKind {
    Arn,
    Mlp,
    Both,
}

#[derive(Args, Debug)]
pub struct NeuronArgs {
    #[arg(long, value_enum, default_value_t = NeuronKind::Both)]
    pub kind: NeuronKind,
    #[arg(long, default_value = "pwl", value_parser = method)]
    pub method: Method,
    #[arg(long, default_value_t = 2.42, value_parser = positive)]
    pub rho: f64,
    /// Sixteen hex inputs; defaults to the built-in example.
    #[arg(long, value_delimiter = ',')]
    pub inputs: Vec<String>,
    /// Sixteen hex resonant inputs (arn) or weights (mlp).
    #[arg(long, value_delimiter = ',')]
    pub params: Vec<String>,
    /// Apply the 4/(N k^2) gain to the node sum.
    #[arg(long)]
    pub normalize: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

const ARN_X: [u16; 16] = [
    0x0800, 0x0333, 0x0547, 0x0C7A, 0x027D, 0x0428, 0x0333, 0x08F5, 0x0570, 0x0E66, 0x0970, 0x0B33,
    0x0800, 0x0A8F, 0x0FDA, 0x0DC2,
];
const ARN_XM: [u16; 16] = [
    0x0400, 0x0266, 0x0214, 0x0800, 0x00CC, 0x035C, 0x0199, 0x06E1, 0x0333, 0x0B33, 0x0666, 0x0599,
    0x03AE, 0x09C2, 0x0D1E, 0x0C51,
];
const MLP_X: [f64; 16] = [
    0.09, 0.15, 0.12, 0.05, 0.009, 0.123, 0.087, 0.201, 0.05, 0.15, 0.27, 0.02, 0.1, 0.07, 0.054,
    0.18,
];
const MLP_W: [f64; 16] = [
    0.1, 0.01, 0.2, 0.5, 0.16, 0.21, 0.19, 0.09, 0.25, 0.02, 0.12, 0.26, 0.36, 0.6, 0.29, 0.63,
];

fn words(hex: &[String], fallback: [SFx16; INPUTS]) -> Result<[SFx16; INPUTS], CliError> {
    if hex.is_empty() {
        return Ok(fallback);
    }
    let v: Vec<SFx16> = hex
        .iter()
        .map(|h| SFx16::from_hex(h.trim()))
        .collect::<Result<_, _>>()?;
    v.try_into()
        .map_err(|v: Vec<_>| CliError::Usage(format!("need 16 hex words, got {}", v.len())))
}

pub fn neuron_sim(a: &NeuronArgs) -> Result<Outcome, CliError> {
    let mut s = String::new();
    let mut failed = false;
    if a.kind != NeuronKind::Mlp {
        let xs = words(&a.inputs, ARN_X.map(SFx16::from_raw))?;
        let xm = words(&a.params, ARN_XM.map(SFx16::from_raw))?;
        let node = ArnNeuron16::uniform(a.rho, xm.map(|v| v.decode()), a.method, a.normalize)?;
        let out = node.forward(&xs)?;
        let exact: Vec<f64> = xs
            .iter()
            .zip(&xm)
            .map(|(x, m)| {
                let p = arn::Resonator::at(a.rho, m.decode());
                arn::resonance::resonate(x.decode(), &p)
            })
            .collect();
        writeln!(s, "arn node, rho {}, {} tables", a.rho, a.method).unwrap();
        writeln!(s, "x\tx_m\texact\tobtained\thex").unwrap();
        for i in 0..INPUTS {
            let r = out.resonators[i];
            writeln!(
                s,
                "{}\t{}\t{:.4}\t{:.4}\t{}",
                xs[i].to_hex(),
                xm[i].to_hex(),
                exact[i],
                r.decode(),
                r.to_hex()
            )
            .unwrap();
        }
        let raw: u64 = out.resonators.iter().map(|r| r.raw() as u64).sum();
        let ok = out.sum.raw() as u64 == raw;
        failed |= !ok;
        writeln!(
            s,
            "sum exact {:.4} obtained {:.4} {} (tree vs integer oracle: {})",
            exact.iter().sum::<f64>(),
            out.sum.decode(),
            out.sum.to_hex(),
            if ok { "pass" } else { "FAIL" }
        )
        .unwrap();
        writeln!(
            s,
            "output {:.4} {} overflow {} clocks {}\n",
            out.y.decode(),
            out.y.to_hex(),
            out.overflow,
            out.clocks
        )
        .unwrap();
    }
    if a.kind != NeuronKind::Arn {
        let xs = words(
            &a.inputs,
            MLP_X.map(|v| SFx16::encode(v).expect("in range")),
        )?;
        let ws = words(
            &a.params,
            MLP_W.map(|v| SFx16::encode(v).expect("in range")),
        )?;
        let p = Perceptron16::with_sigmoid(ws, a.method)?;
        let out = p.forward(&xs)?;
        let oracle: i64 = xs
            .iter()
            .zip(&ws)
            .map(|(x, w)| x.mul_trunc(*w).0.to_int() as i64)
            .sum();
        let ok = out.overflow || out.pre_activation.to_int() as i64 == oracle;
        failed |= !ok;
        let pre: f64 = xs
            .iter()
            .zip(&ws)
            .map(|(x, w)| x.decode() * w.decode())
            .sum();
        writeln!(s, "perceptron, {} sigmoid", a.method).unwrap();
        writeln!(s, "x\tw\tproduct").unwrap();
        for i in 0..INPUTS {
            writeln!(
                s,
                "{}\t{}\t{}",
                xs[i].to_hex(),
                ws[i].to_hex(),
                out.products[i].to_hex()
            )
            .unwrap();
        }
        writeln!(
            s,
            "sum exact on encoded operands {pre:.5} obtained {:.4} {} (truncating oracle: {})",
            out.pre_activation.decode(),
            out.pre_activation.to_hex(),
            if ok { "pass" } else { "FAIL" }
        )
        .unwrap();
        let y = 1.0 / (1.0 + (-pre).exp());
        writeln!(
            s,
            "output exact {y:.4} obtained {:.4} {} overflow {} clocks {}",
            out.y.decode(),
            out.y.to_hex(),
            out.overflow,
            out.clocks
        )
        .unwrap();
    }
    a.out.write("neuron_sim.txt", &s)?;
    print!("{s}");
    Ok(if failed {
        Outcome::OracleFailed
    } else {
        Outcome::Clean
    })
}
