//! Sixteen-input neurons on the Q4.12 datapath: the resonance node and a
//! perceptron, plus the serial-versus-parallel throughput comparison.

use thiserror::Error;

use crate::approx::{
    nonuniform_breakpoints, resonator_breakpoints, Curve, LutError, LutTable, Method,
};
use crate::fxp::SFx16;
use crate::moadder::{AdderError, AdderTree};
use crate::resonance::{resonate, ResonatorParams};

pub const INPUTS: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuronError {
    #[error(transparent)]
    Lut(#[from] LutError),
    #[error(transparent)]
    Adder(#[from] AdderError),
    #[error("resonators must share one gain")]
    MixedGain,
    #[error("ratios and time must be positive")]
    BadScenario,
}

/// Per-stage values of one node evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ArnOutput {
    pub resonators: [SFx16; INPUTS],
    pub sum: SFx16,
    pub y: SFx16,
    pub overflow: bool,
    pub clocks: u32,
}

/// Resonance node with one resonator per input.
#[derive(Debug, Clone)]
pub struct ArnNeuron16 {
    params: [ResonatorParams<f64>; INPUTS],
    method: Method,
    normalize: bool,
    luts: Vec<LutTable<f64>>,
    lut_of: [usize; INPUTS],
    tree: AdderTree,
}

impl ArnNeuron16 {
    pub fn new(
        params: [ResonatorParams<f64>; INPUTS],
        method: Method,
        normalize: bool,
    ) -> Result<Self, NeuronError> {
        if params.iter().any(|p| p.k != params[0].k) {
            return Err(NeuronError::MixedGain);
        }
        let mut rhos: Vec<f64> = Vec::new();
        let mut lut_of = [0; INPUTS];
        for (slot, p) in lut_of.iter_mut().zip(&params) {
            *slot = match rhos.iter().position(|&r| r == p.rho) {
                Some(i) => i,
                None => {
                    rhos.push(p.rho);
                    rhos.len() - 1
                }
            };
        }
        let bps = resonator_breakpoints::<f64>();
        let luts = rhos
            .iter()
            .map(|&rho| LutTable::build(Curve::Resonator { rho }, method, &bps))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            params,
            method,
            normalize,
            luts,
            lut_of,
            tree: AdderTree::build(INPUTS, 16)?,
        })
    }

    /// All resonators at sharpness `rho` with the given resonant inputs.
    pub fn uniform(
        rho: f64,
        resonant: [f64; INPUTS],
        method: Method,
        normalize: bool,
    ) -> Result<Self, NeuronError> {
        Self::new(
            resonant.map(|x_m| ResonatorParams::at(rho, x_m)),
            method,
            normalize,
        )
    }

    pub fn params(&self) -> &[ResonatorParams<f64>; INPUTS] {
        &self.params
    }

    pub fn method(&self) -> Method {
        self.method
    }

    fn gain(&self) -> f64 {
        let k = self.params[0].k;
        4.0 / (INPUTS as f64 * k * k)
    }

    /// Resonator tables, adder tree and optional gain multiply, all in Q4.12.
    pub fn forward(&self, xs: &[SFx16; INPUTS]) -> Result<ArnOutput, NeuronError> {
        let mut overflow = false;
        let mut res_clocks = 0;
        let mut resonators = [SFx16::ZERO; INPUTS];
        for (i, (x, p)) in xs.iter().zip(&self.params).enumerate() {
            let centre = SFx16::encode(p.x_m).map_err(LutError::from)?;
            let (d, o) = x.sub(centre);
            let r = self.luts[self.lut_of[i]].eval_fx(d);
            overflow |= o | r.overflow;
            // Table outputs are non-negative; clip truncation underflow.
            resonators[i] = if r.y.to_int() < 0 { SFx16::ZERO } else { r.y };
            res_clocks = res_clocks.max(r.clocks + 1);
        }
        let words: Vec<u64> = resonators.iter().map(|r| r.raw() as u64).collect();
        let total = self.tree.add(&words)?;
        overflow |= total.value > i16::MAX as u64;
        let sum = SFx16::from_raw(total.value as u16);
        let mut clocks = res_clocks + total.clocks;
        let y = if self.normalize {
            let g = SFx16::encode(self.gain()).map_err(LutError::from)?;
            let t = sum.serial_mul(g);
            overflow |= t.overflow;
            clocks += t.clocks;
            t.product
        } else {
            sum
        };
        Ok(ArnOutput {
            resonators,
            sum,
            y,
            overflow,
            clocks,
        })
    }

    /// Same node in exact arithmetic with no tables.
    pub fn forward_exact(&self, xs: &[f64; INPUTS]) -> f64 {
        let sum: f64 = xs
            .iter()
            .zip(&self.params)
            .map(|(&x, p)| resonate(x, p))
            .sum();
        if self.normalize {
            self.gain() * sum
        } else {
            sum
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpOutput {
    pub pre_activation: SFx16,
    pub y: SFx16,
    pub products: [SFx16; INPUTS],
    pub overflow: bool,
    pub clocks: u32,
}

/// Sixteen-input perceptron with a sigmoid table.
#[derive(Debug, Clone)]
pub struct Perceptron16 {
    weights: [SFx16; INPUTS],
    activation: LutTable<f64>,
    tree: AdderTree,
}

impl Perceptron16 {
    pub fn new(weights: [SFx16; INPUTS], activation: LutTable<f64>) -> Result<Self, NeuronError> {
        Ok(Self {
            weights,
            activation,
            tree: AdderTree::build(INPUTS, 16)?,
        })
    }

    /// Sigmoid on the default non-uniform schedule.
    pub fn with_sigmoid(weights: [SFx16; INPUTS], method: Method) -> Result<Self, NeuronError> {
        let lut = LutTable::build(Curve::Sigmoid, method, &nonuniform_breakpoints())?;
        Self::new(weights, lut)
    }

    pub fn weights(&self) -> &[SFx16; INPUTS] {
        &self.weights
    }

    /// All products first, then one tree addition of the two's-complement
    /// words, then the activation table.
    pub fn forward(&self, xs: &[SFx16; INPUTS]) -> Result<MlpOutput, NeuronError> {
        let mut overflow = false;
        let mut mul_clocks = 0;
        let mut products = [SFx16::ZERO; INPUTS];
        for ((p, x), w) in products.iter_mut().zip(xs).zip(&self.weights) {
            let t = x.serial_mul(*w);
            overflow |= t.overflow;
            mul_clocks = mul_clocks.max(t.clocks);
            *p = t.product;
        }
        let words: Vec<u64> = products.iter().map(|p| p.raw() as u64).collect();
        let total = self.tree.add(&words)?;
        let exact: i32 = products.iter().map(|p| p.to_int()).sum();
        overflow |= !(i16::MIN as i32..=i16::MAX as i32).contains(&exact);
        let pre_activation = SFx16::from_raw(total.value as u16);
        let act = self.activation.eval_fx(pre_activation);
        Ok(MlpOutput {
            pre_activation,
            y: act.y,
            products,
            overflow: overflow | act.overflow,
            clocks: mul_clocks + total.clocks + act.clocks,
        })
    }
}

/// Area and time ratios of a serial unit against a parallel one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThroughputScenario {
    /// Parallel area over serial area.
    pub area_ratio: f64,
    /// Serial latency over parallel latency.
    pub time_ratio: f64,
    /// Available time in parallel-unit latencies.
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Throughput {
    pub serial_ops: u64,
    pub parallel_ops: u64,
    pub serial_wins: bool,
}

/// Operations finished in `time` by one parallel unit versus as many serial
/// units as fit in the same area.
pub fn throughput_compare(s: &ThroughputScenario) -> Result<Throughput, NeuronError> {
    if !(s.area_ratio > 0.0 && s.time_ratio > 0.0 && s.time > 0.0) {
        return Err(NeuronError::BadScenario);
    }
    let parallel_ops = s.time.floor() as u64;
    let serial_ops = s.area_ratio.floor() as u64 * (s.time / s.time_ratio).floor() as u64;
    Ok(Throughput {
        serial_ops,
        parallel_ops,
        serial_wins: serial_ops > parallel_ops,
    })
}
