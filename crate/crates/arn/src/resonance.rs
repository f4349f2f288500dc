//! Exact resonator mathematics: response curves, coverage and the node
//! aggregator.

use num_traits::Float;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResonanceError {
    #[error("resonance control must be positive, got {0}")]
    NonPositiveRho(f64),
    #[error("threshold {0} must lie in (0, 0.25]")]
    BadThreshold(f64),
    #[error("scale must be nonzero")]
    ZeroScale,
    #[error("standard deviation must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("{inputs} inputs for {params} resonators")]
    LengthMismatch { inputs: usize, params: usize },
    #[error("node has no inputs")]
    Empty,
}

fn lit<F: Float>(v: f64) -> F {
    F::from(v).expect("literal fits the scalar type")
}

fn f64_of<F: Float>(v: F) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// Output level used to define coverage.
pub const HALF_POWER_T: f64 = 0.176;

/// `rho * offset` at which a resonator drops to threshold `t`.
pub fn coverage_constant<F: Float>(t: F) -> F {
    (F::one() / (lit::<F>(2.0) * t) - F::one()).acosh()
}

/// Gaussian half-power distance in units of sigma, `sqrt(ln 2)`.
pub fn half_power_alpha<F: Float>() -> F {
    lit::<F>(2.0).ln().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonatorParams<F> {
    pub rho: F,
    pub x_m: F,
    pub k: F,
    pub threshold: F,
}

impl<F: Float> ResonatorParams<F> {
    pub fn new(rho: F, x_m: F, k: F, threshold: F) -> Result<Self, ResonanceError> {
        if rho.is_nan() || rho <= F::zero() {
            return Err(ResonanceError::NonPositiveRho(f64_of(rho)));
        }
        if !(threshold > F::zero() && threshold < lit(1.0)) {
            return Err(ResonanceError::BadThreshold(f64_of(threshold)));
        }
        Ok(Self {
            rho,
            x_m,
            k,
            threshold,
        })
    }

    /// Unit gain, default threshold.
    pub fn at(rho: F, x_m: F) -> Self {
        Self {
            rho,
            x_m,
            k: F::one(),
            threshold: lit(0.9),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coverage<F> {
    pub lo: F,
    pub hi: F,
}

impl<F: Float> Coverage<F> {
    pub fn width(&self) -> F {
        self.hi - self.lo
    }

    pub fn center(&self) -> F {
        (self.lo + self.hi) / lit(2.0)
    }

    pub fn offset(&self) -> F {
        self.width() / lit(2.0)
    }

    pub fn contains(&self, x: F) -> bool {
        self.lo <= x && x <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeStats<F> {
    pub mean: F,
    pub sigma: F,
    pub alpha: F,
}

/// `x (k - x)`, peaking at `k / 2`.
pub fn resonate_basic<F: Float>(x: F, k: F) -> F {
    x * (k - x)
}

/// Logistic transform of the input about the resonant point.
pub fn sigmoid_about<F: Float>(x: F, p: &ResonatorParams<F>) -> F {
    F::one() / (F::one() + (-(p.rho * (x - p.x_m))).exp())
}

/// `X (1 - X)` for the logistic `X`; peak 1/4 at `x_m`.
pub fn resonate<F: Float>(x: F, p: &ResonatorParams<F>) -> F {
    let c = (p.rho * (x - p.x_m) / lit(2.0)).cosh();
    lit::<F>(0.25) / (c * c)
}

/// Inputs for which a resonator stays above the half-power level.
pub fn coverage_bounds<F: Float>(rho: F, x_m: F) -> Coverage<F> {
    let off = coverage_constant(lit::<F>(HALF_POWER_T)) / rho;
    Coverage {
        lo: x_m - off,
        hi: x_m + off,
    }
}

/// Coverage of `x (1 - x)` applied to the scaled input `t x`.
pub fn coverage_scaled_input<F: Float>(threshold: F, t: F) -> Result<Coverage<F>, ResonanceError> {
    if !(threshold > F::zero() && threshold <= lit(0.25)) {
        return Err(ResonanceError::BadThreshold(f64_of(threshold)));
    }
    if t == F::zero() {
        return Err(ResonanceError::ZeroScale);
    }
    let root = (F::one() - lit::<F>(4.0) * threshold).max(F::zero()).sqrt();
    let two_t = lit::<F>(2.0) * t;
    let (a, b) = ((F::one() - root) / two_t, (F::one() + root) / two_t);
    Ok(Coverage {
        lo: a.min(b),
        hi: a.max(b),
    })
}

/// Sharpness whose half-power coverage matches a Gaussian of this sigma.
pub fn rho_from_sigma<F: Float>(sigma: F) -> Result<F, ResonanceError> {
    if sigma.is_nan() || sigma <= F::zero() {
        return Err(ResonanceError::NonPositiveSigma(f64_of(sigma)));
    }
    Ok(coverage_constant(lit::<F>(HALF_POWER_T)) / (half_power_alpha::<F>() * sigma))
}

pub fn coverage_from_stats<F: Float>(s: &NodeStats<F>) -> Coverage<F> {
    let off = s.alpha * s.sigma;
    Coverage {
        lo: s.mean - off,
        hi: s.mean + off,
    }
}

/// Gaussian with unit peak.
pub fn gaussian<F: Float>(x: F, mean: F, sigma: F) -> F {
    let z = (x - mean) / sigma;
    (-(z * z) / lit(2.0)).exp()
}

/// Normalised node output `4 / (N k^2) * sum X_i (k - X_i)`, peak 1.
pub fn aggregate<F: Float>(
    xs: &[F],
    params: &[ResonatorParams<F>],
    k: F,
) -> Result<F, ResonanceError> {
    if xs.len() != params.len() {
        return Err(ResonanceError::LengthMismatch {
            inputs: xs.len(),
            params: params.len(),
        });
    }
    if xs.is_empty() {
        return Err(ResonanceError::Empty);
    }
    let n = F::from(xs.len()).expect("count");
    let sum = xs.iter().zip(params).fold(F::zero(), |acc, (&x, p)| {
        let big_x = sigmoid_about(x, p);
        acc + if k == F::one() {
            resonate(x, p)
        } else {
            big_x * (k - big_x)
        }
    });
    Ok(lit::<F>(4.0) / (n * k * k) * sum)
}

/// Aggregate of a node whose resonators share one sharpness, with unit gain.
pub fn node_output<F: Float>(xs: &[F], resonant: &[F], rho: F) -> F {
    let half = rho / lit(2.0);
    let sum = xs.iter().zip(resonant).fold(F::zero(), |acc, (&x, &m)| {
        let c = (half * (x - m)).cosh();
        acc + F::one() / (c * c)
    });
    sum / F::from(xs.len().max(1)).expect("count")
}
