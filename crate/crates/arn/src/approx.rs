//! Lookup-table approximation of sigmoid, tanh and resonator curves by
//! piecewise-linear (PWL) and second-order (SOI) interpolation.
//!
//! Tables cover the non-negative half of the input axis. Negative inputs
//! are folded back through each curve's symmetry.

use std::fmt::{self, Display, Write as _};
use std::str::FromStr;

use num_traits::Float;
use thiserror::Error;

use crate::fxp::{FxError, SFx16};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LutError {
    #[error("need at least {need} breakpoints, got {got}")]
    TooFewBreakpoints { need: usize, got: usize },
    #[error("breakpoints must be strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("breakpoint {value} outside the curve domain [{lo}, {hi}]")]
    OutsideDomain { value: f64, lo: f64, hi: f64 },
    #[error("coefficient does not fit Q4.12: {0}")]
    Encode(#[from] FxError),
    #[error("LUT text line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn lit<F: Float>(v: f64) -> F {
    F::from(v).expect("literal fits the scalar type")
}

/// Target curve of a table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Curve<F> {
    Sigmoid,
    Tanh,
    /// `X(1-X)` with `X` a sigmoid of sharpness `rho`, as a function of the
    /// distance from the resonant input.
    Resonator {
        rho: F,
    },
    Constant(F),
}

impl<F: Float> Curve<F> {
    pub fn value(&self, x: F) -> F {
        match *self {
            Curve::Sigmoid => F::one() / (F::one() + (-x).exp()),
            Curve::Tanh => x.tanh(),
            Curve::Resonator { rho } => {
                let s = (rho * x / lit(2.0)).cosh();
                lit::<F>(0.25) / (s * s)
            }
            Curve::Constant(c) => c,
        }
    }

    /// Breakpoints must lie in this range.
    pub fn domain(&self) -> (F, F) {
        match self {
            Curve::Sigmoid | Curve::Tanh => (F::zero(), lit(5.0)),
            Curve::Resonator { .. } | Curve::Constant(_) => (F::zero(), lit(8.0)),
        }
    }

    /// Output for inputs beyond the last breakpoint.
    pub fn saturation(&self) -> F {
        match *self {
            Curve::Sigmoid | Curve::Tanh => F::one(),
            Curve::Resonator { .. } => F::zero(),
            Curve::Constant(c) => c,
        }
    }

    fn fold(&self, neg: bool, y: F) -> F {
        match (self, neg) {
            (Curve::Sigmoid, true) => F::one() - y,
            (Curve::Tanh, true) => -y,
            _ => y,
        }
    }
}

impl<F: Float + Display> Display for Curve<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Curve::Sigmoid => write!(f, "sigmoid"),
            Curve::Tanh => write!(f, "tanh"),
            Curve::Resonator { rho } => write!(f, "resonator:{rho}"),
            Curve::Constant(c) => write!(f, "constant:{c}"),
        }
    }
}

impl<F: Float + FromStr> FromStr for Curve<F> {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |v: &str| v.parse::<F>().map_err(|_| format!("bad number {v:?}"));
        match s.split_once(':') {
            None if s == "sigmoid" => Ok(Curve::Sigmoid),
            None if s == "tanh" => Ok(Curve::Tanh),
            Some(("resonator", v)) => Ok(Curve::Resonator { rho: num(v)? }),
            Some(("constant", v)) => Ok(Curve::Constant(num(v)?)),
            _ => Err(format!("unknown curve {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Pwl,
    Soi,
}

impl Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Pwl => "pwl",
            Method::Soi => "soi",
        })
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pwl" => Ok(Method::Pwl),
            "soi" => Ok(Method::Soi),
            _ => Err(format!("unknown method {s:?} (pwl|soi)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PwlSegment<F> {
    pub x1: F,
    pub y1: F,
    pub m: F,
}

/// Quadratic `(a x + b) x + c` in absolute `x`, valid from `x_lo`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoiSegment<F> {
    pub x_lo: F,
    pub a: F,
    pub b: F,
    pub c: F,
}

impl<F: Float> SoiSegment<F> {
    /// Quadratic through three points.
    pub fn through(p1: (F, F), p2: (F, F), p3: (F, F)) -> Self {
        let ((x1, y1), (x2, y2), (x3, y3)) = (p1, p2, p3);
        let a =
            ((x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1)) / ((x2 - x1) * (x3 - x1) * (x3 - x2));
        let b = ((y2 - y1) - a * (x2 * x2 - x1 * x1)) / (x2 - x1);
        let c = y1 - a * x1 * x1 - b * x1;
        SoiSegment { x_lo: x1, a, b, c }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Segments<F> {
    Pwl(Vec<PwlSegment<F>>),
    Soi(Vec<SoiSegment<F>>),
}

/// Fixed-point evaluation result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FxEval {
    pub y: SFx16,
    pub overflow: bool,
    pub clocks: u32,
}

/// Clocks spent fetching the three stored coefficients.
pub const FETCH_CLOCKS: u32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct LutTable<F> {
    curve: Curve<F>,
    method: Method,
    breakpoints: Vec<F>,
    segments: Segments<F>,
    fx_x: Vec<SFx16>,
    fx_coef: Vec<[SFx16; 3]>,
    fx_sat: SFx16,
}

/// Round to nearest; stored constants are prepared offline.
fn encode_const(v: f64) -> Result<SFx16, FxError> {
    let r = (v * 4096.0).round();
    if !(-32768.0..=32767.0).contains(&r) {
        return Err(FxError::OutOfRange {
            value: v,
            kind: "signed",
        });
    }
    Ok(SFx16::from_raw(r as i16 as u16))
}

impl<F: Float> LutTable<F> {
    /// Build a table from exact curve values at `breakpoints`.
    ///
    /// SOI segments interpolate through both ends and the midpoint of each
    /// interval.
    pub fn build(curve: Curve<F>, method: Method, breakpoints: &[F]) -> Result<Self, LutError> {
        if breakpoints.len() < 2 {
            return Err(LutError::TooFewBreakpoints {
                need: 2,
                got: breakpoints.len(),
            });
        }
        if let Some(i) = breakpoints.windows(2).position(|w| w[1] <= w[0]) {
            return Err(LutError::NotIncreasing(i + 1));
        }
        let (lo, hi) = curve.domain();
        if let Some(&v) = breakpoints.iter().find(|&&v| v < lo || v > hi) {
            return Err(LutError::OutsideDomain {
                value: v.to_f64().unwrap_or(f64::NAN),
                lo: lo.to_f64().unwrap_or(0.0),
                hi: hi.to_f64().unwrap_or(0.0),
            });
        }
        let f = |x: F| curve.value(x);
        let pairs = breakpoints.windows(2);
        let segments = match method {
            Method::Pwl => Segments::Pwl(
                pairs
                    .map(|w| PwlSegment {
                        x1: w[0],
                        y1: f(w[0]),
                        m: (f(w[1]) - f(w[0])) / (w[1] - w[0]),
                    })
                    .collect(),
            ),
            Method::Soi => Segments::Soi(
                pairs
                    .map(|w| {
                        let mid = (w[0] + w[1]) / lit(2.0);
                        SoiSegment::through((w[0], f(w[0])), (mid, f(mid)), (w[1], f(w[1])))
                    })
                    .collect(),
            ),
        };
        let as64 = |v: F| v.to_f64().unwrap_or(f64::NAN);
        let fx_x = breakpoints
            .iter()
            .map(|&x| SFx16::encode(as64(x)))
            .collect::<Result<_, _>>()?;
        let fx_coef = match &segments {
            Segments::Pwl(s) => s
                .iter()
                .map(|s| {
                    Ok([
                        encode_const(as64(s.m))?,
                        encode_const(as64(s.x1))?,
                        encode_const(as64(s.y1))?,
                    ])
                })
                .collect::<Result<_, FxError>>()?,
            Segments::Soi(s) => s
                .iter()
                .map(|s| {
                    Ok([
                        encode_const(as64(s.a))?,
                        encode_const(as64(s.b))?,
                        encode_const(as64(s.c))?,
                    ])
                })
                .collect::<Result<_, FxError>>()?,
        };
        let fx_sat = encode_const(as64(curve.saturation()).min(8.0 - 1.0 / 4096.0))?;
        Ok(Self {
            curve,
            method,
            breakpoints: breakpoints.to_vec(),
            segments,
            fx_x,
            fx_coef,
            fx_sat,
        })
    }

    pub fn curve(&self) -> Curve<F> {
        self.curve
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn breakpoints(&self) -> &[F] {
        &self.breakpoints
    }

    pub fn segments(&self) -> &Segments<F> {
        &self.segments
    }

    pub fn domain(&self) -> (F, F) {
        (
            self.breakpoints[0],
            *self.breakpoints.last().expect("non-empty"),
        )
    }

    pub fn segment_count(&self) -> usize {
        self.breakpoints.len() - 1
    }

    /// Stored 16-bit words per segment, the breakpoint excluded.
    pub fn words_per_segment(&self) -> usize {
        match self.method {
            Method::Pwl => 2,
            Method::Soi => 3,
        }
    }

    fn segment_index(&self, x: F) -> usize {
        let last = self.segment_count() - 1;
        self.breakpoints[..=last]
            .iter()
            .rposition(|&b| b <= x)
            .unwrap_or(0)
    }

    /// Approximate the curve at `x` in exact arithmetic.
    pub fn eval(&self, x: F) -> F {
        let neg = x < F::zero();
        let ax = x.abs();
        let (lo, hi) = self.domain();
        let y = if ax > hi {
            self.curve.saturation()
        } else if ax < lo {
            self.curve.value(lo)
        } else {
            let i = self.segment_index(ax);
            match &self.segments {
                Segments::Pwl(s) => s[i].m * (ax - s[i].x1) + s[i].y1,
                Segments::Soi(s) => (s[i].a * ax + s[i].b) * ax + s[i].c,
            }
        };
        self.curve.fold(neg, y)
    }

    /// Approximate the curve with every step done in Q4.12.
    ///
    /// Clocks count the coefficient fetch, each serial multiply and one
    /// per add or subtract.
    pub fn eval_fx(&self, x: SFx16) -> FxEval {
        let neg = x.to_int() < 0;
        let (ax, mut overflow) = if neg { SFx16::ZERO.sub(x) } else { (x, false) };
        let hi = *self.fx_x.last().expect("non-empty");
        let mut clocks = FETCH_CLOCKS;
        let y = if ax.to_int() > hi.to_int() {
            self.fx_sat
        } else {
            let i = self.fx_x[..self.fx_x.len() - 1]
                .iter()
                .rposition(|b| b.to_int() <= ax.to_int())
                .unwrap_or(0);
            let [k0, k1, k2] = self.fx_coef[i];
            let mut step = |r: (SFx16, bool), c: u32| {
                overflow |= r.1;
                clocks += c;
                r.0
            };
            match self.method {
                Method::Pwl => {
                    let dx = step(ax.sub(k1), 1);
                    let t = k0.serial_mul(dx);
                    let p = step((t.product, t.overflow), t.clocks);
                    step(p.add(k2), 1)
                }
                Method::Soi => {
                    let t = k0.serial_mul(ax);
                    let p = step((t.product, t.overflow), t.clocks);
                    let s = step(p.add(k1), 1);
                    let t = s.serial_mul(ax);
                    let q = step((t.product, t.overflow), t.clocks);
                    step(q.add(k2), 1)
                }
            }
        };
        let y = match (self.curve, neg) {
            (Curve::Sigmoid, true) => {
                clocks += 1;
                let (r, o) = SFx16::from_raw(0x1000).sub(y);
                overflow |= o;
                r
            }
            (Curve::Tanh, true) => {
                clocks += 1;
                SFx16::ZERO.sub(y).0
            }
            _ => y,
        };
        FxEval {
            y,
            overflow,
            clocks,
        }
    }
}

/// Bytes needed to store several tables that share one breakpoint column.
///
/// Returns `None` if the tables do not share breakpoints and method.
pub fn shared_storage_bytes<F: Float>(tables: &[&LutTable<F>]) -> Option<usize> {
    let first = tables.first()?;
    if tables
        .iter()
        .any(|t| t.breakpoints != first.breakpoints || t.method != first.method)
    {
        return None;
    }
    let words = first.breakpoints.len()
        + tables
            .iter()
            .map(|t| t.segment_count() * t.words_per_segment())
            .sum::<usize>();
    Some(2 * words)
}

/// Evenly spaced breakpoints from 0 to `max` inclusive.
pub fn uniform_breakpoints<F: Float>(spacing: F, max: F) -> Vec<F> {
    let n = (max / spacing).round().to_usize().expect("finite spacing");
    (0..=n)
        .map(|i| F::from(i).expect("index") * spacing)
        .collect()
}

/// Fine spacing near the knee and coarse spacing on the tail: 1/32 on
/// [0, 1] and 1/8 on (1, 5].
pub fn nonuniform_breakpoints<F: Float>() -> Vec<F> {
    let fine = (0..32).map(|i| lit::<F>(i as f64 / 32.0));
    let coarse = (0..=32).map(|i| lit::<F>(1.0 + i as f64 / 8.0));
    fine.chain(coarse).collect()
}

/// Default resonator schedule: 0.1 spacing on distances [0, 1].
pub fn resonator_breakpoints<F: Float>() -> Vec<F> {
    (0..=10).map(|i| lit::<F>(i as f64 / 10.0)).collect()
}

/// Default resonance control grid.
pub const RHO_GRID: [f64; 6] = [1.0, 1.76, 2.0, 2.42, 3.0, 5.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditPoint<F> {
    pub x: F,
    pub approx: F,
    pub exact: F,
    /// Percent relative error, or the absolute error if `absolute`.
    pub error: F,
    pub absolute: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Audit<F> {
    pub max_rel_error: F,
    pub argmax_x: F,
    pub points: Vec<AuditPoint<F>>,
}

/// Percent relative error of the table against `exact` on `grid`.
///
/// Points where the exact value is zero report absolute error and are
/// left out of the maximum.
pub fn audit_error<F: Float>(lut: &LutTable<F>, exact: impl Fn(F) -> F, grid: &[F]) -> Audit<F> {
    let points: Vec<_> = grid
        .iter()
        .map(|&x| {
            let (approx, exact) = (lut.eval(x), exact(x));
            let absolute = exact == F::zero();
            let diff = (approx - exact).abs();
            let error = if absolute {
                diff
            } else {
                diff / exact.abs() * lit(100.0)
            };
            AuditPoint {
                x,
                approx,
                exact,
                error,
                absolute,
            }
        })
        .collect();
    let (max_rel_error, argmax_x) = points.iter().filter(|p| !p.absolute).fold(
        (F::zero(), grid.first().copied().unwrap_or_else(F::zero)),
        |acc, p| {
            if p.error > acc.0 {
                (p.error, p.x)
            } else {
                acc
            }
        },
    );
    Audit {
        max_rel_error,
        argmax_x,
        points,
    }
}

/// Evenly spaced audit grid over `[lo, hi]`.
pub fn grid<F: Float>(lo: F, hi: F, steps: usize) -> Vec<F> {
    let n = F::from(steps).expect("step count");
    (0..=steps)
        .map(|i| lo + (hi - lo) * F::from(i).expect("index") / n)
        .collect()
}

impl<F: Float + Display> LutTable<F> {
    /// Plain-text dump, one segment per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let names = match self.method {
            Method::Pwl => "x1 m y1",
            Method::Soi => "x_lo a b c",
        };
        let _ = writeln!(
            out,
            "lut {} {} {}",
            self.curve,
            self.method,
            self.segment_count()
        );
        let _ = writeln!(out, "# {names} | hex");
        for (i, w) in self.breakpoints.windows(2).enumerate() {
            let coef: Vec<F> = match &self.segments {
                Segments::Pwl(s) => vec![s[i].m, s[i].y1],
                Segments::Soi(s) => vec![s[i].a, s[i].b, s[i].c],
            };
            let dec: Vec<String> = std::iter::once(w[0])
                .chain(coef)
                .map(|v| v.to_string())
                .collect();
            let [c0, c1, c2] = self.fx_coef[i];
            let hex = match self.method {
                Method::Pwl => format!("{} {} {}", self.fx_x[i], c0, c2),
                Method::Soi => format!("{} {} {} {}", self.fx_x[i], c0, c1, c2),
            };
            let _ = writeln!(out, "{} | {hex}", dec.join(" "));
        }
        let _ = writeln!(
            out,
            "end {} | {}",
            w_last(&self.breakpoints),
            self.fx_x.last().expect("non-empty")
        );
        out
    }
}

fn w_last<F: Copy>(v: &[F]) -> F {
    *v.last().expect("non-empty")
}

impl<F: Float + Display + FromStr> LutTable<F> {
    /// Parse a dump produced by [`LutTable::to_text`].
    ///
    /// The table is rebuilt from its curve and breakpoints and the stored
    /// coefficients are checked against the rebuild.
    pub fn from_text(text: &str) -> Result<Self, LutError> {
        let err = |line: usize, msg: String| LutError::Parse { line, msg };
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        let (n0, head) = lines.next().ok_or_else(|| err(1, "empty input".into()))?;
        let h: Vec<&str> = head.split_whitespace().collect();
        if h.len() != 4 || h[0] != "lut" {
            return Err(err(
                n0 + 1,
                "expected `lut <curve> <method> <segments>`".into(),
            ));
        }
        let curve: Curve<F> = h[1].parse().map_err(|m| err(n0 + 1, m))?;
        let method: Method = h[2].parse().map_err(|m| err(n0 + 1, m))?;
        let count: usize = h[3]
            .parse()
            .map_err(|_| err(n0 + 1, "bad segment count".into()))?;
        let mut bps = Vec::with_capacity(count + 1);
        let mut coefs = Vec::with_capacity(count);
        for (n, line) in lines {
            let dec = line.split('|').next().unwrap_or("");
            let mut fields = dec.split_whitespace();
            let first = fields
                .next()
                .ok_or_else(|| err(n + 1, "empty row".into()))?;
            let parse = |s: &str| {
                s.parse::<F>()
                    .map_err(|_| err(n + 1, format!("bad number {s:?}")))
            };
            if first == "end" {
                let x = fields
                    .next()
                    .ok_or_else(|| err(n + 1, "missing end breakpoint".into()))?;
                bps.push(parse(x)?);
                break;
            }
            bps.push(parse(first)?);
            coefs.push(fields.map(parse).collect::<Result<Vec<F>, _>>()?);
        }
        if coefs.len() != count || bps.len() != count + 1 {
            return Err(err(
                0,
                format!("expected {count} segments, found {}", coefs.len()),
            ));
        }
        let table = Self::build(curve, method, &bps)?;
        let tol: F = lit(1e-9);
        for (i, c) in coefs.iter().enumerate() {
            let want: Vec<F> = match &table.segments {
                Segments::Pwl(s) => vec![s[i].m, s[i].y1],
                Segments::Soi(s) => vec![s[i].a, s[i].b, s[i].c],
            };
            if c.len() != want.len() || c.iter().zip(&want).any(|(a, b)| (*a - *b).abs() > tol) {
                return Err(err(
                    0,
                    format!("segment {i} coefficients disagree with the curve"),
                ));
            }
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    fn max_err(curve: Curve<f64>, method: Method, bps: &[f64], hi: f64) -> f64 {
        let lut = LutTable::build(curve, method, bps).unwrap();
        audit_error(&lut, |x| curve.value(x), &grid(0.0, hi, 50_000)).max_rel_error
    }

    #[test]
    fn stored_rows() {
        let bps = [0.0, 0.25, 0.5, 0.75, 1.0];
        let soi = LutTable::build(Curve::Sigmoid, Method::Soi, &bps).unwrap();
        let Segments::Soi(s) = soi.segments() else {
            unreachable!()
        };
        assert!((s[0].a + 0.0077).abs() < 1e-4 && (s[0].b - 0.2506).abs() < 1e-4);
        assert!((s[0].c - 0.5).abs() < 1e-12);
        assert!(
            (s[3].a + 0.0426).abs() < 1e-4
                && (s[3].b - 0.2821).abs() < 1e-4
                && (s[3].c - 0.4915).abs() < 1e-4
        );
        let pwl = LutTable::build(Curve::Sigmoid, Method::Pwl, &bps).unwrap();
        let Segments::Pwl(p) = pwl.segments() else {
            unreachable!()
        };
        assert!((p[1].y1 - 0.5622).abs() < 2e-4 && (p[1].m - 0.2411).abs() < 1e-4);
        assert!((p[3].y1 - 0.6792).abs() < 2e-4 && (p[3].m - 0.2075).abs() < 1e-4);
        let fine = LutTable::build(
            Curve::Sigmoid,
            Method::Pwl,
            &nonuniform_breakpoints::<f64>(),
        )
        .unwrap();
        let Segments::Pwl(p) = fine.segments() else {
            unreachable!()
        };
        assert!((p[0].m - 0.2499).abs() < 1e-4 && p[0].y1 == 0.5);
    }

    #[test]
    fn constant_curve() {
        let c = Curve::Constant(1.0);
        let p = LutTable::build(c, Method::Pwl, &[0.0, 0.3, 1.0]).unwrap();
        let Segments::Pwl(s) = p.segments() else {
            unreachable!()
        };
        assert!(s.iter().all(|s| s.m == 0.0));
        let q = LutTable::build(c, Method::Soi, &[0.0, 0.3, 1.0]).unwrap();
        let Segments::Soi(s) = q.segments() else {
            unreachable!()
        };
        assert!(s.iter().all(|s| s.a == 0.0 && s.b == 0.0 && s.c == 1.0));
    }

    #[test]
    fn build_rejects_bad_breakpoints() {
        assert!(matches!(
            LutTable::build(Curve::Sigmoid, Method::Pwl, &[0.0]),
            Err(LutError::TooFewBreakpoints { .. })
        ));
        assert_eq!(
            LutTable::build(Curve::Sigmoid, Method::Soi, &[0.0, 0.5, 0.5]),
            Err(LutError::NotIncreasing(2))
        );
        assert!(LutTable::build(Curve::<f64>::Tanh, Method::Pwl, &[0.0, 6.0]).is_err());
    }

    #[test]
    fn saturation_and_symmetry() {
        let lut = LutTable::build(
            Curve::Sigmoid,
            Method::Pwl,
            &nonuniform_breakpoints::<f64>(),
        )
        .unwrap();
        assert_eq!(lut.eval(7.2), 1.0);
        assert_eq!(lut.eval(-7.2), 0.0);
        assert!((lut.eval(-0.4) - (1.0 - lut.eval(0.4))).abs() < 1e-15);
        let t =
            LutTable::build(Curve::Tanh, Method::Soi, &nonuniform_breakpoints::<f64>()).unwrap();
        assert_eq!(t.eval(-0.7), -t.eval(0.7));
        assert_eq!(t.eval(9.0), 1.0);
    }

    #[test]
    fn sigmoid_error_table() {
        let u5 = uniform_breakpoints(0.5, 5.0);
        let u25 = uniform_breakpoints(0.25, 5.0);
        let pwl5 = max_err(Curve::Sigmoid, Method::Pwl, &u5, 5.0);
        let pwl25 = max_err(Curve::Sigmoid, Method::Pwl, &u25, 5.0);
        assert!((pwl5 - 0.3838).abs() < 0.002, "{pwl5}");
        assert!((pwl25 - 0.0974).abs() < 0.001, "{pwl25}");
        assert!(pwl25 < pwl5);
        let nu = nonuniform_breakpoints();
        assert!(max_err(Curve::Sigmoid, Method::Pwl, &nu, 5.0) <= 0.03);
        assert!(max_err(Curve::Sigmoid, Method::Soi, &nu, 5.0) <= 0.002);
        let soi125 = max_err(
            Curve::Sigmoid,
            Method::Soi,
            &uniform_breakpoints(0.125, 5.0),
            5.0,
        );
        assert!(soi125 < 0.005, "{soi125}");
    }

    #[test]
    fn fixed_point_rows() {
        let nu = nonuniform_breakpoints::<f64>();
        for m in [Method::Pwl, Method::Soi] {
            let lut = LutTable::build(Curve::Sigmoid, m, &nu).unwrap();
            for x in [0.0125, 0.025, 0.0375, 0.05, 0.0625] {
                let xq = SFx16::encode(x).unwrap();
                let r = lut.eval_fx(xq);
                let want = sig(xq.decode());
                assert!(!r.overflow);
                assert!(
                    (r.y.decode() - want).abs() / want * 100.0 <= 0.05,
                    "{m} {x}"
                );
            }
            let z = lut.eval_fx(SFx16::ZERO);
            assert!((z.y.to_int() - 0x0800).abs() <= 1);
        }
    }

    #[test]
    fn clock_accounting() {
        let pwl = LutTable::build(
            Curve::Sigmoid,
            Method::Pwl,
            &nonuniform_breakpoints::<f64>(),
        )
        .unwrap();
        let soi = LutTable::build(
            Curve::Sigmoid,
            Method::Soi,
            &nonuniform_breakpoints::<f64>(),
        )
        .unwrap();
        for x in grid(-6.0, 6.0, 500) {
            let x = SFx16::encode(x).unwrap();
            assert!(pwl.eval_fx(x).clocks <= FETCH_CLOCKS + 2 + 16 + 1);
            assert!(soi.eval_fx(x).clocks <= FETCH_CLOCKS + 2 + 2 * 16 + 1);
        }
    }

    #[test]
    fn resonator_storage() {
        let bps = resonator_breakpoints::<f64>();
        for (m, bytes) in [(Method::Pwl, 182), (Method::Soi, 262)] {
            let tables: Vec<_> = [1.76, 2.0, 2.42, 3.0]
                .iter()
                .map(|&rho| LutTable::build(Curve::Resonator { rho }, m, &bps).unwrap())
                .collect();
            let refs: Vec<_> = tables.iter().collect();
            assert_eq!(shared_storage_bytes(&refs), Some(bytes));
        }
    }

    #[test]
    fn text_round_trip() {
        for m in [Method::Pwl, Method::Soi] {
            let lut = LutTable::build(Curve::Resonator { rho: 2.42 }, m, &resonator_breakpoints())
                .unwrap();
            let text = lut.to_text();
            assert_eq!(LutTable::<f64>::from_text(&text).unwrap(), lut);
        }
        assert!(LutTable::<f64>::from_text("lut sigmoid pwl 3\n0 1 2\n").is_err());
    }

    #[test]
    fn works_in_f32() {
        let lut =
            LutTable::<f32>::build(Curve::Sigmoid, Method::Pwl, &nonuniform_breakpoints()).unwrap();
        assert!((lut.eval(1.0) - 0.7310586).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn breakpoints_are_exact(i in 0usize..65) {
            let bps = nonuniform_breakpoints::<f64>();
            for m in [Method::Pwl, Method::Soi] {
                let lut = LutTable::build(Curve::Sigmoid, m, &bps).unwrap();
                prop_assert!((lut.eval(bps[i]) - sig(bps[i])).abs() < 1e-14);
            }
        }

        #[test]
        fn pwl_within_curvature_bound(rho in 0.5f64..6.0, seg in 0usize..10) {
            let curve = Curve::Resonator { rho };
            let bps = resonator_breakpoints::<f64>();
            let lut = LutTable::build(curve, Method::Pwl, &bps).unwrap();
            let (x1, x2) = (bps[seg], bps[seg + 1]);
            let h = 1e-4;
            let pts = grid(x1, x2, 200);
            let d2 = pts
                .iter()
                .map(|&x| ((curve.value(x + h) - 2.0 * curve.value(x) + curve.value(x - h)) / (h * h)).abs())
                .fold(0.0, f64::max);
            let bound = d2 * (x2 - x1).powi(2) / 8.0 + 1e-9;
            for x in pts {
                prop_assert!((lut.eval(x) - curve.value(x)).abs() <= bound);
            }
        }

        #[test]
        fn pwl_continuous(i in 1usize..64) {
            let bps = nonuniform_breakpoints::<f64>();
            let lut = LutTable::build(Curve::Tanh, Method::Pwl, &bps).unwrap();
            let Segments::Pwl(s) = lut.segments() else { unreachable!() };
            let left = s[i - 1].m * (bps[i] - s[i - 1].x1) + s[i - 1].y1;
            prop_assert!((left - s[i].y1).abs() < 1e-12);
        }

        #[test]
        fn fixed_point_tracks_exact(x in 0.0f64..5.0) {
            let nu = nonuniform_breakpoints::<f64>();
            let xq = SFx16::encode(x).unwrap();
            let xd = xq.decode();
            let lsb = 1.0 / 4096.0;
            let pwl = LutTable::build(Curve::Sigmoid, Method::Pwl, &nu).unwrap();
            prop_assert!((pwl.eval_fx(xq).y.decode() - pwl.eval(xd)).abs() <= 3.0 * lsb);
            let soi = LutTable::build(Curve::Sigmoid, Method::Soi, &nu).unwrap();
            let bound = (0.5 * xd * xd + 1.5 * xd + 2.0) * lsb;
            prop_assert!((soi.eval_fx(xq).y.decode() - soi.eval(xd)).abs() <= bound);
        }
    }
}
