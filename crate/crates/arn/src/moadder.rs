//! Multi-operand addition: carry bounds and behavioural adder modules.
//!
//! The building block is a four-operand, M-bit serial adder driven by a
//! ones-count table. Larger operand counts are built as trees of these
//! modules.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AdderError {
    #[error("N = {0} is not an addition; need at least two operands")]
    TooFewOperands(u64),
    #[error("base must be at least 2, got {0}")]
    BadBase(u64),
    #[error("column count must be at least 1")]
    ZeroWidth,
    #[error("width {width} plus {carry_bits} carry bits does not fit 64 bits")]
    TooWide { width: u32, carry_bits: u32 },
    #[error("operand {index} = {value:#x} is wider than {width} bits")]
    OperandTooWide {
        index: usize,
        value: u64,
        width: u32,
    },
    #[error("{got} operands for a tree of {max}")]
    TooManyOperands { got: usize, max: usize },
}

fn check_n(n: u64) -> Result<(), AdderError> {
    if n < 2 {
        Err(AdderError::TooFewOperands(n))
    } else {
        Ok(())
    }
}

/// Upper bound on the carry out of any column: `N - 1`.
pub fn carry_upper_bound(n: u64) -> Result<u64, AdderError> {
    check_n(n)?;
    Ok(n - 1)
}

/// Largest carry out of a single base-`b` column of `N` digits.
pub fn tight_carry_bound(n: u64, b: u64) -> Result<u64, AdderError> {
    check_n(n)?;
    if b < 2 {
        return Err(AdderError::BadBase(b));
    }
    let (q, r) = (n / b, n % b);
    Ok(match (q, r) {
        (0, _) => n - 1,
        (q, 0) => n - q,
        (q, _) => n - 1 - q,
    })
}

/// Digits needed to write `v` in base `b` (at least one).
pub fn digit_count(mut v: u128, b: u128) -> u32 {
    let mut d = 1;
    while v >= b {
        v /= b;
        d += 1;
    }
    d
}

/// Digits of the worst-case carry `N - 1`.
pub fn carry_columns(n: u64, b: u64) -> Result<u32, AdderError> {
    check_n(n)?;
    if b < 2 {
        return Err(AdderError::BadBase(b));
    }
    Ok(digit_count((n - 1) as u128, b as u128))
}

/// Column sum and carry of a total `Z = b C + S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnSum {
    pub sum: u128,
    pub carry: u128,
}

impl ColumnSum {
    pub fn split(z: u128, radix: u128) -> Self {
        ColumnSum {
            sum: z % radix,
            carry: z / radix,
        }
    }
}

/// Sum and carry of `N` operands of `M` base-`b` digits, all at `b - 1`.
pub fn max_column_sum(n: u64, b: u64, m: u32) -> ColumnSum {
    let radix = (b as u128).pow(m);
    ColumnSum::split(n as u128 * (radix - 1), radix)
}

/// First operand count at which the worst-case carry of an `M`-column
/// addition needs `p + 1` digits.
pub fn column_transition(b: u64, m: u32, p: u32) -> u64 {
    let bp = b.pow(p);
    let span = b.pow(m) - 1;
    bp + bp.div_ceil(span)
}

/// Population count of a 4-bit pattern.
pub fn ones_count4(bits: u8) -> u8 {
    const TABLE: [u8; 16] = [0, 1, 1, 2, 1, 2, 2, 3, 1, 2, 2, 3, 2, 3, 3, 4];
    TABLE[(bits & 0xF) as usize]
}

fn column_bits(ops: &[u64; 4], col: u32) -> u8 {
    ops.iter()
        .enumerate()
        .fold(0, |acc, (j, &v)| acc | ((((v >> col) & 1) as u8) << j))
}

/// Result of a module evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModuleSum {
    /// Low `M` bits.
    pub sum: u64,
    /// Carry above bit `M`, at most 3.
    pub carry: u64,
    pub clocks: u32,
}

impl ModuleSum {
    pub fn value(&self, width: u32) -> u64 {
        self.carry << width | self.sum
    }
}

/// Four-operand serial adder. Each column's ones count is added to a 2-bit
/// carry buffer; the low bit is the column output and the rest shifts back
/// into the buffer.
pub fn add4xm_serial(ops: [u64; 4], width: u32) -> ModuleSum {
    let mut carry = 0u8;
    let mut sum = 0u64;
    for col in 0..width {
        let t = ones_count4(column_bits(&ops, col)) + carry;
        debug_assert!(t < 8);
        sum |= ((t & 1) as u64) << col;
        carry = t >> 1;
        debug_assert!(carry < 4);
    }
    ModuleSum {
        sum,
        carry: carry as u64,
        clocks: width + 1,
    }
}

/// Variant that keeps every column count and adds the shifted counts
/// at the end.
pub fn add4xm_stored(ops: [u64; 4], width: u32) -> u64 {
    (0..width)
        .map(|col| (ones_count4(column_bits(&ops, col)) as u64) << col)
        .sum()
}

/// Single-step 4x4 adder: all column counts at once, then combined.
pub fn add4x4_parallel(ops: [u8; 4]) -> u8 {
    let wide = ops.map(|v| (v & 0xF) as u64);
    add4xm_stored(wide, 4) as u8
}

/// Stage shape of a reconfigurable N-operand adder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdderTree {
    n: usize,
    width: u32,
    padded: usize,
    /// Sum modules per level, first level first.
    levels: Vec<usize>,
    /// Carry modules per reduction round.
    carry_rounds: Vec<usize>,
    carry_bits: u32,
}

/// Output of a tree addition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeSum {
    pub value: u64,
    pub sum: u64,
    pub carry: u64,
    /// Carries out of the carry modules, all zero by construction.
    pub carry_module_carries: Vec<u64>,
    pub clocks: u32,
}

impl AdderTree {
    pub fn build(n: usize, width: u32) -> Result<Self, AdderError> {
        check_n(n as u64)?;
        if width == 0 {
            return Err(AdderError::ZeroWidth);
        }
        let carry_bits = carry_columns(n as u64, 2)?;
        if width + carry_bits > 64 {
            return Err(AdderError::TooWide { width, carry_bits });
        }
        let mut padded = 4;
        while padded < n {
            padded *= 4;
        }
        let mut levels = Vec::new();
        let mut live = padded;
        while live > 1 {
            live /= 4;
            levels.push(live);
        }
        let mut carry_rounds = Vec::new();
        let mut live: usize = levels.iter().sum();
        while live > 1 {
            carry_rounds.push(live / 4 + usize::from(live % 4 > 1));
            live = live.div_ceil(4);
        }
        Ok(Self {
            n,
            width,
            padded,
            levels,
            carry_rounds,
            carry_bits,
        })
    }

    pub fn operands(&self) -> usize {
        self.n
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn padded(&self) -> usize {
        self.padded
    }

    /// Number of sum levels, `ceil(log4 N)`.
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn sum_modules(&self) -> usize {
        self.levels.iter().sum()
    }

    pub fn carry_modules(&self) -> usize {
        self.carry_rounds.iter().sum()
    }

    pub fn carry_bits(&self) -> u32 {
        self.carry_bits
    }

    pub fn result_bits(&self) -> u32 {
        self.width + self.carry_bits
    }

    /// Sum levels at `M + 1` clocks, then carry rounds at `w + 1`.
    pub fn latency(&self) -> u32 {
        self.depth() as u32 * (self.width + 1)
            + self.carry_rounds.len() as u32 * (self.carry_bits + 1)
    }

    pub fn add(&self, operands: &[u64]) -> Result<TreeSum, AdderError> {
        if operands.len() > self.n {
            return Err(AdderError::TooManyOperands {
                got: operands.len(),
                max: self.n,
            });
        }
        let mask = if self.width == 64 {
            u64::MAX
        } else {
            (1u64 << self.width) - 1
        };
        if let Some((index, &value)) = operands.iter().enumerate().find(|(_, &v)| v & !mask != 0) {
            return Err(AdderError::OperandTooWide {
                index,
                value,
                width: self.width,
            });
        }
        let mut live: Vec<u64> = operands.to_vec();
        live.resize(self.padded, 0);
        let mut carries = Vec::with_capacity(self.sum_modules());
        let mut clocks = 0;
        while live.len() > 1 {
            let mut next = Vec::with_capacity(live.len() / 4);
            let mut level_clocks = 0;
            for quad in live.chunks_exact(4) {
                let r = add4xm_serial([quad[0], quad[1], quad[2], quad[3]], self.width);
                next.push(r.sum);
                carries.push(r.carry);
                level_clocks = level_clocks.max(r.clocks);
            }
            clocks += level_clocks;
            live = next;
        }
        let sum = live[0];
        let mut module_carries = Vec::new();
        while carries.len() > 1 {
            let mut next = Vec::with_capacity(carries.len().div_ceil(4));
            for group in carries.chunks(4) {
                if group.len() == 1 {
                    next.push(group[0]);
                    continue;
                }
                let mut quad = [0u64; 4];
                quad[..group.len()].copy_from_slice(group);
                let r = add4xm_serial(quad, self.carry_bits);
                next.push(r.sum);
                module_carries.push(r.carry);
            }
            clocks += self.carry_bits + 1;
            carries = next;
        }
        let carry = carries.first().copied().unwrap_or(0);
        Ok(TreeSum {
            value: carry << self.width | sum,
            sum,
            carry,
            carry_module_carries: module_carries,
            clocks,
        })
    }
}
