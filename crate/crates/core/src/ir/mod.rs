//! Straight-line arithmetic IR shared by prediction, cost accounting and C
//! emission.
//!
//! Every instruction that produces a value defines a fresh register, in
//! program order, so registers are single-assignment by construction. There
//! are no branches: clamps use `min`/`max` and choices use `select`, which
//! makes the dynamic instruction count equal to the static one.

mod cost;
mod interp;
mod reference;

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cost::{estimate_memory, CostTable, MemoryEstimate, Opcode};
pub use interp::interpret;
pub use reference::lower_reference;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Reg(pub u32);

impl Reg {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Softsign,
    Exp,
    Gaussian,
    HardSigmoid,
}

impl Activation {
    pub const ALL: [Activation; 7] = [
        Activation::Exp,
        Activation::Gaussian,
        Activation::Sigmoid,
        Activation::Relu,
        Activation::HardSigmoid,
        Activation::Tanh,
        Activation::Softsign,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Softsign => "softsign",
            Activation::Exp => "exp",
            Activation::Gaussian => "gaussian",
            Activation::HardSigmoid => "hard_sigmoid",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
            Activation::Softsign => x / (1.0 + x.abs()),
            Activation::Exp => x.exp(),
            Activation::Gaussian => (-x * x).exp(),
            Activation::HardSigmoid => (0.2 * x + 0.5).clamp(0.0, 1.0),
        }
    }

    /// Derivative with respect to the pre-activation.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = self.apply(x);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Softsign => {
                let d = 1.0 + x.abs();
                1.0 / (d * d)
            }
            Activation::Exp => x.exp(),
            Activation::Gaussian => -2.0 * x * (-x * x).exp(),
            Activation::HardSigmoid => {
                if (-2.5..=2.5).contains(&x) {
                    0.2
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op {
    LoadInput(u32),
    LoadConst(f64),
    LoadState(u32),
    StoreState(u32, Reg),
    Add(Reg, Reg),
    Sub(Reg, Reg),
    Mul(Reg, Reg),
    Div(Reg, Reg),
    Min(Reg, Reg),
    Max(Reg, Reg),
    /// 1.0 when `a < b`, else 0.0.
    CompareLt(Reg, Reg),
    /// `cond != 0 ? a : b`.
    Select(Reg, Reg, Reg),
    FloorToIndex(Reg),
    TableRead(u32, Reg),
    Activation(Activation, Reg),
}

impl Op {
    pub fn opcode(&self) -> Opcode {
        match self {
            Op::LoadInput(_) => Opcode::LoadInput,
            Op::LoadConst(_) => Opcode::LoadConst,
            Op::LoadState(_) => Opcode::LoadState,
            Op::StoreState(..) => Opcode::StoreState,
            Op::Add(..) => Opcode::Add,
            Op::Sub(..) => Opcode::Sub,
            Op::Mul(..) => Opcode::Mul,
            Op::Div(..) => Opcode::Div,
            Op::Min(..) => Opcode::Min,
            Op::Max(..) => Opcode::Max,
            Op::CompareLt(..) => Opcode::CompareLt,
            Op::Select(..) => Opcode::Select,
            Op::FloorToIndex(_) => Opcode::FloorToIndex,
            Op::TableRead(..) => Opcode::TableRead,
            Op::Activation(a, _) => Opcode::Activation(*a),
        }
    }

    pub fn defines_value(&self) -> bool {
        !matches!(self, Op::StoreState(..))
    }

    pub fn operands(&self) -> Vec<Reg> {
        match *self {
            Op::LoadInput(_) | Op::LoadConst(_) | Op::LoadState(_) => vec![],
            Op::StoreState(_, r) | Op::FloorToIndex(r) | Op::TableRead(_, r) | Op::Activation(_, r) => {
                vec![r]
            }
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::Min(a, b)
            | Op::Max(a, b)
            | Op::CompareLt(a, b) => vec![a, b],
            Op::Select(c, a, b) => vec![c, a, b],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Inst {
    pub dst: Option<Reg>,
    pub op: Op,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    Flash,
    Ram,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub values: Vec<f64>,
    pub placement: Placement,
}

/// A validated straight-line program.
#[derive(Clone, Debug, PartialEq)]
pub struct IrProgram {
    num_inputs: usize,
    num_state: usize,
    insts: Vec<Inst>,
    tables: Vec<Table>,
    output: Option<Reg>,
    input_domains: Vec<(f64, f64)>,
}

impl IrProgram {
    /// The zero-instruction program.
    pub fn empty() -> Self {
        Self { num_inputs: 0, num_state: 0, insts: vec![], tables: vec![], output: None, input_domains: vec![] }
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    pub fn num_state(&self) -> usize {
        self.num_state
    }

    pub fn is_stateful(&self) -> bool {
        self.num_state > 0
    }

    pub fn insts(&self) -> &[Inst] {
        &self.insts
    }

    pub fn tables(&self) -> &[Table] {
        &self.tables
    }

    pub fn output(&self) -> Option<Reg> {
        self.output
    }

    /// Raw-code domain of each input, used for test-vector generation.
    pub fn input_domains(&self) -> &[(f64, f64)] {
        &self.input_domains
    }

    pub fn num_regs(&self) -> usize {
        self.insts.iter().filter(|i| i.dst.is_some()).count()
    }

    /// Appends the instructions of `other` (same arity) after this program's
    /// own, keeping this program's output. Used to check cost additivity.
    pub fn concat(&self, other: &IrProgram) -> Result<IrProgram> {
        if self.num_inputs != other.num_inputs || self.num_state != other.num_state || !other.tables.is_empty() {
            return Err(Error::InvalidProgram("incompatible programs".into()));
        }
        let shift = self.num_regs() as u32;
        let remap = |r: Reg| Reg(r.0 + shift);
        let mut insts = self.insts.clone();
        for inst in &other.insts {
            let op = match inst.op {
                Op::StoreState(s, r) => Op::StoreState(s, remap(r)),
                Op::Add(a, b) => Op::Add(remap(a), remap(b)),
                Op::Sub(a, b) => Op::Sub(remap(a), remap(b)),
                Op::Mul(a, b) => Op::Mul(remap(a), remap(b)),
                Op::Div(a, b) => Op::Div(remap(a), remap(b)),
                Op::Min(a, b) => Op::Min(remap(a), remap(b)),
                Op::Max(a, b) => Op::Max(remap(a), remap(b)),
                Op::CompareLt(a, b) => Op::CompareLt(remap(a), remap(b)),
                Op::Select(c, a, b) => Op::Select(remap(c), remap(a), remap(b)),
                Op::FloorToIndex(r) => Op::FloorToIndex(remap(r)),
                Op::TableRead(t, r) => Op::TableRead(t, remap(r)),
                Op::Activation(k, r) => Op::Activation(k, remap(r)),
                op @ (Op::LoadInput(_) | Op::LoadConst(_) | Op::LoadState(_)) => op,
            };
            insts.push(Inst { dst: inst.dst.map(remap), op });
        }
        let prog = IrProgram { insts, ..self.clone() };
        prog.validate()?;
        Ok(prog)
    }

    /// Checks single assignment, def-before-use, slot/table bounds and that
    /// every table index is provably an in-range integer.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidProgram(m));
        let mut intervals: Vec<Interval> = Vec::with_capacity(self.insts.len());
        for (k, inst) in self.insts.iter().enumerate() {
            for r in inst.op.operands() {
                if r.index() >= intervals.len() {
                    return bad(format!("inst {k}: {r} used before definition"));
                }
            }
            match inst.op {
                Op::LoadInput(i) if i as usize >= self.num_inputs => {
                    return bad(format!("inst {k}: input {i} out of range"))
                }
                Op::LoadState(s) | Op::StoreState(s, _) if s as usize >= self.num_state => {
                    return bad(format!("inst {k}: state slot {s} out of range"))
                }
                Op::TableRead(t, r) => {
                    let Some(table) = self.tables.get(t as usize) else {
                        return bad(format!("inst {k}: table {t} does not exist"));
                    };
                    let iv = intervals[r.index()];
                    if !iv.integral || iv.lo < 0.0 || iv.hi > (table.values.len() as f64 - 1.0) {
                        return bad(format!("inst {k}: index {r} not provably within table {t}"));
                    }
                }
                _ => {}
            }
            match (inst.dst, inst.op.defines_value()) {
                (Some(d), true) if d.index() == intervals.len() => {
                    intervals.push(Interval::of(&inst.op, &intervals))
                }
                (None, false) => {}
                _ => return bad(format!("inst {k}: destination register out of sequence")),
            }
        }
        match self.output {
            Some(r) if r.index() < intervals.len() => Ok(()),
            None if self.insts.is_empty() => Ok(()),
            _ => bad("missing or undefined output register".into()),
        }
    }

    /// Line-oriented text form, e.g. `r3 = mul r1, r2`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "inputs {}", self.num_inputs);
        let _ = writeln!(out, "state {}", self.num_state);
        for (i, t) in self.tables.iter().enumerate() {
            let place = match t.placement {
                Placement::Flash => "flash",
                Placement::Ram => "ram",
            };
            let _ = writeln!(out, "table t{i} {place} {}", t.values.len());
        }
        for inst in &self.insts {
            if let Some(d) = inst.dst {
                let _ = write!(out, "{d} = ");
            }
            let name = inst.op.opcode().name();
            let _ = match inst.op {
                Op::LoadInput(i) => writeln!(out, "{name} {i}"),
                Op::LoadConst(c) => writeln!(out, "{name} {c:e}"),
                Op::LoadState(s) => writeln!(out, "{name} s{s}"),
                Op::StoreState(s, r) => writeln!(out, "{name} s{s}, {r}"),
                Op::TableRead(t, r) => writeln!(out, "{name} t{t}, {r}"),
                _ => {
                    let ops: Vec<String> = inst.op.operands().iter().map(|r| r.to_string()).collect();
                    writeln!(out, "{name} {}", ops.join(", "))
                }
            };
        }
        if let Some(o) = self.output {
            let _ = writeln!(out, "output {o}");
        }
        out
    }
}

/// Value range of a register, used to prove table indices in bounds.
#[derive(Clone, Copy, Debug)]
struct Interval {
    lo: f64,
    hi: f64,
    integral: bool,
}

impl Interval {
    const ANY: Interval = Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY, integral: false };

    fn sane(lo: f64, hi: f64, integral: bool) -> Interval {
        if lo.is_nan() || hi.is_nan() {
            Interval::ANY
        } else {
            Interval { lo, hi, integral }
        }
    }

    fn of(op: &Op, iv: &[Interval]) -> Interval {
        let g = |r: &Reg| iv[r.index()];
        match op {
            Op::LoadConst(c) => Interval { lo: *c, hi: *c, integral: c.fract() == 0.0 },
            Op::Add(a, b) => {
                let (a, b) = (g(a), g(b));
                Interval::sane(a.lo + b.lo, a.hi + b.hi, a.integral && b.integral)
            }
            Op::Sub(a, b) => {
                let (a, b) = (g(a), g(b));
                Interval::sane(a.lo - b.hi, a.hi - b.lo, a.integral && b.integral)
            }
            Op::Mul(a, b) => {
                let (a, b) = (g(a), g(b));
                let p = [a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi];
                if p.iter().any(|v| v.is_nan()) {
                    return Interval::ANY;
                }
                let lo = p.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                Interval::sane(lo, hi, a.integral && b.integral)
            }
            Op::Min(a, b) => {
                let (a, b) = (g(a), g(b));
                Interval::sane(a.lo.min(b.lo), a.hi.min(b.hi), a.integral && b.integral)
            }
            Op::Max(a, b) => {
                let (a, b) = (g(a), g(b));
                Interval::sane(a.lo.max(b.lo), a.hi.max(b.hi), a.integral && b.integral)
            }
            Op::Select(_, a, b) => {
                let (a, b) = (g(a), g(b));
                Interval::sane(a.lo.min(b.lo), a.hi.max(b.hi), a.integral && b.integral)
            }
            Op::CompareLt(..) => Interval { lo: 0.0, hi: 1.0, integral: true },
            Op::FloorToIndex(r) => {
                let a = g(r);
                Interval::sane(a.lo.floor(), a.hi.floor(), true)
            }
            _ => Interval::ANY,
        }
    }
}

/// Incremental program construction; `finish` validates.
#[derive(Clone, Debug, Default)]
pub struct Builder {
    num_inputs: usize,
    num_state: usize,
    insts: Vec<Inst>,
    tables: Vec<Table>,
    next: u32,
    input_domains: Vec<(f64, f64)>,
}

impl Builder {
    pub fn new(input_domains: Vec<(f64, f64)>, num_state: usize) -> Self {
        Self { num_inputs: input_domains.len(), num_state, input_domains, ..Default::default() }
    }

    pub fn push(&mut self, op: Op) -> Reg {
        debug_assert!(op.defines_value());
        let r = Reg(self.next);
        self.next += 1;
        self.insts.push(Inst { dst: Some(r), op });
        r
    }

    pub fn input(&mut self, i: usize) -> Reg {
        self.push(Op::LoadInput(i as u32))
    }

    pub fn constant(&mut self, c: f64) -> Reg {
        self.push(Op::LoadConst(c))
    }

    pub fn load_state(&mut self, s: usize) -> Reg {
        self.push(Op::LoadState(s as u32))
    }

    pub fn store_state(&mut self, s: usize, r: Reg) {
        self.insts.push(Inst { dst: None, op: Op::StoreState(s as u32, r) });
    }

    pub fn add(&mut self, a: Reg, b: Reg) -> Reg {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Reg, b: Reg) -> Reg {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Reg, b: Reg) -> Reg {
        self.push(Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Reg, b: Reg) -> Reg {
        self.push(Op::Div(a, b))
    }

    pub fn min(&mut self, a: Reg, b: Reg) -> Reg {
        self.push(Op::Min(a, b))
    }

    pub fn max(&mut self, a: Reg, b: Reg) -> Reg {
        self.push(Op::Max(a, b))
    }

    pub fn compare_lt(&mut self, a: Reg, b: Reg) -> Reg {
        self.push(Op::CompareLt(a, b))
    }

    pub fn select(&mut self, c: Reg, a: Reg, b: Reg) -> Reg {
        self.push(Op::Select(c, a, b))
    }

    pub fn floor_to_index(&mut self, r: Reg) -> Reg {
        self.push(Op::FloorToIndex(r))
    }

    pub fn table_read(&mut self, table: usize, index: Reg) -> Reg {
        self.push(Op::TableRead(table as u32, index))
    }

    pub fn activation(&mut self, kind: Activation, r: Reg) -> Reg {
        self.push(Op::Activation(kind, r))
    }

    pub fn add_table(&mut self, values: Vec<f64>, placement: Placement) -> usize {
        self.tables.push(Table { values, placement });
        self.tables.len() - 1
    }

    /// `x * c`
    pub fn mul_const(&mut self, x: Reg, c: f64) -> Reg {
        let k = self.constant(c);
        self.mul(x, k)
    }

    /// `x + c`
    pub fn add_const(&mut self, x: Reg, c: f64) -> Reg {
        let k = self.constant(c);
        self.add(x, k)
    }

    /// `(x - offset) * scale`
    pub fn affine_in(&mut self, x: Reg, offset: f64, scale: f64) -> Reg {
        let o = self.constant(offset);
        let d = self.sub(x, o);
        self.mul_const(d, scale)
    }

    /// `x * scale + offset`
    pub fn affine_out(&mut self, x: Reg, scale: f64, offset: f64) -> Reg {
        let m = self.mul_const(x, scale);
        self.add_const(m, offset)
    }

    pub fn clamp(&mut self, x: Reg, lo: f64, hi: f64) -> Reg {
        let l = self.constant(lo);
        let a = self.max(x, l);
        let h = self.constant(hi);
        self.min(a, h)
    }

    pub fn finish(self, output: Reg) -> Result<IrProgram> {
        let prog = IrProgram {
            num_inputs: self.num_inputs,
            num_state: self.num_state,
            insts: self.insts,
            tables: self.tables,
            output: Some(output),
            input_domains: self.input_domains,
        };
        prog.validate()?;
        Ok(prog)
    }
}
