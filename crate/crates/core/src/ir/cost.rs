//! Per-opcode cost weights and memory footprint estimation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, IrProgram, Op, Placement};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Opcode {
    LoadInput,
    LoadConst,
    LoadState,
    StoreState,
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
    CompareLt,
    Select,
    FloorToIndex,
    TableRead,
    Activation(Activation),
}

impl Opcode {
    pub fn all() -> Vec<Opcode> {
        let mut v = vec![
            Opcode::LoadInput,
            Opcode::LoadConst,
            Opcode::LoadState,
            Opcode::StoreState,
            Opcode::Add,
            Opcode::Sub,
            Opcode::Mul,
            Opcode::Div,
            Opcode::Min,
            Opcode::Max,
            Opcode::CompareLt,
            Opcode::Select,
            Opcode::FloorToIndex,
            Opcode::TableRead,
        ];
        v.extend(Activation::ALL.into_iter().map(Opcode::Activation));
        v
    }

    pub fn name(self) -> &'static str {
        match self {
            Opcode::LoadInput => "load_input",
            Opcode::LoadConst => "load_const",
            Opcode::LoadState => "load_state",
            Opcode::StoreState => "store_state",
            Opcode::Add => "add",
            Opcode::Sub => "sub",
            Opcode::Mul => "mul",
            Opcode::Div => "div",
            Opcode::Min => "min",
            Opcode::Max => "max",
            Opcode::CompareLt => "compare_lt",
            Opcode::Select => "select",
            Opcode::FloorToIndex => "floor_to_index",
            Opcode::TableRead => "table_read",
            Opcode::Activation(a) => a.name(),
        }
    }

    pub fn from_name(s: &str) -> Option<Opcode> {
        Opcode::all().into_iter().find(|o| o.name() == s)
    }

    /// Default weight in dynamic instructions. Activations carry measured
    /// RISC-V instruction counts; the rest approximate one ALU instruction
    /// plus addressing overhead for loads.
    pub fn default_weight(self) -> f64 {
        match self {
            Opcode::LoadInput | Opcode::LoadConst | Opcode::LoadState | Opcode::TableRead => 2.0,
            Opcode::StoreState => 2.0,
            Opcode::Add
            | Opcode::Sub
            | Opcode::Mul
            | Opcode::Div
            | Opcode::Min
            | Opcode::Max
            | Opcode::CompareLt
            | Opcode::Select => 1.0,
            Opcode::FloorToIndex => 3.0,
            Opcode::Activation(a) => match a {
                Activation::Exp => 109.0,
                Activation::Gaussian => 131.0,
                Activation::Sigmoid => 122.0,
                Activation::Relu => 19.0,
                Activation::HardSigmoid => 33.0,
                Activation::Tanh => 124.0,
                Activation::Softsign => 11.0,
            },
        }
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Weight per opcode. Always covers every opcode.
#[derive(Clone, Debug, PartialEq)]
pub struct CostTable {
    weights: BTreeMap<Opcode, f64>,
}

impl Default for CostTable {
    fn default() -> Self {
        Self { weights: Opcode::all().into_iter().map(|o| (o, o.default_weight())).collect() }
    }
}

impl CostTable {
    pub fn weight(&self, op: Opcode) -> f64 {
        self.weights[&op]
    }

    pub fn set(&mut self, op: Opcode, weight: f64) -> Result<()> {
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::InvalidArgument(format!("weight for {op} must be finite and >= 0")));
        }
        self.weights.insert(op, weight);
        Ok(())
    }

    /// Defaults overridden by a JSON `{"opcode": weight}` map.
    pub fn from_json(text: &str) -> Result<Self> {
        let map: BTreeMap<String, f64> = serde_json::from_str(text)?;
        let mut table = CostTable::default();
        for (name, w) in map {
            let op = Opcode::from_name(&name)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown opcode `{name}`")))?;
            table.set(op, w)?;
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let map: BTreeMap<&str, f64> = self.weights.iter().map(|(o, w)| (o.name(), *w)).collect();
        serde_json::to_string_pretty(&map).expect("map serializes")
    }

    /// Per-conversion cost: the weighted count of executed instructions.
    /// Straight-line programs execute every instruction exactly once.
    pub fn cost(&self, prog: &IrProgram) -> f64 {
        prog.insts().iter().map(|i| self.weight(i.op.opcode())).sum()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEstimate {
    pub flash_bytes: u64,
    pub ram_bytes: u64,
}

const WORD: u64 = 4;
const CODE_BYTES_PER_INST: u64 = 4;

/// Flash: code plus flash-resident constants. RAM: RAM-resident tables,
/// state slots and the peak number of simultaneously live registers.
pub fn estimate_memory(prog: &IrProgram) -> MemoryEstimate {
    let insts = prog.insts();
    if insts.is_empty() {
        return MemoryEstimate::default();
    }
    let consts = insts.iter().filter(|i| matches!(i.op, Op::LoadConst(_))).count() as u64;
    let (mut flash_tables, mut ram_tables) = (0u64, 0u64);
    for t in prog.tables() {
        match t.placement {
            Placement::Flash => flash_tables += t.values.len() as u64,
            Placement::Ram => ram_tables += t.values.len() as u64,
        }
    }
    let flash = CODE_BYTES_PER_INST * insts.len() as u64 + WORD * (consts + flash_tables);
    let ram = WORD * (ram_tables + prog.num_state() as u64 + peak_live(prog) as u64);
    MemoryEstimate { flash_bytes: flash, ram_bytes: ram }
}

/// Maximum number of registers live at any instruction.
pub(crate) fn peak_live(prog: &IrProgram) -> usize {
    let insts = prog.insts();
    let n_regs = prog.num_regs();
    let mut def = vec![0usize; n_regs];
    let mut last = vec![0usize; n_regs];
    for (k, inst) in insts.iter().enumerate() {
        if let Some(d) = inst.dst {
            def[d.index()] = k;
            last[d.index()] = k;
        }
        for r in inst.op.operands() {
            last[r.index()] = k;
        }
    }
    if let Some(o) = prog.output() {
        last[o.index()] = insts.len();
    }
    // Sweep: +1 at definition. A register's slot is free for the result of
    // the instruction that last reads it; a never-read value lives one step.
    let mut delta = vec![0i64; insts.len() + 2];
    for r in 0..n_regs {
        delta[def[r]] += 1;
        let end = if last[r] > def[r] { last[r] } else { def[r] + 1 };
        delta[end] -= 1;
    }
    let (mut live, mut peak) = (0i64, 0i64);
    for d in delta {
        live += d;
        peak = peak.max(live);
    }
    peak as usize
}
