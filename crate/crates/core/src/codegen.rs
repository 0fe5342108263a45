//! Single-precision C emission for IR programs, plus golden test vectors.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ir::{interpret, Activation, IrProgram, Op, Placement, Reg};
use crate::oracle::Quantity;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CKernel {
    pub name: String,
    pub header: String,
    pub source: String,
}

impl CKernel {
    /// Writes `<name>.h` and `<name>.c`; returns both paths.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let h = dir.join(format!("{}.h", self.name));
        let c = dir.join(format!("{}.c", self.name));
        std::fs::write(&h, &self.header)?;
        std::fs::write(&c, &self.source)?;
        Ok((h, c))
    }
}

/// `bme680_<quantity>_<family>` with the family id made identifier-safe.
pub fn kernel_name(quantity: Quantity, family: &str) -> String {
    let fam: String = family.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
    format!("bme680_{}_{}", quantity.name(), fam)
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Float literal that parses back to the same `f32`.
fn flit(v: f64) -> String {
    let f = v as f32;
    if f.is_nan() {
        return "NAN".into();
    }
    if f.is_infinite() {
        return if f > 0.0 { "INFINITY".into() } else { "-INFINITY".into() };
    }
    format!("{f:e}f")
}

fn activation_expr(a: Activation, x: &str) -> String {
    match a {
        Activation::Relu => format!("fmaxf({x}, 0.0f)"),
        Activation::Sigmoid => format!("1.0f / (1.0f + expf(-{x}))"),
        Activation::Tanh => format!("tanhf({x})"),
        Activation::Softsign => format!("{x} / (1.0f + fabsf({x}))"),
        Activation::Exp => format!("expf({x})"),
        Activation::Gaussian => format!("expf(-({x} * {x}))"),
        Activation::HardSigmoid => format!("fminf(fmaxf(0.2f * {x} + 0.5f, 0.0f), 1.0f)"),
    }
}

pub fn emit_c(prog: &IrProgram, name: &str) -> Result<CKernel> {
    if !is_identifier(name) {
        return Err(Error::InvalidArgument(format!("`{name}` is not a C identifier")));
    }
    prog.validate()?;
    let out = prog.output().ok_or_else(|| Error::InvalidProgram("no output register".into()))?;
    let upper = name.to_ascii_uppercase();
    let stateful = prog.is_stateful();
    let state_ty = format!("{name}_state_t");
    let signature = if stateful {
        format!("float {name}(const float *inputs, {state_ty} *state)")
    } else {
        format!("float {name}(const float *inputs)")
    };

    let mut h = String::new();
    writeln!(h, "#ifndef {upper}_H").unwrap();
    writeln!(h, "#define {upper}_H").unwrap();
    writeln!(h).unwrap();
    writeln!(h, "#define {upper}_NUM_INPUTS {}", prog.num_inputs()).unwrap();
    writeln!(h, "#define {upper}_NUM_STATE {}", prog.num_state()).unwrap();
    writeln!(h).unwrap();
    if stateful {
        writeln!(h, "/* Zero-initialize before the first call. */").unwrap();
        writeln!(h, "typedef struct {{\n    float slots[{}];\n}} {state_ty};\n", prog.num_state()).unwrap();
    }
    writeln!(h, "{signature};").unwrap();
    writeln!(h, "\n#endif").unwrap();

    let mut c = String::new();
    writeln!(c, "#include <math.h>\n\n#include \"{name}.h\"\n").unwrap();
    for (i, t) in prog.tables().iter().enumerate() {
        let qual = match t.placement {
            Placement::Flash => "static const float",
            Placement::Ram => "static float",
        };
        writeln!(c, "{qual} {name}_t{i}[{}] = {{", t.values.len()).unwrap();
        for chunk in t.values.chunks(6) {
            let line: Vec<String> = chunk.iter().map(|v| flit(*v)).collect();
            writeln!(c, "    {},", line.join(", ")).unwrap();
        }
        writeln!(c, "}};\n").unwrap();
    }
    writeln!(c, "{signature}\n{{").unwrap();
    for inst in prog.insts() {
        let r = |x: Reg| x.to_string();
        let expr = match inst.op {
            Op::LoadInput(i) => format!("inputs[{i}]"),
            Op::LoadConst(v) => flit(v),
            Op::LoadState(s) => format!("state->slots[{s}]"),
            Op::StoreState(s, v) => {
                writeln!(c, "    state->slots[{s}] = {};", r(v)).unwrap();
                continue;
            }
            Op::Add(a, b) => format!("{} + {}", r(a), r(b)),
            Op::Sub(a, b) => format!("{} - {}", r(a), r(b)),
            Op::Mul(a, b) => format!("{} * {}", r(a), r(b)),
            Op::Div(a, b) => format!("{} / {}", r(a), r(b)),
            Op::Min(a, b) => format!("fminf({}, {})", r(a), r(b)),
            Op::Max(a, b) => format!("fmaxf({}, {})", r(a), r(b)),
            Op::CompareLt(a, b) => format!("({} < {}) ? 1.0f : 0.0f", r(a), r(b)),
            Op::Select(k, a, b) => format!("({} != 0.0f) ? {} : {}", r(k), r(a), r(b)),
            Op::FloorToIndex(a) => format!("floorf({})", r(a)),
            Op::TableRead(t, i) => format!("{name}_t{t}[(int){}]", r(i)),
            Op::Activation(a, x) => activation_expr(a, &r(x)),
        };
        let dst = inst.dst.expect("value-defining instruction");
        writeln!(c, "    const float {dst} = {expr};").unwrap();
    }
    writeln!(c, "    return {out};\n}}").unwrap();
    Ok(CKernel { name: name.to_string(), header: h, source: c })
}

/// Emits several programs, rejecting duplicate names.
pub fn emit_batch<'a>(items: impl IntoIterator<Item = (&'a str, &'a IrProgram)>) -> Result<Vec<CKernel>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (name, prog) in items {
        if !seen.insert(name) {
            return Err(Error::NameCollision(name.to_string()));
        }
        out.push(emit_c(prog, name)?);
    }
    Ok(out)
}

/// `n` rows of integer raw codes drawn uniformly from the program's input
/// domains with their interpreter outputs. Stateful programs are stepped
/// through the rows in order from zero state.
pub fn emit_vectors(prog: &IrProgram, n: usize, seed: u64) -> Result<String> {
    if n == 0 {
        return Err(Error::InvalidArgument("vector count must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = vec![0.0; prog.num_state()];
    let mut s = String::new();
    let header: Vec<String> = (0..prog.num_inputs()).map(|i| format!("in{i}")).collect();
    writeln!(s, "{},expected", header.join(",")).unwrap();
    for _ in 0..n {
        let row: Vec<f64> =
            prog.input_domains().iter().map(|&(lo, hi)| rng.random_range(lo as i64..=hi as i64) as f64).collect();
        let y = interpret(prog, &row, &mut state);
        let cols: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(s, "{},{y:e}", cols.join(",")).unwrap();
    }
    Ok(s)
}

pub fn vectors_file_name(name: &str) -> String {
    format!("vectors_{name}.csv")
}
