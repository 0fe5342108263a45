use super::{IrProgram, Op};

/// Evaluates `prog` on one input row, reading and updating `state` in place.
/// Returns the output register's value.
///
/// Panics if `inputs` or `state` are shorter than the program declares.
pub fn interpret(prog: &IrProgram, inputs: &[f64], state: &mut [f64]) -> f64 {
    assert!(inputs.len() >= prog.num_inputs(), "program expects {} inputs", prog.num_inputs());
    assert!(state.len() >= prog.num_state(), "program expects {} state slots", prog.num_state());
    let mut regs: Vec<f64> = Vec::with_capacity(prog.num_regs());
    for inst in prog.insts() {
        let r = |reg: super::Reg| regs[reg.index()];
        let value = match inst.op {
            Op::LoadInput(i) => inputs[i as usize],
            Op::LoadConst(c) => c,
            Op::LoadState(s) => state[s as usize],
            Op::StoreState(s, v) => {
                state[s as usize] = r(v);
                continue;
            }
            Op::Add(a, b) => r(a) + r(b),
            Op::Sub(a, b) => r(a) - r(b),
            Op::Mul(a, b) => r(a) * r(b),
            Op::Div(a, b) => r(a) / r(b),
            Op::Min(a, b) => r(a).min(r(b)),
            Op::Max(a, b) => r(a).max(r(b)),
            Op::CompareLt(a, b) => {
                if r(a) < r(b) {
                    1.0
                } else {
                    0.0
                }
            }
            Op::Select(c, a, b) => {
                if r(c) != 0.0 {
                    r(a)
                } else {
                    r(b)
                }
            }
            Op::FloorToIndex(a) => r(a).floor(),
            // In bounds by validation.
            Op::TableRead(t, i) => prog.tables()[t as usize].values[r(i) as usize],
            Op::Activation(kind, a) => kind.apply(r(a)),
        };
        regs.push(value);
    }
    prog.output().map_or(0.0, |o| regs[o.index()])
}
