//! Triviality patterns, cyclomatic complexity and exclusion of compiler artifacts.

use serde::{Deserialize, Serialize};

use crate::classfile::{Constant, FieldType, Instruction, MethodModel, Opcode, Operand};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TrivialKind {
    Getter,
    Setter,
    Empty,
    ConstantReturn,
    ParamAssignConstructor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExclusionReason {
    Abstract,
    Native,
    Synthetic,
    Bridge,
    NoBody,
}

/// Methods that carry no developer-written code to test.
pub fn exclusion(m: &MethodModel) -> Option<ExclusionReason> {
    let a = m.access;
    if a.is_abstract() {
        Some(ExclusionReason::Abstract)
    } else if a.is_native() {
        Some(ExclusionReason::Native)
    } else if a.is_bridge() {
        Some(ExclusionReason::Bridge)
    } else if a.is_synthetic() {
        Some(ExclusionReason::Synthetic)
    } else if !m.has_body() {
        Some(ExclusionReason::NoBody)
    } else {
        None
    }
}

fn is_return_of(op: Opcode, ty: Option<&FieldType>) -> bool {
    let want = match ty {
        None => Opcode::RETURN,
        Some(FieldType::Long) => Opcode::LRETURN,
        Some(FieldType::Float) => Opcode::FRETURN,
        Some(FieldType::Double) => Opcode::DRETURN,
        Some(t) if t.is_reference() => Opcode::ARETURN,
        Some(_) => Opcode::IRETURN,
    };
    op == want
}

/// Local slot read by a load instruction, if `ins` is one.
fn loaded_local(ins: &Instruction) -> Option<u16> {
    match (ins.opcode.0, &ins.operand) {
        (21..=45, Operand::Local(n)) => Some(*n),
        _ => None,
    }
}

fn is_this_load(ins: &Instruction) -> bool {
    ins.opcode == Opcode::ALOAD_0 || (ins.opcode == Opcode::ALOAD && ins.operand == Operand::Local(0))
}

fn is_constant_push(ins: &Instruction) -> bool {
    match ins.opcode.0 {
        1..=17 => true,
        18..=20 => matches!(
            ins.operand,
            Operand::Constant(Constant::Int(_) | Constant::Float(_) | Constant::Long(_) | Constant::Double(_) | Constant::String(_))
        ),
        _ => false,
    }
}

/// Matches the method body against the trivial patterns. No-ops are ignored;
/// anything else, including boxing calls, disqualifies.
pub fn detect_trivial(m: &MethodModel) -> Option<TrivialKind> {
    if exclusion(m).is_some() {
        return None;
    }
    let code: Vec<&Instruction> = m.instructions.iter().filter(|i| i.opcode != Opcode::NOP).collect();
    let desc = m.descriptor();
    let ret = desc.ret.as_ref();
    let ops: Vec<Opcode> = code.iter().map(|i| i.opcode).collect();
    let instance = !m.is_static();

    match ops.as_slice() {
        [Opcode::RETURN] => return Some(TrivialKind::Empty),
        [_, r] if is_constant_push(code[0]) && is_return_of(*r, ret) && ret.is_some() => {
            return Some(TrivialKind::ConstantReturn)
        }
        [_, Opcode::GETFIELD, r] if instance && is_this_load(code[0]) && ret.is_some() && is_return_of(*r, ret) => {
            return Some(TrivialKind::Getter)
        }
        [_, _, Opcode::PUTFIELD, Opcode::RETURN]
            if instance
                && desc.params.len() == 1
                && !m.id.is_constructor()
                && is_this_load(code[0])
                && loaded_local(code[1]) == Some(1) =>
        {
            return Some(TrivialKind::Setter)
        }
        _ => {}
    }

    if m.id.is_constructor() && instance {
        return param_assign_constructor(m, &code, desc.param_slots()).then_some(TrivialKind::ParamAssignConstructor);
    }
    None
}

/// `this`, parameter loads, `invokespecial super.<init>`, then
/// `(this, parameter, putfield)*`, then `return`.
fn param_assign_constructor(m: &MethodModel, code: &[&Instruction], param_slots: u16) -> bool {
    let is_param = |ins: &Instruction| loaded_local(ins).is_some_and(|n| n >= 1 && n <= param_slots);
    let mut i = 0;
    if !code.first().is_some_and(|ins| is_this_load(ins)) {
        return false;
    }
    i += 1;
    while i < code.len() && is_param(code[i]) {
        i += 1;
    }
    match code.get(i) {
        Some(ins) if ins.opcode == Opcode::INVOKESPECIAL => match ins.callee() {
            Some(callee) if callee.is_constructor() && callee.owner != m.id.owner => {}
            _ => return false,
        },
        _ => return false,
    }
    i += 1;
    while i + 2 < code.len() && is_this_load(code[i]) && is_param(code[i + 1]) && code[i + 2].opcode == Opcode::PUTFIELD {
        i += 3;
    }
    i + 1 == code.len() && code[i].opcode == Opcode::RETURN
}

/// `1 + conditional branches + Σ(distinct switch targets − 1)`; exception
/// handlers are not decision points.
pub fn cyclomatic_complexity(m: &MethodModel) -> u32 {
    let mut c = 1u32;
    for ins in &m.instructions {
        if ins.opcode.is_conditional_branch() {
            c += 1;
        } else if let Operand::Switch(table) = &ins.operand {
            c += table.distinct_targets().len() as u32 - 1;
        }
    }
    c
}
