//! Provenance-only abstract interpretation of method bodies.
//!
//! Every local and operand-stack slot holds an abstract [`Value`] naming where
//! the value came from. Category-2 values (long, double) occupy two slots, the
//! upper one [`Value::Top`], so the stack shuffling instructions work on raw
//! slots exactly as the JVM does. Joins keep equal values and collapse
//! anything else to [`Value::Unknown`].

use std::collections::{BTreeMap, VecDeque};

use crate::classfile::{FieldRef, MethodModel, Opcode, Operand};

/// Origin of an abstract value. Instruction payloads are indices into
/// `MethodModel::instructions`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Value {
    /// Upper half of a category-2 value, or an uninitialized local.
    Top,
    Unknown,
    Null,
    This,
    /// 1-based declared parameter position.
    Param(u16),
    /// Result of `getfield` at the instruction.
    Field(usize),
    /// Result of `getstatic` at the instruction.
    Static(usize),
    /// Object or array allocated at the instruction.
    New(usize),
    /// Return value of the invocation at the instruction.
    Return(usize),
    /// Exception object on handler entry.
    Caught,
}

impl Value {
    fn join(self, other: Value) -> Value {
        if self == other {
            self
        } else {
            Value::Unknown
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct State {
    locals: Vec<Value>,
    stack: Vec<Value>,
}

impl State {
    /// Returns whether `self` changed.
    fn join_from(&mut self, other: &State) -> bool {
        let mut changed = false;
        if self.locals.len() < other.locals.len() {
            self.locals.resize(other.locals.len(), Value::Top);
            changed = true;
        }
        for (i, v) in self.locals.iter_mut().enumerate() {
            let o = other.locals.get(i).copied().unwrap_or(Value::Top);
            let j = v.join(o);
            if j != *v {
                *v = j;
                changed = true;
            }
        }
        if self.stack.len() != other.stack.len() {
            // Inconsistent heights only happen in unverifiable code.
            let n = self.stack.len().min(other.stack.len());
            let degraded = vec![Value::Unknown; n];
            changed |= self.stack != degraded;
            self.stack = degraded;
        } else {
            for (v, o) in self.stack.iter_mut().zip(&other.stack) {
                let j = v.join(*o);
                if j != *v {
                    *v = j;
                    changed = true;
                }
            }
        }
        changed
    }

    fn pop(&mut self) -> Value {
        self.stack.pop().unwrap_or(Value::Unknown)
    }

    fn pop_n(&mut self, n: usize) {
        for _ in 0..n {
            self.pop();
        }
    }

    /// Pops a value of `slots` width and returns its lower slot.
    fn pop_wide(&mut self, slots: u16) -> Value {
        let mut v = Value::Unknown;
        for _ in 0..slots {
            v = self.pop();
        }
        v
    }

    fn push(&mut self, v: Value) {
        self.stack.push(v);
    }

    fn push_wide(&mut self, v: Value, slots: u16) {
        if slots > 0 {
            self.push(v);
        }
        if slots > 1 {
            self.push(Value::Top);
        }
    }

    fn local(&self, n: u16) -> Value {
        self.locals.get(n as usize).copied().unwrap_or(Value::Unknown)
    }

    fn set_local(&mut self, n: u16, v: Value, slots: u16) {
        let end = n as usize + slots as usize;
        if self.locals.len() < end {
            self.locals.resize(end, Value::Top);
        }
        self.locals[n as usize] = v;
        if slots == 2 {
            self.locals[n as usize + 1] = Value::Top;
        }
    }
}

/// A `putfield` / `putstatic` reached by the interpretation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldStore {
    pub index: usize,
    pub field: FieldRef,
    /// Object written to; `None` for static fields.
    pub object: Option<Value>,
    pub value: Value,
}

/// A `getfield` / `getstatic` reached by the interpretation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldRead {
    pub index: usize,
    pub field: FieldRef,
    pub object: Option<Value>,
}

/// Facts gathered from the fixed-point states of one method.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MethodFlow {
    /// Instruction indices reachable from entry (including via handlers).
    pub reached: Vec<bool>,
    /// Receiver of each reached instance invocation, by bytecode offset.
    pub receivers: BTreeMap<u32, Value>,
    pub stores: Vec<FieldStore>,
    pub reads: Vec<FieldRead>,
    /// Thrown value of each reached `athrow`, by instruction index.
    pub throws: Vec<(usize, Value)>,
}

fn field_slots(f: &FieldRef) -> u16 {
    if f.descriptor == "J" || f.descriptor == "D" {
        2
    } else {
        1
    }
}

fn entry_state(m: &MethodModel) -> State {
    let mut s = State { locals: Vec::with_capacity(m.max_locals as usize), stack: Vec::new() };
    let mut slot = 0u16;
    if !m.is_static() {
        s.set_local(0, Value::This, 1);
        slot = 1;
    }
    for (i, p) in m.descriptor().params.iter().enumerate() {
        s.set_local(slot, Value::Param(i as u16 + 1), p.slots());
        slot += p.slots();
    }
    if s.locals.len() < m.max_locals as usize {
        s.locals.resize(m.max_locals as usize, Value::Top);
    }
    s
}

/// Normal-flow successors (instruction indices) of instruction `i`.
pub(crate) fn successors(m: &MethodModel, i: usize) -> Vec<usize> {
    let ins = &m.instructions[i];
    let mut out = Vec::new();
    let at = |offset: u32| m.index_of_offset(offset);
    match &ins.operand {
        Operand::Branch(t) if ins.opcode != Opcode::GOTO && ins.opcode != Opcode::GOTO_W => {
            out.extend(at(*t));
            // conditional branches and jsr also continue at the next instruction
            if i + 1 < m.instructions.len() {
                out.push(i + 1);
            }
        }
        Operand::Branch(t) => out.extend(at(*t)),
        Operand::Switch(table) => out.extend(table.distinct_targets().into_iter().filter_map(at)),
        _ if ins.opcode.ends_flow() => {}
        _ => {
            if i + 1 < m.instructions.len() {
                out.push(i + 1);
            }
        }
    }
    out
}

/// Abstract effect of instruction `i` on `s`.
fn step(m: &MethodModel, i: usize, s: &mut State) {
    use Value::*;
    let ins = &m.instructions[i];
    let op = ins.opcode.0;
    match op {
        0 => {}
        1 => s.push(Null),
        2..=8 | 11..=13 | 16 | 17 => s.push(Unknown),
        9 | 10 | 14 | 15 => s.push_wide(Unknown, 2),
        18 | 19 => s.push(Unknown),
        20 => s.push_wide(Unknown, 2),
        21..=45 => {
            let Operand::Local(n) = ins.operand else { return s.push(Unknown) };
            let wide = matches!(op, 22 | 24 | 30..=33 | 38..=41);
            let v = s.local(n);
            s.push_wide(v, if wide { 2 } else { 1 });
        }
        46..=53 => {
            s.pop_n(2);
            s.push_wide(Unknown, if matches!(op, 47 | 49) { 2 } else { 1 });
        }
        54..=78 => {
            let wide = matches!(op, 55 | 57 | 63..=66 | 71..=74);
            let slots = if wide { 2 } else { 1 };
            let v = s.pop_wide(slots);
            if let Operand::Local(n) = ins.operand {
                s.set_local(n, v, slots);
            }
        }
        79..=86 => s.pop_n(if matches!(op, 80 | 82) { 4 } else { 3 }),
        87 => s.pop_n(1),
        88 => s.pop_n(2),
        89..=95 => {
            let need = match op {
                89 => 1,
                90 | 92 | 95 => 2,
                91 | 93 => 3,
                _ => 4,
            };
            while s.stack.len() < need {
                s.stack.insert(0, Unknown);
            }
            let n = s.stack.len();
            let top: Vec<Value> = s.stack[n - need..].to_vec();
            let shuffled: Vec<Value> = match op {
                89 => vec![top[0], top[0]],
                90 => vec![top[1], top[0], top[1]],
                91 => vec![top[2], top[0], top[1], top[2]],
                92 => vec![top[0], top[1], top[0], top[1]],
                93 => vec![top[1], top[2], top[0], top[1], top[2]],
                94 => vec![top[2], top[3], top[0], top[1], top[2], top[3]],
                _ => vec![top[1], top[0]],
            };
            s.stack.truncate(n - need);
            s.stack.extend(shuffled);
        }
        96..=115 => {
            let wide = (op - 96) % 2 == 1;
            s.pop_n(if wide { 4 } else { 2 });
            s.push_wide(Unknown, if wide { 2 } else { 1 });
        }
        116..=119 => {
            let slots = if op % 2 == 1 { 2 } else { 1 };
            s.pop_n(slots);
            s.push_wide(Unknown, slots as u16);
        }
        120..=125 => {
            let wide = op % 2 == 1;
            s.pop_n(if wide { 3 } else { 2 });
            s.push_wide(Unknown, if wide { 2 } else { 1 });
        }
        126..=131 => {
            let wide = op % 2 == 1;
            s.pop_n(if wide { 4 } else { 2 });
            s.push_wide(Unknown, if wide { 2 } else { 1 });
        }
        132 => {
            if let Operand::Iinc { index, .. } = ins.operand {
                s.set_local(index, Unknown, 1);
            }
        }
        133..=147 => {
            let (pop, push) = match op {
                133 => (1, 2),
                134 => (1, 1),
                135 => (1, 2),
                136 | 137 => (2, 1),
                138 => (2, 2),
                139 => (1, 1),
                140 | 141 => (1, 2),
                142 => (2, 1),
                143 => (2, 2),
                144 => (2, 1),
                _ => (1, 1),
            };
            s.pop_n(pop);
            s.push_wide(Unknown, push);
        }
        148 | 151 | 152 => {
            s.pop_n(4);
            s.push(Unknown);
        }
        149 | 150 => {
            s.pop_n(2);
            s.push(Unknown);
        }
        153..=158 | 198 | 199 => s.pop_n(1),
        159..=166 => s.pop_n(2),
        167 | 200 => {}
        168 | 201 => s.push(Unknown),
        169 => {}
        170 | 171 => s.pop_n(1),
        172 | 174 | 176 => s.pop_n(1),
        173 | 175 => s.pop_n(2),
        177 => {}
        178 => {
            let slots = ins.field().map_or(1, field_slots);
            s.push_wide(Static(i), slots);
        }
        179 => {
            let slots = ins.field().map_or(1, field_slots);
            s.pop_n(slots as usize);
        }
        180 => {
            s.pop();
            let slots = ins.field().map_or(1, field_slots);
            s.push_wide(Field(i), slots);
        }
        181 => {
            let slots = ins.field().map_or(1, field_slots);
            s.pop_n(slots as usize + 1);
        }
        182..=186 => {
            let desc = ins.callee().and_then(|c| c.parsed_descriptor().ok());
            let (args, ret) = desc.map_or((0, 0), |d| (d.param_slots(), d.return_slots()));
            s.pop_n(args as usize);
            if op != 184 && op != 186 {
                s.pop();
            }
            s.push_wide(Return(i), ret);
        }
        187 => s.push(New(i)),
        188 | 189 => {
            s.pop();
            s.push(New(i));
        }
        190 => {
            s.pop();
            s.push(Unknown);
        }
        191 => s.stack.clear(),
        192 => {}
        193 => {
            s.pop();
            s.push(Unknown);
        }
        194 | 195 => s.pop_n(1),
        197 => {
            if let Operand::MultiArray { dims, .. } = ins.operand {
                s.pop_n(dims as usize);
            }
            s.push(New(i));
        }
        _ => {}
    }
}

/// Records the facts observable at instruction `i` given its entry state.
fn record(m: &MethodModel, i: usize, s: &State, flow: &mut MethodFlow) {
    let ins = &m.instructions[i];
    let from_top = |k: usize| s.stack.len().checked_sub(k + 1).map_or(Value::Unknown, |j| s.stack[j]);
    match ins.opcode {
        Opcode::INVOKEVIRTUAL | Opcode::INVOKESPECIAL | Opcode::INVOKEINTERFACE => {
            let args = ins.callee().and_then(|c| c.parsed_descriptor().ok()).map_or(0, |d| d.param_slots());
            flow.receivers.insert(ins.offset, from_top(args as usize));
        }
        Opcode::PUTFIELD | Opcode::PUTSTATIC => {
            let Some(field) = ins.field() else { return };
            let slots = field_slots(field) as usize;
            let value = from_top(slots - 1);
            let object = (ins.opcode == Opcode::PUTFIELD).then(|| from_top(slots));
            flow.stores.push(FieldStore { index: i, field: field.clone(), object, value });
        }
        Opcode::GETFIELD | Opcode::GETSTATIC => {
            let Some(field) = ins.field() else { return };
            let object = (ins.opcode == Opcode::GETFIELD).then(|| from_top(0));
            flow.reads.push(FieldRead { index: i, field: field.clone(), object });
        }
        Opcode::ATHROW => flow.throws.push((i, from_top(0))),
        _ => {}
    }
}

fn propagate(target: usize, incoming: &State, states: &mut [Option<State>], work: &mut VecDeque<usize>, queued: &mut [bool]) {
    let changed = match &mut states[target] {
        Some(existing) => existing.join_from(incoming),
        slot @ None => {
            *slot = Some(incoming.clone());
            true
        }
    };
    if changed && !queued[target] {
        queued[target] = true;
        work.push_back(target);
    }
}

/// Runs the interpretation to its fixed point and collects the facts.
pub fn simulate(m: &MethodModel) -> MethodFlow {
    let n = m.instructions.len();
    let mut flow = MethodFlow { reached: vec![false; n], ..Default::default() };
    if n == 0 {
        return flow;
    }
    let handlers: Vec<(usize, Vec<usize>)> = m
        .exception_table
        .iter()
        .filter_map(|h| {
            let target = m.index_of_offset(h.handler)?;
            let covered = (0..n).filter(|&i| h.covers(m.instructions[i].offset)).collect();
            Some((target, covered))
        })
        .collect();
    // instruction index -> handler entry indices covering it
    let mut covering: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (target, covered) in &handlers {
        for &i in covered {
            covering[i].push(*target);
        }
    }

    let mut states: Vec<Option<State>> = vec![None; n];
    states[0] = Some(entry_state(m));
    let mut queued = vec![false; n];
    let mut work = VecDeque::from([0usize]);
    queued[0] = true;

    while let Some(i) = work.pop_front() {
        queued[i] = false;
        let entry = states[i].clone().expect("queued instructions have a state");
        for &h in &covering[i] {
            let at_handler = State { locals: entry.locals.clone(), stack: vec![Value::Caught] };
            propagate(h, &at_handler, &mut states, &mut work, &mut queued);
        }
        let mut out = entry;
        step(m, i, &mut out);
        for succ in successors(m, i) {
            propagate(succ, &out, &mut states, &mut work, &mut queued);
        }
    }

    for (i, state) in states.iter().enumerate() {
        if let Some(s) = state {
            flow.reached[i] = true;
            record(m, i, s, &mut flow);
        }
    }
    flow
}
