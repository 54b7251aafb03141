//! Effects a unit test could assert on.
//!
//! Only effects that provably exist are recorded, and anything the analysis
//! cannot pin down marks the method uncertain, which keeps it out of the
//! non-observable set.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::classfile::{ClassPool, FieldRef, MethodId, MethodModel, Opcode, Operand};
use crate::flow::{successors, MethodFlow, Value};
use crate::hierarchy::{CallGraph, CallSite, DispatchKind, TypeHierarchy};
use crate::knowledge::{CalleeClass, KnowledgeBase};
use crate::metrics::{detect_trivial, exclusion, TrivialKind};
use crate::mockability::{FieldKey, Injectability, Provenance};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ObservationPoint {
    ReturnValue,
    EscapingException { exception: String },
    ReadableFieldWrite { field: FieldRef },
    MockableDependencyCall { offset: u32, callee: MethodId },
    /// A static or self call to a pool method that has observable side effects.
    CalleeEffect { offset: u32, callee: MethodId },
}

impl ObservationPoint {
    fn is_side_effect(&self) -> bool {
        !matches!(self, ObservationPoint::ReturnValue)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Effects {
    pub points: BTreeSet<ObservationPoint>,
    /// Some effect could not be classified; the method is never reported as non-observable.
    pub uncertain: bool,
}

impl Effects {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty() && !self.uncertain
    }

    fn has_side_effect(&self) -> bool {
        self.uncertain || self.points.iter().any(ObservationPoint::is_side_effect)
    }
}

/// Shared inputs of the per-method effect computation.
pub struct ObservabilityContext<'a> {
    pub pool: &'a ClassPool,
    pub hierarchy: &'a TypeHierarchy,
    pub graph: &'a CallGraph,
    pub kb: &'a KnowledgeBase,
    readable: HashSet<FieldKey>,
}

impl<'a> ObservabilityContext<'a> {
    pub fn new(pool: &'a ClassPool, hierarchy: &'a TypeHierarchy, graph: &'a CallGraph, kb: &'a KnowledgeBase) -> Self {
        let visibility = kb.test_visibility;
        let fields = graph.fields();
        let mut readable = HashSet::new();
        for c in pool.classes() {
            for f in &c.fields {
                if visibility.allows(f.access) {
                    readable.insert(FieldRef::new(&c.internal_name, &f.name, &f.descriptor));
                }
            }
        }
        // A field is also readable through any test-visible method that
        // returns something and reads it (trivial getters included).
        for m in pool.methods() {
            if !visibility.allows(m.access) || exclusion(m).is_some() || m.descriptor().ret.is_none() {
                continue;
            }
            if detect_trivial(m) == Some(TrivialKind::Getter) {
                if let Some(key) = m.instructions.iter().find_map(|i| i.field()).and_then(|f| fields.resolve(f)) {
                    readable.insert(key);
                }
                continue;
            }
            if let Some(flow) = graph.flow(&m.id) {
                for r in &flow.reads {
                    if let Some(key) = fields.resolve(&r.field) {
                        readable.insert(key);
                    }
                }
            }
        }
        ObservabilityContext { pool, hierarchy, graph, kb, readable }
    }

    /// Whether a test can read the field back after the method ran. `None` if
    /// the field is not declared in the pool.
    pub fn is_readable(&self, field: &FieldRef) -> Option<bool> {
        let key = self.graph.fields().resolve(field)?;
        Some(self.readable.contains(&key))
    }
}

fn thrown_type(m: &MethodModel, v: Value) -> Option<&str> {
    match v {
        Value::New(i) => match &m.instructions[i].operand {
            Operand::Type(t) => Some(t),
            _ => None,
        },
        _ => None,
    }
}

/// Whether the exception thrown at instruction `i` is caught by a handler
/// that certainly applies, never throws again and never stores the caught
/// exception where a test could read it.
fn swallowed(m: &MethodModel, flow: &MethodFlow, i: usize, v: Value, ctx: &ObservabilityContext<'_>) -> bool {
    let h = ctx.hierarchy;
    let offset = m.instructions[i].offset;
    let Some(handler) = m.exception_table.iter().find(|e| e.covers(offset)) else {
        return false;
    };
    let catches = match handler.catch_type.as_deref() {
        None | Some("java/lang/Throwable") => true,
        Some(catch) => thrown_type(m, v).is_some_and(|t| h.is_subtype(t, catch)),
    };
    if !catches {
        return false;
    }
    let Some(start) = m.index_of_offset(handler.handler) else { return false };
    let mut seen = vec![false; m.instructions.len()];
    let mut queue = VecDeque::from([start]);
    while let Some(j) = queue.pop_front() {
        if std::mem::replace(&mut seen[j], true) {
            continue;
        }
        if m.instructions[j].opcode == Opcode::ATHROW {
            return false;
        }
        let persists = flow
            .stores
            .iter()
            .any(|s| s.index == j && s.value == Value::Caught && ctx.is_readable(&s.field) != Some(false));
        if persists {
            return false;
        }
        queue.extend(successors(m, j));
    }
    true
}

fn receiver_injectability(site: &CallSite) -> Injectability {
    site.receiver.as_ref().map_or(Injectability::Unknown, Provenance::injectability)
}

/// Calls whose callee runs on the object under test or without an object,
/// so the callee's side effects are the caller's own.
fn inherits_effects(site: &CallSite) -> bool {
    match site.kind {
        DispatchKind::Static => true,
        DispatchKind::Special | DispatchKind::Virtual | DispatchKind::Interface => {
            matches!(site.receiver, Some(Provenance::ThisReference))
        }
        DispatchKind::Dynamic => false,
    }
}

/// Effects of `m` itself, not counting what its callees do.
pub fn observable_effects(m: &MethodModel, ctx: &ObservabilityContext<'_>) -> Effects {
    let mut e = Effects::default();
    if m.descriptor().ret.is_some() {
        e.points.insert(ObservationPoint::ReturnValue);
    }
    for x in &m.declared_exceptions {
        e.points.insert(ObservationPoint::EscapingException { exception: x.clone() });
    }
    let empty = MethodFlow::default();
    let flow = ctx.graph.flow(&m.id).unwrap_or(&empty);
    for &(i, v) in &flow.throws {
        if !swallowed(m, flow, i, v, ctx) {
            let exception = thrown_type(m, v).unwrap_or("java/lang/Throwable").to_string();
            e.points.insert(ObservationPoint::EscapingException { exception });
        }
    }
    for s in &flow.stores {
        let readable = ctx.is_readable(&s.field);
        let field = ctx.graph.fields().resolve(&s.field).unwrap_or_else(|| s.field.clone());
        match s.object {
            None | Some(Value::This | Value::Param(_)) => match readable {
                Some(true) => {
                    e.points.insert(ObservationPoint::ReadableFieldWrite { field });
                }
                Some(false) => {}
                None => e.uncertain = true,
            },
            Some(Value::New(_) | Value::Null) => {}
            Some(_) => {
                if readable != Some(false) {
                    e.uncertain = true;
                }
            }
        }
    }
    for site in ctx.graph.sites(&m.id) {
        if matches!(site.kind, DispatchKind::Static | DispatchKind::Dynamic) {
            continue;
        }
        if receiver_injectability(site) != Injectability::NonInjectable && ctx.kb.classify(&site.declared) != CalleeClass::Sink {
            e.points.insert(ObservationPoint::MockableDependencyCall { offset: site.offset, callee: site.declared.clone() });
        }
    }
    e
}

/// Effects of every method body, with side effects of static and self calls
/// into the pool attributed to the caller.
pub fn compute_effects(ctx: &ObservabilityContext<'_>) -> BTreeMap<MethodId, Effects> {
    let mut effects: BTreeMap<MethodId, Effects> = ctx
        .pool
        .methods()
        .filter(|m| m.has_body())
        .map(|m| (m.id.clone(), observable_effects(m, ctx)))
        .collect();

    // Least fixed point of "has side effects" along inheriting call edges.
    let mut inheriting_callers: HashMap<&MethodId, Vec<&CallSite>> = HashMap::new();
    for site in ctx.graph.all_sites() {
        if inherits_effects(site) && !site.has_unknown_target() {
            for t in site.target_methods() {
                inheriting_callers.entry(t).or_default().push(site);
            }
        }
    }
    let mut active: HashSet<MethodId> = effects.iter().filter(|(_, e)| e.has_side_effect()).map(|(m, _)| m.clone()).collect();
    let mut queue: VecDeque<MethodId> = active.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let mut inherited: BTreeMap<MethodId, BTreeSet<ObservationPoint>> = BTreeMap::new();
    while let Some(t) = queue.pop_front() {
        for site in inheriting_callers.get(&t).into_iter().flatten() {
            inherited
                .entry(site.caller.clone())
                .or_default()
                .insert(ObservationPoint::CalleeEffect { offset: site.offset, callee: site.declared.clone() });
            if active.insert(site.caller.clone()) {
                queue.push_back(site.caller.clone());
            }
        }
    }
    for (m, points) in inherited {
        if let Some(e) = effects.get_mut(&m) {
            e.points.extend(points);
        }
    }
    effects
}

/// Analyzable methods with nothing a test could observe.
pub fn compute_nonobservable(pool: &ClassPool, effects: &BTreeMap<MethodId, Effects>) -> BTreeSet<MethodId> {
    pool.methods()
        .filter(|m| exclusion(m).is_none())
        .filter(|m| effects.get(&m.id).is_some_and(Effects::is_empty))
        .map(|m| m.id.clone())
        .collect()
}
