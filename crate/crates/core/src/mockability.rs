//! Receiver provenance, field injectability and the non-mockable fixed point.
//!
//! A method is non-mockable when running it in a unit test necessarily
//! reaches a must-mock callee that the test has no way to replace: the call
//! is static (and static mocking is off) or goes through an object the test
//! cannot inject. Everything uncertain counts as mockable, so every reported
//! verdict is backed by a concrete chain of calls.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classfile::{ClassPool, FieldRef, MethodId, MethodModel, Operand};
use crate::flow::{MethodFlow, Value};
use crate::hierarchy::{CallGraph, CallSite, DispatchKind};
use crate::knowledge::{CalleeClass, Category, KnowledgeBase, TestVisibility};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Injectability {
    Injectable,
    NonInjectable,
    Unknown,
}

/// Fields are keyed by their declaring class.
pub type FieldKey = FieldRef;

/// Where the receiver of an instance call comes from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Provenance {
    /// 1-based declared parameter position.
    Parameter { index: u16 },
    FieldRead { field: FieldRef, injectability: Injectability },
    StaticFieldRead { field: FieldRef, injectability: Injectability },
    NewInstance { class: String },
    ReturnOf { offset: u32, callee: MethodId },
    ThisReference,
    Unknown,
}

impl Provenance {
    /// Whether a test could hand in a replacement for this object.
    pub fn injectability(&self) -> Injectability {
        match self {
            Provenance::Parameter { .. } => Injectability::Injectable,
            Provenance::FieldRead { injectability, .. } | Provenance::StaticFieldRead { injectability, .. } => *injectability,
            // The object under test is real, and so is anything it allocates.
            Provenance::NewInstance { .. } | Provenance::ThisReference => Injectability::NonInjectable,
            Provenance::ReturnOf { .. } | Provenance::Unknown => Injectability::Unknown,
        }
    }

    pub fn field(&self) -> Option<&FieldRef> {
        match self {
            Provenance::FieldRead { field, .. } | Provenance::StaticFieldRead { field, .. } => Some(field),
            _ => None,
        }
    }

    pub(crate) fn set_injectability_of(&mut self, key: &FieldKey, value: Injectability) {
        match self {
            Provenance::FieldRead { field, injectability } | Provenance::StaticFieldRead { field, injectability } if field == key => {
                *injectability = value;
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone)]
struct StoreFact {
    value: Value,
    method_visible: bool,
}

/// Injectability of every field declared in the pool.
#[derive(Debug, Clone, Default)]
pub struct FieldInjectability {
    verdicts: HashMap<FieldKey, Injectability>,
    /// `(class, field name)` → declaring key, for resolving inherited references.
    declared: HashMap<(String, String), FieldKey>,
    supers: HashMap<String, String>,
}

impl FieldInjectability {
    pub fn compute(pool: &ClassPool, flows: &HashMap<MethodId, MethodFlow>, visibility: TestVisibility) -> Self {
        let mut table = FieldInjectability::default();
        for c in pool.classes() {
            if let Some(s) = &c.super_name {
                table.supers.insert(c.internal_name.clone(), s.clone());
            }
            for f in &c.fields {
                let key = FieldRef::new(&c.internal_name, &f.name, &f.descriptor);
                table.declared.insert((c.internal_name.clone(), f.name.clone()), key);
            }
        }
        let mut stores: HashMap<FieldKey, Vec<StoreFact>> = HashMap::new();
        for m in pool.methods() {
            let Some(flow) = flows.get(&m.id) else { continue };
            for s in &flow.stores {
                if let Some(key) = table.resolve(&s.field) {
                    stores.entry(key).or_default().push(StoreFact {
                        value: s.value,
                        method_visible: visibility.allows(m.access),
                    });
                }
            }
        }
        for c in pool.classes() {
            for f in &c.fields {
                let key = FieldRef::new(&c.internal_name, &f.name, &f.descriptor);
                let facts = stores.get(&key).map_or(&[][..], Vec::as_slice);
                let v = decide(!f.access.is_final() && visibility.allows(f.access), facts);
                table.verdicts.insert(key, v);
            }
        }
        table
    }

    /// Declaring-class key of a field reference, if the field is declared in the pool.
    pub fn resolve(&self, field: &FieldRef) -> Option<FieldKey> {
        let mut owner = field.owner.clone();
        let mut hops = 0;
        loop {
            if let Some(key) = self.declared.get(&(owner.clone(), field.name.clone())) {
                return Some(key.clone());
            }
            owner = self.supers.get(&owner)?.clone();
            hops += 1;
            if hops > 10_000 {
                return None;
            }
        }
    }

    pub fn get(&self, field: &FieldRef) -> Injectability {
        self.resolve(field)
            .and_then(|k| self.verdicts.get(&k).copied())
            .unwrap_or(Injectability::Unknown)
    }

    pub fn set(&mut self, key: FieldKey, value: Injectability) {
        self.verdicts.insert(key, value);
    }

    /// All fields with their verdicts, sorted.
    pub fn iter(&self) -> impl Iterator<Item = (&FieldKey, Injectability)> {
        let mut all: Vec<_> = self.verdicts.iter().map(|(k, v)| (k, *v)).collect();
        all.sort();
        all.into_iter()
    }
}

fn decide(writable_from_test: bool, stores: &[StoreFact]) -> Injectability {
    if writable_from_test || stores.iter().any(|s| s.method_visible && matches!(s.value, Value::Param(_))) {
        return Injectability::Injectable;
    }
    let relevant: Vec<&StoreFact> = stores.iter().filter(|s| s.value != Value::Null).collect();
    if !relevant.is_empty() && relevant.iter().all(|s| matches!(s.value, Value::New(_) | Value::Static(_))) {
        Injectability::NonInjectable
    } else {
        Injectability::Unknown
    }
}

/// Injectability of one field, computed over the whole pool.
pub fn field_injectability(owner: &crate::classfile::ClassModel, field: &crate::classfile::FieldModel, g: &CallGraph) -> Injectability {
    g.fields().get(&FieldRef::new(&owner.internal_name, &field.name, &field.descriptor))
}

/// Converts an abstract value of method `m` into a provenance.
pub fn provenance_of(m: &MethodModel, v: Value, fields: &FieldInjectability) -> Provenance {
    let ins = |i: usize| &m.instructions[i];
    match v {
        Value::This => Provenance::ThisReference,
        Value::Param(index) => Provenance::Parameter { index },
        Value::Field(i) | Value::Static(i) => {
            let Some(f) = ins(i).field() else { return Provenance::Unknown };
            let field = fields.resolve(f).unwrap_or_else(|| f.clone());
            let injectability = fields.get(f);
            if matches!(v, Value::Field(_)) {
                Provenance::FieldRead { field, injectability }
            } else {
                Provenance::StaticFieldRead { field, injectability }
            }
        }
        Value::New(i) => Provenance::NewInstance {
            class: match &ins(i).operand {
                Operand::Type(t) => t.clone(),
                Operand::MultiArray { class, .. } => class.clone(),
                _ => "[primitive".to_string(),
            },
        },
        Value::Return(i) => match ins(i).callee() {
            Some(callee) => Provenance::ReturnOf { offset: ins(i).offset, callee: callee.clone() },
            None => Provenance::Unknown,
        },
        Value::Top | Value::Unknown | Value::Null | Value::Caught => Provenance::Unknown,
    }
}

/// Receiver provenance of every instance call site in `m`, by offset.
pub fn simulate_receivers(m: &MethodModel, fields: &FieldInjectability) -> BTreeMap<u32, Provenance> {
    let flow = crate::flow::simulate(m);
    flow.receivers.iter().map(|(&off, &v)| (off, provenance_of(m, v, fields))).collect()
}

/// One hop of a non-mockable witness: the call site and the callee it leads to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub offset: u32,
    pub line: Option<u32>,
    pub callee: MethodId,
    pub receiver: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum MockabilityVerdict {
    Mockable,
    /// `witness` is `None` for methods the knowledge base marks must-mock themselves.
    NonMockable { category: Category, witness: Option<Witness>, depth: u32 },
}

impl MockabilityVerdict {
    pub fn category(&self) -> Option<Category> {
        match self {
            MockabilityVerdict::NonMockable { category, .. } => Some(*category),
            MockabilityVerdict::Mockable => None,
        }
    }
}

/// Verdicts for every call-graph node. Absent nodes are mockable.
#[derive(Debug, Clone, Default)]
pub struct Verdicts {
    nonmockable: BTreeMap<MethodId, MockabilityVerdict>,
    /// Must-mock callees outside the pool, reached as chain ends.
    external: BTreeMap<MethodId, Category>,
}

impl Verdicts {
    pub fn get(&self, m: &MethodId) -> MockabilityVerdict {
        if let Some(v) = self.nonmockable.get(m) {
            return v.clone();
        }
        match self.external.get(m) {
            Some(&category) => MockabilityVerdict::NonMockable { category, witness: None, depth: 0 },
            None => MockabilityVerdict::Mockable,
        }
    }

    pub fn is_nonmockable(&self, m: &MethodId) -> bool {
        self.nonmockable.contains_key(m)
    }

    /// Non-mockable call-graph nodes.
    pub fn nonmockable_set(&self) -> BTreeSet<MethodId> {
        self.nonmockable.keys().cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MethodId, &MockabilityVerdict)> {
        self.nonmockable.iter()
    }
}

/// Whether non-mockability of the callee carries over to the caller at `site`.
pub fn propagates(site: &CallSite, g: &CallGraph, kb: &KnowledgeBase) -> bool {
    match site.kind {
        DispatchKind::Dynamic => false,
        DispatchKind::Static => !kb.mock_static_methods,
        DispatchKind::Special | DispatchKind::Virtual | DispatchKind::Interface => {
            let receiver = site.receiver.as_ref().map_or(Injectability::Unknown, Provenance::injectability);
            receiver == Injectability::NonInjectable || (!kb.mock_final_classes && g.is_final_type(&site.declared.owner))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cause {
    /// The declared callee is must-mock itself.
    Base(Category),
    /// Every resolved target is non-mockable.
    Targets,
}

fn site_cause(site: &CallSite, g: &CallGraph, kb: &KnowledgeBase, marked: &HashSet<MethodId>) -> Option<Cause> {
    if !propagates(site, g, kb) {
        return None;
    }
    match kb.lookup(&site.declared).map(|e| e.classification) {
        Some(CalleeClass::MustMock(c)) => return Some(Cause::Base(c)),
        Some(CalleeClass::Sink | CalleeClass::Neutral) => return None,
        None => {}
    }
    let all_marked = !site.targets.is_empty()
        && !site.has_unknown_target()
        && site.target_methods().all(|t| marked.contains(t));
    all_marked.then_some(Cause::Targets)
}

/// Least fixed point of the non-mockable rules, with shortest witnesses.
pub fn compute_nonmockable(g: &CallGraph, kb: &KnowledgeBase) -> Verdicts {
    // Pool methods the knowledge base classifies directly.
    let mut bases: BTreeMap<MethodId, Category> = BTreeMap::new();
    let mut pinned: HashSet<MethodId> = HashSet::new();
    for m in g.nodes() {
        match kb.lookup(m).map(|e| e.classification) {
            Some(CalleeClass::MustMock(c)) => {
                bases.insert(m.clone(), c);
            }
            Some(_) => {
                pinned.insert(m.clone());
            }
            None => {}
        }
    }

    // Reverse edges: target → callers.
    let mut callers_of: HashMap<&MethodId, Vec<&MethodId>> = HashMap::new();
    for site in g.all_sites() {
        for t in site.target_methods() {
            callers_of.entry(t).or_default().push(&site.caller);
        }
    }
    for v in callers_of.values_mut() {
        v.sort();
        v.dedup();
    }

    let mut marked: HashSet<MethodId> = bases.keys().cloned().collect();
    let mut candidates: Vec<&MethodId> = g.callers().collect();
    while !candidates.is_empty() {
        let fresh: Vec<&MethodId> = candidates
            .par_iter()
            .copied()
            .filter(|m| !marked.contains(*m) && !pinned.contains(*m))
            .filter(|m| g.sites(m).iter().any(|s| site_cause(s, g, kb, &marked).is_some()))
            .collect();
        let mut next: BTreeSet<&MethodId> = BTreeSet::new();
        for m in &fresh {
            marked.insert((*m).clone());
            next.extend(callers_of.get(m).into_iter().flatten().copied());
        }
        candidates = next.into_iter().collect();
    }

    // Shortest distance to a must-mock callee, level by level.
    let violating: BTreeMap<&MethodId, Vec<(&CallSite, Cause)>> = g
        .callers()
        .filter(|m| marked.contains(*m) && !bases.contains_key(*m))
        .map(|m| {
            let v = g
                .sites(m)
                .iter()
                .filter_map(|s| site_cause(s, g, kb, &marked).map(|c| (s, c)))
                .collect();
            (m, v)
        })
        .collect();
    let mut depth: HashMap<&MethodId, u32> = bases.keys().map(|m| (m, 0)).collect();
    let mut level: Vec<&MethodId> = bases.keys().collect();
    let mut k = 0u32;
    loop {
        let mut next: BTreeSet<&MethodId> = BTreeSet::new();
        if k == 0 {
            for (m, sites) in &violating {
                if sites.iter().any(|(_, c)| matches!(c, Cause::Base(_))) {
                    next.insert(*m);
                }
            }
        }
        for t in &level {
            for c in callers_of.get(t).into_iter().flatten() {
                let through_t = violating.get(c).is_some_and(|sites| {
                    sites.iter().any(|(s, cause)| *cause == Cause::Targets && s.target_methods().any(|x| x == *t))
                });
                if through_t {
                    next.insert(*c);
                }
            }
        }
        next.retain(|m| !depth.contains_key(*m));
        if next.is_empty() {
            break;
        }
        k += 1;
        for m in &next {
            depth.insert(*m, k);
        }
        level = next.into_iter().collect();
    }

    let mut verdicts = Verdicts::default();
    for (m, &c) in &bases {
        verdicts.nonmockable.insert(m.clone(), MockabilityVerdict::NonMockable { category: c, witness: None, depth: 0 });
    }
    // Ascending depth so every hop's category is known before its callers.
    let mut ordered: Vec<(&MethodId, u32)> = violating.keys().map(|m| (*m, depth[*m])).collect();
    ordered.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    for (m, d) in ordered {
        let mut chosen: Option<(Witness, Category)> = None;
        for (s, cause) in &violating[m] {
            let hop = match cause {
                Cause::Base(c) if d == 1 => Some((s.declared.clone(), *c)),
                Cause::Base(_) => None,
                Cause::Targets => s
                    .target_methods()
                    .find(|t| depth.get(*t) == Some(&(d - 1)))
                    .map(|t| (t.clone(), verdicts.get(t).category().expect("shallower hop already decided"))),
            };
            if let Some((callee, category)) = hop {
                if let Cause::Base(_) = cause {
                    verdicts.external.entry(callee.clone()).or_insert(category);
                }
                let witness = Witness { offset: s.offset, line: s.line, callee, receiver: s.receiver.clone() };
                chosen = Some((witness, category));
                break;
            }
        }
        let (witness, category) = chosen.expect("every marked method has a witness at its depth");
        verdicts
            .nonmockable
            .insert(m.clone(), MockabilityVerdict::NonMockable { category, witness: Some(witness), depth: d });
    }
    verdicts
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHop {
    pub method: MethodId,
    /// Source line of the call to the next hop; `None` on the last hop.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<u32>,
}

/// Root-cause chain from a non-mockable method to the must-mock callee.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub category: Category,
    pub chain: Vec<TraceHop>,
    /// Fields through which the chain passes as non-injectable receivers.
    pub receiver_fields: Vec<FieldRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0} is mockable; there is nothing to explain")]
pub struct NotApplicable(pub MethodId);

pub fn explain_trace(m: &MethodId, verdicts: &Verdicts) -> Result<Trace, NotApplicable> {
    let MockabilityVerdict::NonMockable { category, .. } = verdicts.get(m) else {
        return Err(NotApplicable(m.clone()));
    };
    let mut chain = Vec::new();
    let mut receiver_fields = Vec::new();
    let mut current = m.clone();
    loop {
        match verdicts.get(&current) {
            MockabilityVerdict::NonMockable { witness: Some(w), .. } => {
                if let Some(f) = w.receiver.as_ref().and_then(Provenance::field) {
                    if !receiver_fields.contains(f) {
                        receiver_fields.push(f.clone());
                    }
                }
                chain.push(TraceHop { method: current, line: w.line });
                current = w.callee;
            }
            _ => {
                chain.push(TraceHop { method: current, line: None });
                break;
            }
        }
    }
    Ok(Trace { category, chain, receiver_fields })
}
