//! Type hierarchy, class-hierarchy-analysis dispatch and the call graph.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classfile::{ClassPool, MethodId, Opcode};
use crate::flow::{simulate, MethodFlow};
use crate::knowledge::TestVisibility;
use crate::mockability::{provenance_of, FieldInjectability, Provenance};

const ROOT: &str = "java/lang/Object";

/// Members of the root type, which may be phantom but whose interface is fixed.
const ROOT_METHODS: [&str; 11] = [
    "equals(Ljava/lang/Object;)Z",
    "hashCode()I",
    "toString()Ljava/lang/String;",
    "getClass()Ljava/lang/Class;",
    "clone()Ljava/lang/Object;",
    "finalize()V",
    "notify()V",
    "notifyAll()V",
    "wait()V",
    "wait(J)V",
    "wait(JI)V",
];

#[derive(Debug, Clone)]
struct TypeInfo {
    super_name: Option<String>,
    interfaces: Vec<String>,
    is_interface: bool,
    is_concrete: bool,
    is_final: bool,
    /// `name + descriptor` → declared abstract.
    methods: HashMap<String, bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    Extends,
    Implements,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cyclic type hierarchy through {0}")]
pub struct CyclicHierarchy(pub String);

#[derive(Debug, Clone, Default)]
pub struct TypeHierarchy {
    types: HashMap<String, TypeInfo>,
    /// Direct subtypes, sorted.
    subtypes: HashMap<String, Vec<String>>,
    phantoms: BTreeSet<String>,
}

pub fn build_hierarchy(pool: &ClassPool) -> Result<TypeHierarchy, CyclicHierarchy> {
    let mut h = TypeHierarchy::default();
    for c in pool.classes() {
        let methods = c
            .methods
            .iter()
            .map(|m| (format!("{}{}", m.id.name, m.id.descriptor), m.access.is_abstract()))
            .collect();
        h.types.insert(
            c.internal_name.clone(),
            TypeInfo {
                super_name: c.super_name.clone(),
                interfaces: c.interfaces.clone(),
                is_interface: c.is_interface(),
                is_concrete: c.is_concrete(),
                is_final: c.access.is_final(),
                methods,
            },
        );
    }
    for c in pool.classes() {
        for parent in c.super_name.iter().chain(&c.interfaces) {
            h.subtypes.entry(parent.clone()).or_default().push(c.internal_name.clone());
            if !h.types.contains_key(parent) {
                h.phantoms.insert(parent.clone());
            }
        }
    }
    for subs in h.subtypes.values_mut() {
        subs.sort();
        subs.dedup();
    }
    h.check_acyclic()?;
    Ok(h)
}

/// Outcome of searching a type and its supertypes for a method body.
enum Lookup {
    Found(String),
    Phantom,
    Missing,
}

impl TypeHierarchy {
    fn check_acyclic(&self) -> Result<(), CyclicHierarchy> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut color: HashMap<&str, u8> = HashMap::new();
        let mut names: Vec<&String> = self.types.keys().collect();
        names.sort();
        for start in names {
            if color.contains_key(start.as_str()) {
                continue;
            }
            let mut stack: Vec<(&str, usize)> = vec![(start, 0)];
            color.insert(start, 1);
            while let Some((node, next)) = stack.pop() {
                let info = &self.types[node];
                let parents: Vec<&String> = info.super_name.iter().chain(&info.interfaces).collect();
                if next < parents.len() {
                    stack.push((node, next + 1));
                    let p = parents[next].as_str();
                    if !self.types.contains_key(p) {
                        continue;
                    }
                    match color.get(p) {
                        Some(1) => return Err(CyclicHierarchy(p.to_string())),
                        Some(_) => {}
                        None => {
                            color.insert(p, 1);
                            stack.push((p, 0));
                        }
                    }
                } else {
                    color.insert(node, 2);
                }
            }
        }
        Ok(())
    }

    pub fn is_parsed(&self, name: &str) -> bool {
        self.types.contains_key(name)
    }

    pub fn is_phantom(&self, name: &str) -> bool {
        !self.types.contains_key(name)
    }

    /// Supertypes referenced by parsed types but absent from the pool.
    pub fn phantoms(&self) -> &BTreeSet<String> {
        &self.phantoms
    }

    pub fn super_of(&self, name: &str) -> Option<&str> {
        self.types.get(name)?.super_name.as_deref()
    }

    pub fn interfaces_of(&self, name: &str) -> &[String] {
        self.types.get(name).map_or(&[], |t| &t.interfaces)
    }

    /// Phantoms are assumed concrete.
    pub fn is_concrete(&self, name: &str) -> bool {
        self.types.get(name).is_none_or(|t| t.is_concrete)
    }

    pub fn is_final(&self, name: &str) -> bool {
        self.types.get(name).is_some_and(|t| t.is_final)
    }

    pub fn is_interface(&self, name: &str) -> bool {
        self.types.get(name).is_some_and(|t| t.is_interface)
    }

    pub fn direct_subtypes(&self, name: &str) -> &[String] {
        self.subtypes.get(name).map_or(&[], Vec::as_slice)
    }

    /// All direct supertype edges of parsed types, sorted.
    pub fn edges(&self) -> Vec<(String, String, EdgeKind)> {
        let mut out = Vec::new();
        for (name, info) in &self.types {
            if let Some(s) = &info.super_name {
                out.push((name.clone(), s.clone(), EdgeKind::Extends));
            }
            for i in &info.interfaces {
                out.push((name.clone(), i.clone(), EdgeKind::Implements));
            }
        }
        out.sort();
        out
    }

    /// `name` and every parsed transitive subtype, sorted.
    pub fn subtype_cone(&self, name: &str) -> Vec<String> {
        let mut seen: BTreeSet<String> = BTreeSet::new();
        let mut queue = VecDeque::from([name.to_string()]);
        while let Some(t) = queue.pop_front() {
            if !seen.insert(t.clone()) {
                continue;
            }
            for s in self.direct_subtypes(&t) {
                queue.push_back(s.clone());
            }
        }
        seen.into_iter().collect()
    }

    /// Whether `sub` equals `sup` or reaches it through parsed supertype edges.
    pub fn is_subtype(&self, sub: &str, sup: &str) -> bool {
        let mut queue = VecDeque::from([sub.to_string()]);
        let mut seen = HashSet::new();
        while let Some(t) = queue.pop_front() {
            if t == sup {
                return true;
            }
            if !seen.insert(t.clone()) {
                continue;
            }
            if let Some(info) = self.types.get(&t) {
                queue.extend(info.super_name.iter().cloned());
                queue.extend(info.interfaces.iter().cloned());
            }
        }
        false
    }

    fn declares(&self, owner: &str, key: &str, want_body: bool) -> bool {
        self.types
            .get(owner)
            .and_then(|t| t.methods.get(key))
            .is_some_and(|&is_abstract| !(want_body && is_abstract))
    }

    /// Searches the superclass chain of `start`, then superinterface default methods.
    fn lookup_upward(&self, start: &str, key: &str) -> Lookup {
        let mut chain = Vec::new();
        let mut current = Some(start.to_string());
        while let Some(c) = current {
            if self.is_phantom(&c) {
                if c != ROOT || ROOT_METHODS.contains(&key) {
                    return Lookup::Phantom;
                }
                break;
            }
            if self.declares(&c, key, true) {
                return Lookup::Found(c);
            }
            current = self.types[&c].super_name.clone();
            chain.push(c);
        }
        // default methods, breadth first over the superinterfaces of the chain
        let mut queue: VecDeque<String> = chain.iter().flat_map(|c| self.interfaces_of(c).iter().cloned()).collect();
        let mut seen = HashSet::new();
        while let Some(i) = queue.pop_front() {
            if !seen.insert(i.clone()) {
                continue;
            }
            if self.is_phantom(&i) {
                return Lookup::Phantom;
            }
            if self.declares(&i, key, true) {
                return Lookup::Found(i);
            }
            queue.extend(self.interfaces_of(&i).iter().cloned());
        }
        Lookup::Missing
    }

    /// CHA dispatch targets of a call, sorted. Unresolvable parts yield [`Target::Unknown`].
    pub fn resolve(&self, kind: DispatchKind, declared: &MethodId) -> Vec<Target> {
        let key = format!("{}{}", declared.name, declared.descriptor);
        let found = |l: Lookup, name: &str| match l {
            Lookup::Found(owner) => Target::Method(MethodId::new(owner, name, declared.descriptor.clone())),
            Lookup::Phantom | Lookup::Missing => Target::Unknown,
        };
        let mut out: Vec<Target> = match kind {
            DispatchKind::Dynamic => vec![Target::Unknown],
            _ if self.is_phantom(&declared.owner) => vec![Target::Unknown],
            DispatchKind::Static | DispatchKind::Special => {
                if declared.is_constructor() {
                    vec![if self.declares(&declared.owner, &key, true) {
                        Target::Method(declared.clone())
                    } else {
                        Target::Unknown
                    }]
                } else if self.is_interface(&declared.owner) && kind == DispatchKind::Static {
                    // static interface methods are not inherited
                    vec![if self.declares(&declared.owner, &key, true) {
                        Target::Method(declared.clone())
                    } else {
                        Target::Unknown
                    }]
                } else {
                    vec![found(self.lookup_upward(&declared.owner, &key), &declared.name)]
                }
            }
            DispatchKind::Virtual | DispatchKind::Interface => self
                .subtype_cone(&declared.owner)
                .iter()
                .filter(|t| self.is_parsed(t) && self.is_concrete(t))
                .filter_map(|t| match self.lookup_upward(t, &key) {
                    Lookup::Missing => None,
                    l => Some(found(l, &declared.name)),
                })
                .collect(),
        };
        if out.is_empty() {
            out.push(Target::Unknown);
        }
        out.sort();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DispatchKind {
    Static,
    Special,
    Virtual,
    Interface,
    Dynamic,
}

impl DispatchKind {
    pub fn of(op: Opcode) -> Option<DispatchKind> {
        Some(match op {
            Opcode::INVOKESTATIC => DispatchKind::Static,
            Opcode::INVOKESPECIAL => DispatchKind::Special,
            Opcode::INVOKEVIRTUAL => DispatchKind::Virtual,
            Opcode::INVOKEINTERFACE => DispatchKind::Interface,
            Opcode::INVOKEDYNAMIC => DispatchKind::Dynamic,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Target {
    Method(MethodId),
    Unknown,
}

impl Target {
    pub fn method(&self) -> Option<&MethodId> {
        match self {
            Target::Method(m) => Some(m),
            Target::Unknown => None,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Method(m) => m.fmt(f),
            Target::Unknown => f.write_str("<unknown>"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallSite {
    pub caller: MethodId,
    pub offset: u32,
    pub line: Option<u32>,
    pub kind: DispatchKind,
    pub declared: MethodId,
    /// `None` for static and dynamic calls, which have no receiver.
    pub receiver: Option<Provenance>,
    pub targets: Vec<Target>,
}

impl CallSite {
    pub fn has_unknown_target(&self) -> bool {
        self.targets.contains(&Target::Unknown)
    }

    pub fn target_methods(&self) -> impl Iterator<Item = &MethodId> {
        self.targets.iter().filter_map(Target::method)
    }
}

/// CHA targets of an existing call site.
pub fn resolve_call(site: &CallSite, h: &TypeHierarchy) -> Vec<Target> {
    h.resolve(site.kind, &site.declared)
}

/// Call sites of every method body in the pool, plus the per-method flow
/// facts and field injectability they were derived from.
#[derive(Debug, Clone, Default)]
pub struct CallGraph {
    nodes: BTreeSet<MethodId>,
    sites: BTreeMap<MethodId, Vec<CallSite>>,
    flows: HashMap<MethodId, MethodFlow>,
    fields: FieldInjectability,
    final_types: HashSet<String>,
}

pub fn build_call_graph(pool: &ClassPool, h: &TypeHierarchy, visibility: TestVisibility) -> CallGraph {
    let methods: Vec<_> = pool.methods().filter(|m| m.has_body()).collect();
    let flows: HashMap<MethodId, MethodFlow> = methods.par_iter().map(|m| (m.id.clone(), simulate(m))).collect();
    let fields = FieldInjectability::compute(pool, &flows, visibility);
    let sites: BTreeMap<MethodId, Vec<CallSite>> = methods
        .par_iter()
        .map(|m| {
            let flow = &flows[&m.id];
            let sites = m
                .instructions
                .iter()
                .enumerate()
                .filter_map(|(i, ins)| {
                    let kind = DispatchKind::of(ins.opcode)?;
                    let declared = ins.callee()?.clone();
                    let receiver = match kind {
                        DispatchKind::Static | DispatchKind::Dynamic => None,
                        _ => Some(match flow.reached[i] {
                            true => provenance_of(m, flow.receivers[&ins.offset], &fields),
                            false => Provenance::Unknown,
                        }),
                    };
                    Some(CallSite {
                        caller: m.id.clone(),
                        offset: ins.offset,
                        line: m.line_at(ins.offset),
                        kind,
                        targets: h.resolve(kind, &declared),
                        declared,
                        receiver,
                    })
                })
                .collect();
            (m.id.clone(), sites)
        })
        .collect();
    let final_types = pool.classes().iter().filter(|c| c.access.is_final()).map(|c| c.internal_name.clone()).collect();
    CallGraph { nodes: pool.methods().map(|m| m.id.clone()).collect(), sites, flows, fields, final_types }
}

impl CallGraph {
    pub fn nodes(&self) -> &BTreeSet<MethodId> {
        &self.nodes
    }

    /// Outgoing sites of `caller`, ordered by offset.
    pub fn sites(&self, caller: &MethodId) -> &[CallSite] {
        self.sites.get(caller).map_or(&[], Vec::as_slice)
    }

    /// All sites ordered by caller, then offset.
    pub fn all_sites(&self) -> impl Iterator<Item = &CallSite> {
        self.sites.values().flatten()
    }

    pub fn callers(&self) -> impl Iterator<Item = &MethodId> {
        self.sites.keys()
    }

    pub fn edge_count(&self) -> usize {
        self.sites.values().map(Vec::len).sum()
    }

    pub fn flow(&self, m: &MethodId) -> Option<&MethodFlow> {
        self.flows.get(m)
    }

    /// Whether `name` is a final class of the pool.
    pub fn is_final_type(&self, name: &str) -> bool {
        self.final_types.contains(name)
    }

    pub fn fields(&self) -> &FieldInjectability {
        &self.fields
    }

    /// Copy of the graph with one field's injectability replaced, as if the
    /// code had been refactored to make it injectable (or not).
    pub fn with_field_injectability(&self, field: &crate::mockability::FieldKey, value: crate::mockability::Injectability) -> CallGraph {
        let mut g = self.clone();
        g.fields.set(field.clone(), value);
        for site in g.sites.values_mut().flatten() {
            if let Some(p) = &mut site.receiver {
                p.set_injectability_of(field, value);
            }
        }
        g
    }
}
