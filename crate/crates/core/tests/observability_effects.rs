mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use testmap_core::classfile::{FieldRef, MethodId};
use testmap_core::hierarchy::DispatchKind;
use testmap_core::knowledge::{CalleeClass, EntrySource, KbEntry, KnowledgeBase, MethodPattern};
use testmap_core::mockability::Injectability;
use testmap_core::observability::{compute_effects, compute_nonobservable, Effects, ObservabilityContext, ObservationPoint};

fn id(s: &str) -> MethodId {
    s.parse().unwrap()
}

#[test]
fn figure_observations() {
    let a = common::analyze("figures");
    let fx = |m: &str| a.effects[&id(m)].clone();
    assert!(fx("fig6/Product.isExpired()Z").points.contains(&ObservationPoint::ReturnValue));
    // void, exception swallowed, only a logging sink on a non-injectable receiver
    assert_eq!(fx("fig9/App.send(Lfig9/Message;)V"), Effects::default());
    assert!(a.nonobservable.contains(&id("fig9/App.send(Lfig9/Message;)V")));

    let send10 = fx("fig10/App.send(Lfig10/Message;)V");
    let call = id("fig10/Client.call(Lfig10/Message;)V");
    assert!(send10
        .points
        .iter()
        .any(|p| matches!(p, ObservationPoint::MockableDependencyCall { callee, .. } if *callee == call)));
    assert!(!a.nonobservable.contains(&id("fig10/App.send(Lfig10/Message;)V")));

    // the stored date is read back by the public isExpired
    assert!(fx("fig7/Product.addExpiryDate()V").points.contains(&ObservationPoint::ReadableFieldWrite {
        field: FieldRef::new("fig7/Product", "expiryDate", "Ljava/time/LocalDateTime;")
    }));
}

#[test]
fn non_void_methods_are_never_nonobservable() {
    let a = common::analyze_all(KnowledgeBase::builtin());
    for m in a.pool.methods().filter(|m| m.has_body()) {
        let returns = m.descriptor().ret.is_some();
        assert_eq!(a.effects[&m.id].points.contains(&ObservationPoint::ReturnValue), returns, "{}", m.id);
        if returns {
            assert!(!a.nonobservable.contains(&m.id));
        }
    }
}

#[test]
fn thrown_exceptions_escape_unless_caught() {
    let a = common::analyze("metrics");
    // `throw new IllegalArgumentException(..)` outside any handler
    assert!(a.effects[&id("metrics/Branches.check(Ljava/lang/Object;)V")]
        .points
        .contains(&ObservationPoint::EscapingException { exception: "java/lang/IllegalArgumentException".into() }));
}

fn effects_with(a: &testmap_core::Analysis, kb: &KnowledgeBase, g: &testmap_core::hierarchy::CallGraph) -> BTreeMap<MethodId, Effects> {
    let ctx = ObservabilityContext::new(&a.pool, &a.hierarchy, g, kb);
    compute_effects(&ctx)
}

fn contained(small: &BTreeMap<MethodId, Effects>, big: &BTreeMap<MethodId, Effects>) -> Result<(), String> {
    for (m, e) in small {
        let b = &big[m];
        if !e.points.is_subset(&b.points) || (e.uncertain && !b.uncertain) {
            return Err(format!("{m}: {e:?} not within {b:?}"));
        }
    }
    Ok(())
}

#[test]
fn injectability_only_adds_observations() {
    let a = common::analyze_all(KnowledgeBase::builtin());
    let fields: Vec<FieldRef> = a
        .graph
        .fields()
        .iter()
        .filter(|(_, i)| *i != Injectability::Injectable)
        .map(|(f, _)| f.clone())
        .collect();
    for f in fields {
        let g = a.graph.with_field_injectability(&f, Injectability::Injectable);
        let after = effects_with(&a, &a.kb, &g);
        contained(&a.effects, &after).unwrap();
    }
}

#[test]
fn nonobservable_requires_empty_certain_effects() {
    let a = common::analyze_all(KnowledgeBase::builtin());
    let expected = compute_nonobservable(&a.pool, &a.effects);
    assert_eq!(expected, a.nonobservable);
    for m in &a.nonobservable {
        assert!(a.effects[m].is_empty());
    }
}

fn called_methods() -> Vec<MethodId> {
    let a = common::analyze_all(KnowledgeBase::builtin());
    let mut v: Vec<MethodId> = a
        .graph
        .all_sites()
        .filter(|s| s.kind != DispatchKind::Dynamic)
        .map(|s| s.declared.clone())
        .collect();
    v.sort();
    v.dedup();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sinks_contribute_nothing(ix in any::<proptest::sample::Index>()) {
        let callees = called_methods();
        let callee = &callees[ix.index(callees.len())];
        let a = common::analyze_all(KnowledgeBase::builtin());
        let mut kb = KnowledgeBase::builtin();
        kb.push(KbEntry {
            pattern: MethodPattern::new(&callee.dotted_owner(), &callee.name, &callee.descriptor).unwrap(),
            classification: CalleeClass::Sink,
            source: EntrySource::Builtin,
        });
        let after = effects_with(&a, &kb, &a.graph);
        prop_assert!(contained(&after, &a.effects).is_ok());
    }
}
