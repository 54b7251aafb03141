//! End-to-end analysis: load, resolve, compute verdicts and build the report.

use std::collections::{BTreeMap, BTreeSet};

use crate::classfile::{load_inputs, method_loc, ClassParser, ClassPool, Input, LoadError, MethodId, Role};
use crate::classify::{
    aggregate_segmentation, classify_method, module_of, package_of, Classification, InputRecord, MethodRecord, Report,
    ReportHeader, ScopeLevel, SCHEMA_VERSION, TOOL_NAME,
};
use crate::hierarchy::{build_call_graph, build_hierarchy, CallGraph, CyclicHierarchy, TypeHierarchy};
use crate::knowledge::KnowledgeBase;
use crate::metrics::cyclomatic_complexity;
use crate::mockability::{compute_nonmockable, explain_trace, Verdicts};
use crate::observability::{compute_effects, compute_nonobservable, Effects, ObservabilityContext};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Hierarchy(#[from] CyclicHierarchy),
}

/// Every intermediate result of one run, kept for queries such as `explain`.
pub struct Analysis {
    pub inputs: Vec<Input>,
    pub kb: KnowledgeBase,
    pub pool: ClassPool,
    pub hierarchy: TypeHierarchy,
    pub graph: CallGraph,
    pub verdicts: Verdicts,
    pub effects: BTreeMap<MethodId, Effects>,
    pub nonobservable: BTreeSet<MethodId>,
}

impl Analysis {
    pub fn run(inputs: &[Input], kb: KnowledgeBase, parser: &ClassParser) -> Result<Self, AnalysisError> {
        let pool = load_inputs(inputs, parser)?;
        Self::from_pool(inputs, kb, pool)
    }

    pub fn from_pool(inputs: &[Input], kb: KnowledgeBase, pool: ClassPool) -> Result<Self, AnalysisError> {
        let hierarchy = build_hierarchy(&pool)?;
        let graph = build_call_graph(&pool, &hierarchy, kb.test_visibility);
        let verdicts = compute_nonmockable(&graph, &kb);
        let ctx = ObservabilityContext::new(&pool, &hierarchy, &graph, &kb);
        let effects = compute_effects(&ctx);
        let nonobservable = compute_nonobservable(&pool, &effects);
        Ok(Analysis { inputs: inputs.to_vec(), kb, pool, hierarchy, graph, verdicts, effects, nonobservable })
    }

    /// `None` for methods not in the pool.
    pub fn classification(&self, id: &MethodId) -> Option<Classification> {
        let m = self.pool.method(id)?;
        Some(classify_method(m, &self.verdicts.get(id), self.nonobservable.contains(id)))
    }

    /// Records for every method of every application class, sorted by id.
    pub fn records(&self) -> Vec<MethodRecord> {
        let mut out = Vec::new();
        for c in self.pool.application_classes() {
            let module = module_of(c);
            let package = package_of(c);
            for m in &c.methods {
                let classification = classify_method(m, &self.verdicts.get(&m.id), self.nonobservable.contains(&m.id));
                let analyzable = !matches!(classification, Classification::Excluded { .. });
                let effects = self.effects.get(&m.id).filter(|_| analyzable);
                out.push(MethodRecord {
                    id: m.id.clone(),
                    module: module.clone(),
                    package: package.clone(),
                    loc: method_loc(m),
                    complexity: if m.has_body() { cyclomatic_complexity(m) } else { 0 },
                    observations: effects.map(|e| e.points.iter().cloned().collect()).unwrap_or_default(),
                    observability_uncertain: effects.is_some_and(|e| e.uncertain),
                    trace: if analyzable { explain_trace(&m.id, &self.verdicts).ok() } else { None },
                    classification,
                });
            }
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }

    pub fn report(&self, scope: ScopeLevel) -> Report {
        let methods = self.records();
        let segmentations = aggregate_segmentation(&methods, scope);
        Report {
            header: ReportHeader {
                tool: TOOL_NAME.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                schema_version: SCHEMA_VERSION,
                inputs: self
                    .inputs
                    .iter()
                    .map(|i| InputRecord { path: i.path.display().to_string(), role: i.role })
                    .collect(),
                kb_fingerprint: self.kb.fingerprint(),
                scope,
            },
            methods,
            segmentations,
            diagnostics: self.pool.diagnostics().to_vec(),
        }
    }

    pub fn application_method_count(&self) -> usize {
        self.pool
            .classes()
            .iter()
            .filter(|c| c.origin.role == Role::Application)
            .map(|c| c.methods.len())
            .sum()
    }
}
