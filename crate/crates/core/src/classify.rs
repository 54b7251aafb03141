//! Per-method classification, the versioned JSON report, per-scope LOC
//! segmentation and report diffs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classfile::{ClassModel, MethodId, MethodModel, Role};
use crate::knowledge::Category;
use crate::metrics::{detect_trivial, exclusion, ExclusionReason, TrivialKind};
use crate::mockability::{MockabilityVerdict, Trace};
use crate::observability::ObservationPoint;

pub const TOOL_NAME: &str = "testmap";
pub const SCHEMA_VERSION: u32 = 1;

/// Why a method is not unit-testable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Reason {
    NonMockable(Category),
    Observability,
}

impl Reason {
    pub fn name(self) -> &'static str {
        match self {
            Reason::NonMockable(c) => c.name(),
            Reason::Observability => "Observability",
        }
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<Reason> for String {
    fn from(r: Reason) -> String {
        r.name().to_string()
    }
}

impl TryFrom<String> for Reason {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        if s == "Observability" {
            return Ok(Reason::Observability);
        }
        Category::from_name(&s).map(Reason::NonMockable).ok_or_else(|| format!("unknown reason `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Classification {
    Excluded { reason: ExclusionReason },
    Trivial { pattern: TrivialKind },
    Testable,
    /// `reasons` is never empty.
    NotTestable { reasons: BTreeSet<Reason> },
}

impl Classification {
    pub fn bucket(&self) -> Option<Bucket> {
        match self {
            Classification::Excluded { .. } => None,
            Classification::Trivial { .. } => Some(Bucket::Trivial),
            Classification::Testable => Some(Bucket::Testable),
            Classification::NotTestable { .. } => Some(Bucket::NotTestable),
        }
    }

    pub fn reasons(&self) -> impl Iterator<Item = Reason> + '_ {
        match self {
            Classification::NotTestable { reasons } => Some(reasons.iter().copied()),
            _ => None,
        }
        .into_iter()
        .flatten()
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Classification::Excluded { reason } => write!(f, "Excluded({reason:?})"),
            Classification::Trivial { pattern } => write!(f, "Trivial({pattern:?})"),
            Classification::Testable => f.write_str("Testable"),
            Classification::NotTestable { reasons } => {
                let names: Vec<&str> = reasons.iter().map(|r| r.name()).collect();
                write!(f, "NotTestable({})", names.join(", "))
            }
        }
    }
}

/// Excluded, then Trivial, then NotTestable, then Testable.
pub fn classify_method(m: &MethodModel, mockability: &MockabilityVerdict, nonobservable: bool) -> Classification {
    if let Some(reason) = exclusion(m) {
        return Classification::Excluded { reason };
    }
    if let Some(pattern) = detect_trivial(m) {
        return Classification::Trivial { pattern };
    }
    let mut reasons = BTreeSet::new();
    if let Some(c) = mockability.category() {
        reasons.insert(Reason::NonMockable(c));
    }
    if nonobservable {
        reasons.insert(Reason::Observability);
    }
    if reasons.is_empty() {
        Classification::Testable
    } else {
        Classification::NotTestable { reasons }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    NotTestable,
    Trivial,
    Testable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScopeLevel {
    #[default]
    Repo,
    Module,
    Package,
}

impl ScopeLevel {
    pub fn key(self, record: &MethodRecord) -> String {
        match self {
            ScopeLevel::Repo => "*".to_string(),
            ScopeLevel::Module => record.module.clone(),
            ScopeLevel::Package => record.package.clone(),
        }
    }
}

/// Archive file name for classes from archives; otherwise the top-level
/// directory under the input that holds the package tree, or the input
/// directory itself when packages start at its root.
pub fn module_of(class: &ClassModel) -> String {
    let input = &class.origin.input;
    let file_name = |p: &Path| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| p.display().to_string());
    match &class.origin.entry {
        None => input.parent().map(file_name).unwrap_or_default(),
        Some(_) if input.is_file() => file_name(input),
        Some(entry) => {
            let suffix = format!("{}.class", class.internal_name);
            let prefix = entry.strip_suffix(&suffix).unwrap_or(entry).trim_end_matches('/');
            match prefix.split('/').find(|c| !c.is_empty()) {
                Some(first) => first.to_string(),
                None => file_name(input),
            }
        }
    }
}

pub fn package_of(class: &ClassModel) -> String {
    let p = class.package().replace('/', ".");
    if p.is_empty() {
        "(default)".to_string()
    } else {
        p
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub tool: String,
    pub tool_version: String,
    pub schema_version: u32,
    pub inputs: Vec<InputRecord>,
    pub kb_fingerprint: String,
    pub scope: ScopeLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodRecord {
    pub id: MethodId,
    pub module: String,
    pub package: String,
    pub classification: Classification,
    pub loc: u32,
    pub complexity: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub observations: Vec<ObservationPoint>,
    /// Some effect could not be classified, so Observability was not claimed.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub observability_uncertain: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Trace>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct BucketShare {
    pub methods: u64,
    pub loc: u64,
    /// Rounded to one decimal; shares of a non-empty scope sum to exactly 100.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub level: ScopeLevel,
    pub scope: String,
    /// LOC of all non-excluded methods in the scope.
    pub loc_total: u64,
    pub not_testable: BucketShare,
    pub trivial: BucketShare,
    pub testable: BucketShare,
    /// LOC per reason; a method with several reasons counts toward each.
    pub reasons: BTreeMap<Reason, u64>,
}

impl Segmentation {
    pub fn share(&self, b: Bucket) -> &BucketShare {
        match b {
            Bucket::NotTestable => &self.not_testable,
            Bucket::Trivial => &self.trivial,
            Bucket::Testable => &self.testable,
        }
    }

    fn share_mut(&mut self, b: Bucket) -> &mut BucketShare {
        match b {
            Bucket::NotTestable => &mut self.not_testable,
            Bucket::Trivial => &mut self.trivial,
            Bucket::Testable => &mut self.testable,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub header: ReportHeader,
    /// Sorted by method id.
    pub methods: Vec<MethodRecord>,
    /// The repository total first, then one entry per scope of the header's level.
    pub segmentations: Vec<Segmentation>,
    #[serde(default)]
    pub diagnostics: Vec<crate::classfile::Diagnostic>,
}

impl Report {
    pub fn method(&self, id: &MethodId) -> Option<&MethodRecord> {
        self.methods.binary_search_by(|r| r.id.cmp(id)).ok().map(|i| &self.methods[i])
    }

    pub fn total(&self) -> Option<&Segmentation> {
        self.segmentations.iter().find(|s| s.level == ScopeLevel::Repo)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization is infallible");
        s.push('\n');
        s
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("report schema version {found} is not supported (expected {SCHEMA_VERSION})")]
    SchemaMismatch { found: u64 },
    #[error("malformed report: {0}")]
    Malformed(String),
}

/// Parses a report, checking the schema version before the body.
pub fn parse_report(text: &str) -> Result<Report, ReportError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ReportError::Malformed(e.to_string()))?;
    let found = value
        .pointer("/header/schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| ReportError::Malformed("missing header.schema_version".into()))?;
    if found != SCHEMA_VERSION as u64 {
        return Err(ReportError::SchemaMismatch { found });
    }
    serde_json::from_value(value).map_err(|e| ReportError::Malformed(e.to_string()))
}

/// Splits `units` among `weights` proportionally; floors first, then the
/// leftover units go to the largest remainders, earlier entries winning ties.
pub fn largest_remainder(weights: &[u64], units: u64) -> Vec<u64> {
    let total: u64 = weights.iter().sum();
    if total == 0 {
        return vec![0; weights.len()];
    }
    let scaled: Vec<(u64, u64)> = weights
        .iter()
        .map(|&w| {
            let q = w as u128 * units as u128;
            ((q / total as u128) as u64, (q % total as u128) as u64)
        })
        .collect();
    let mut out: Vec<u64> = scaled.iter().map(|&(f, _)| f).collect();
    let leftover = units - out.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| scaled[b].1.cmp(&scaled[a].1).then(a.cmp(&b)));
    for &i in order.iter().take(leftover as usize) {
        out[i] += 1;
    }
    out
}

const BUCKETS: [Bucket; 3] = [Bucket::NotTestable, Bucket::Trivial, Bucket::Testable];

fn segment(level: ScopeLevel, scope: String, methods: &[&MethodRecord]) -> Segmentation {
    let mut s = Segmentation {
        level,
        scope,
        loc_total: 0,
        not_testable: BucketShare::default(),
        trivial: BucketShare::default(),
        testable: BucketShare::default(),
        reasons: BTreeMap::new(),
    };
    for r in methods {
        let Some(b) = r.classification.bucket() else { continue };
        let loc = r.loc as u64;
        s.loc_total += loc;
        let share = s.share_mut(b);
        share.loc += loc;
        share.methods += 1;
        for reason in r.classification.reasons() {
            *s.reasons.entry(reason).or_default() += loc;
        }
    }
    let locs: Vec<u64> = BUCKETS.iter().map(|&b| s.share(b).loc).collect();
    for (b, tenths) in BUCKETS.into_iter().zip(largest_remainder(&locs, 1000)) {
        s.share_mut(b).percent = tenths as f64 / 10.0;
    }
    s
}

/// Repository total followed by one segmentation per scope at `level`.
pub fn aggregate_segmentation(methods: &[MethodRecord], level: ScopeLevel) -> Vec<Segmentation> {
    let all: Vec<&MethodRecord> = methods.iter().collect();
    let mut out = vec![segment(ScopeLevel::Repo, "*".to_string(), &all)];
    if level != ScopeLevel::Repo {
        let mut groups: BTreeMap<String, Vec<&MethodRecord>> = BTreeMap::new();
        for r in methods {
            groups.entry(level.key(r)).or_default().push(r);
        }
        out.extend(groups.into_iter().map(|(k, ms)| segment(level, k, &ms)));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct BucketDelta {
    pub loc: i64,
    /// Difference in tenths of a percent.
    pub percent_tenths: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopeDelta {
    pub level: ScopeLevel,
    pub scope: String,
    pub loc_total: i64,
    pub not_testable: BucketDelta,
    pub trivial: BucketDelta,
    pub testable: BucketDelta,
}

impl ScopeDelta {
    pub fn bucket(&self, b: Bucket) -> &BucketDelta {
        match b {
            Bucket::NotTestable => &self.not_testable,
            Bucket::Trivial => &self.trivial,
            Bucket::Testable => &self.testable,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.loc_total == 0 && BUCKETS.iter().all(|&b| *self.bucket(b) == BucketDelta::default())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub id: MethodId,
    pub before: Classification,
    pub after: Classification,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffReport {
    pub schema_version: u32,
    pub scopes: Vec<ScopeDelta>,
    /// Methods present in both reports whose classification changed.
    pub transitions: Vec<Transition>,
    /// Only in the first report (deleted or renamed).
    pub removed: Vec<MethodId>,
    /// Only in the second report.
    pub added: Vec<MethodId>,
}

fn tenths(p: f64) -> i64 {
    (p * 10.0).round() as i64
}

fn scope_delta(before: Option<&Segmentation>, after: Option<&Segmentation>, level: ScopeLevel, scope: &str) -> ScopeDelta {
    let loc_total = |s: Option<&Segmentation>| s.map_or(0, |s| s.loc_total as i64);
    let d = |b: Bucket| {
        let get = |s: Option<&Segmentation>| s.map_or((0, 0), |s| (s.share(b).loc as i64, tenths(s.share(b).percent)));
        let (bl, bp) = get(before);
        let (al, ap) = get(after);
        BucketDelta { loc: al - bl, percent_tenths: ap - bp }
    };
    ScopeDelta {
        level,
        scope: scope.to_string(),
        loc_total: loc_total(after) - loc_total(before),
        not_testable: d(Bucket::NotTestable),
        trivial: d(Bucket::Trivial),
        testable: d(Bucket::Testable),
    }
}

/// Bucket deltas per scope and classification changes per method id.
pub fn diff_reports(before: &Report, after: &Report) -> Result<DiffReport, ReportError> {
    for r in [before, after] {
        if r.header.schema_version != SCHEMA_VERSION {
            return Err(ReportError::SchemaMismatch { found: r.header.schema_version as u64 });
        }
    }
    let key = |s: &Segmentation| (s.level, s.scope.clone());
    let b: BTreeMap<_, &Segmentation> = before.segmentations.iter().map(|s| (key(s), s)).collect();
    let a: BTreeMap<_, &Segmentation> = after.segmentations.iter().map(|s| (key(s), s)).collect();
    let keys: BTreeSet<_> = b.keys().chain(a.keys()).cloned().collect();
    let scopes = keys
        .iter()
        .map(|k| scope_delta(b.get(k).copied(), a.get(k).copied(), k.0, &k.1))
        .collect();

    let bm: BTreeMap<&MethodId, &MethodRecord> = before.methods.iter().map(|r| (&r.id, r)).collect();
    let am: BTreeMap<&MethodId, &MethodRecord> = after.methods.iter().map(|r| (&r.id, r)).collect();
    let mut transitions = Vec::new();
    let mut removed = Vec::new();
    for (id, r) in &bm {
        match am.get(id) {
            Some(s) if s.classification != r.classification => transitions.push(Transition {
                id: (*id).clone(),
                before: r.classification.clone(),
                after: s.classification.clone(),
            }),
            Some(_) => {}
            None => removed.push((*id).clone()),
        }
    }
    let added = am.keys().filter(|id| !bm.contains_key(*id)).map(|id| (*id).clone()).collect();
    Ok(DiffReport { schema_version: SCHEMA_VERSION, scopes, transitions, removed, added })
}
