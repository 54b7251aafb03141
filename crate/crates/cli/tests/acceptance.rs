//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#[path = "../../core/tests/common/oracles.rs"]
#[allow(dead_code)]
mod oracles;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Output};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use testmap_core::classfile::{load_inputs, ClassParser, ClassPool, FieldRef, Input, MethodId};
use testmap_core::classify::{
    aggregate_segmentation, parse_report, Bucket, Classification, MethodRecord, Reason, Report, ScopeLevel,
};
use testmap_core::hierarchy::{CallGraph, DispatchKind};
use testmap_core::knowledge::{CalleeClass, Category, EntrySource, KbEntry, KnowledgeBase, MethodPattern};
use testmap_core::metrics::{cyclomatic_complexity, detect_trivial, exclusion, TrivialKind};
use testmap_core::mockability::{compute_nonmockable, Injectability};
use testmap_core::observability::ObservationPoint;
use testmap_core::treemap::{reason_color, Rect, TESTABLE, TRIVIAL};
use testmap_core::Analysis;

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/classes")
}

fn corpus(name: &str) -> PathBuf {
    fixtures().join(name)
}

fn jar() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/log4j-core-2.25.4.jar")
}

const CORPORA: [&str; 3] = ["figures", "hierarchy", "metrics"];

fn testmap(args: &[&std::ffi::OsStr]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_testmap")).args(args).env_remove("TESTMAP_KB").output().expect("binary runs")
}

fn succeeded(out: &Output, what: &str) -> Check {
    ensure!(
        out.status.success(),
        "{what} exited with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(())
}

/// `testmap analyze` over `apps`; returns the report bytes.
fn analyze_cli(apps: &[PathBuf], out: &Path, extra: &[&str]) -> Result<Vec<u8>, String> {
    let mut args: Vec<&std::ffi::OsStr> = extra.iter().map(|s| s.as_ref()).collect();
    args.push("analyze".as_ref());
    for a in apps {
        args.push("--app".as_ref());
        args.push(a.as_os_str());
    }
    args.push("--out".as_ref());
    args.push(out.as_os_str());
    succeeded(&testmap(&args), "analyze")?;
    std::fs::read(out.join("report.json")).map_err(|e| e.to_string())
}

fn parse(bytes: &[u8]) -> Result<Report, String> {
    parse_report(std::str::from_utf8(bytes).map_err(|e| e.to_string())?).map_err(|e| e.to_string())
}

fn tempdir() -> tempfile::TempDir {
    tempfile::tempdir().expect("temporary directory")
}

fn id(s: &str) -> MethodId {
    s.parse().expect("valid method id")
}

fn record<'a>(r: &'a Report, m: &str) -> Result<&'a MethodRecord, String> {
    r.method(&id(m)).ok_or_else(|| format!("{m} missing from the report"))
}

fn not_testable(reasons: &[Reason]) -> Classification {
    Classification::NotTestable { reasons: reasons.iter().copied().collect() }
}

fn figures() -> Check {
    let dir = tempdir();
    let start = Instant::now();
    let report = parse(&analyze_cli(&[corpus("figures")], dir.path(), &[])?)?;
    let elapsed = start.elapsed();

    let time = not_testable(&[Reason::NonMockable(Category::Time)]);
    for m in ["fig6/Product.addExpiryDate()V", "fig6/Product.isExpired()Z"] {
        ensure!(record(&report, m)?.classification == time, "{m}: {}", record(&report, m)?.classification);
    }
    for m in ["fig7/Product.addExpiryDate()V", "fig7/Product.isExpired()Z"] {
        ensure!(record(&report, m)?.classification == Classification::Testable, "{m}: {}", record(&report, m)?.classification);
    }

    let send = record(&report, "fig9/App.send(Lfig9/Message;)V")?;
    let want = not_testable(&[Reason::NonMockable(Category::Network), Reason::Observability]);
    ensure!(send.classification == want, "fig9 send: {}", send.classification);
    let client = FieldRef::new("fig9/App", "client", "Lfig9/Client;");
    let trace = send.trace.as_ref().ok_or("fig9 send has no trace")?;
    ensure!(trace.receiver_fields.contains(&client), "fig9 client not reported: {:?}", trace.receiver_fields);

    let send = record(&report, "fig10/App.send(Lfig10/Message;)V")?;
    ensure!(send.classification == Classification::Testable, "fig10 send: {}", send.classification);
    ensure!(
        send.observations.iter().any(|o| matches!(o, ObservationPoint::MockableDependencyCall { .. })),
        "fig10 send observations: {:?}",
        send.observations
    );

    let mail = record(&report, "mail/MailService.testConnection()Z")?;
    ensure!(
        mail.classification == not_testable(&[Reason::NonMockable(Category::FileSystem)]),
        "mail: {}",
        mail.classification
    );
    let hops = mail.trace.as_ref().map_or(0, |t| t.chain.len().saturating_sub(1));
    ensure!(hops >= 3, "mail witness has {hops} hops");

    ensure!(elapsed < Duration::from_secs(2), "took {elapsed:?}");
    Ok(())
}

fn analyze_all(kb: KnowledgeBase) -> Analysis {
    let inputs: Vec<Input> = CORPORA.iter().map(|c| Input::application(corpus(c))).collect();
    Analysis::run(&inputs, kb, &ClassParser::default()).expect("fixtures analyze")
}

fn must_mock(owner: &str, name: &str, c: Category) -> KbEntry {
    KbEntry {
        pattern: MethodPattern::new(owner, name, "*").expect("valid pattern"),
        classification: CalleeClass::MustMock(c),
        source: EntrySource::Builtin,
    }
}

/// Random MustMock extensions built from callees the graph references.
fn kb_extensions(graph: &CallGraph) -> impl Strategy<Value = Vec<KbEntry>> {
    let callees: Vec<(String, String)> = graph
        .all_sites()
        .filter(|s| s.kind != DispatchKind::Dynamic)
        .map(|s| (s.declared.owner.clone(), s.declared.name.clone()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let pick = (any::<prop::sample::Index>(), any::<bool>(), any::<bool>(), 0..Category::ALL.len());
    prop::collection::vec(pick, 1..4).prop_map(move |picks| {
        picks
            .into_iter()
            .map(|(ix, any_name, package_glob, cat)| {
                let (owner, name) = &callees[ix.index(callees.len())];
                let owner = match (package_glob, owner.rfind('/')) {
                    (true, Some(i)) => format!("{}.*", owner[..i].replace('/', ".")),
                    (true, None) => "*".to_string(),
                    (false, _) => owner.replace('/', "."),
                };
                let name = if any_name { "*".to_string() } else { name.clone() };
                must_mock(&owner, &name, Category::ALL[cat])
            })
            .collect()
    })
}

fn check_kb_monotone(a: &Analysis, cases: u32) -> Check {
    let before = a.verdicts.nonmockable_set();
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    runner
        .run(&kb_extensions(&a.graph), |extra| {
            let mut kb = a.kb.clone();
            for e in extra {
                kb.push(e);
            }
            let after = compute_nonmockable(&a.graph, &kb).nonmockable_set();
            prop_assert!(before.is_subset(&after), "lost {:?}", before.difference(&after).collect::<Vec<_>>());
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn check_cut_law(a: &Analysis, limit: usize) -> Check {
    let before = a.verdicts.nonmockable_set();
    let fields: Vec<FieldRef> = a
        .graph
        .fields()
        .iter()
        .filter(|(_, i)| *i == Injectability::NonInjectable)
        .map(|(f, _)| f.clone())
        .take(limit)
        .collect();
    ensure!(!fields.is_empty(), "no non-injectable fields to flip");
    for f in fields {
        let g = a.graph.with_field_injectability(&f, Injectability::Injectable);
        let after = compute_nonmockable(&g, &a.kb).nonmockable_set();
        ensure!(after.is_subset(&before), "injecting {f:?} added {:?}", after.difference(&before).collect::<Vec<_>>());
    }
    Ok(())
}

fn under_approximation() -> Check {
    let a = analyze_all(KnowledgeBase::builtin());
    check_kb_monotone(&a, 200)?;
    check_cut_law(&a, usize::MAX)
}

fn determinism() -> Check {
    let apps: Vec<PathBuf> = CORPORA.iter().map(|c| corpus(c)).collect();
    let dir = tempdir();
    let mut reference: Option<Vec<u8>> = None;
    for threads in ["1", "4", "8"] {
        for run in 0..10 {
            let out = dir.path().join(format!("t{threads}-{run}"));
            let bytes = analyze_cli(&apps, &out, &["--threads", threads])?;
            match &reference {
                None => reference = Some(bytes),
                Some(r) => ensure!(*r == bytes, "report differs with --threads {threads}, run {run}"),
            }
        }
    }
    Ok(())
}

fn fixture_pools() -> Vec<ClassPool> {
    ["figures", "hierarchy", "metrics", "refactor-before", "refactor-after"]
        .iter()
        .map(|c| load_inputs(&[Input::application(corpus(c))], &ClassParser::default()).expect("fixture loads"))
        .collect()
}

fn metric_oracles() -> Check {
    let pools = fixture_pools();
    let find = |m: &str| pools.iter().find_map(|p| p.method(&id(m))).ok_or_else(|| format!("{m} not in fixtures"));
    let labels: Vec<(&str, Option<TrivialKind>)> = oracles::hand_labels();
    ensure!(labels.len() >= 20, "only {} labeled methods", labels.len());
    let mut disagreements = Vec::new();
    for (m, want) in labels {
        let got = detect_trivial(find(m)?);
        if got != want {
            disagreements.push(format!("{m}: labeled {want:?}, detected {got:?}"));
        }
    }
    ensure!(disagreements.is_empty(), "{disagreements:?}");

    let jar = load_inputs(&[Input::application(jar())], &ClassParser::default()).map_err(|e| e.to_string())?;
    let mut checked = 0;
    for m in pools.iter().chain([&jar]).flat_map(|p| p.methods()).filter(|m| exclusion(m).is_none()) {
        let (got, want) = (cyclomatic_complexity(m), oracles::cfg_complexity(m));
        ensure!(got == want, "{}: complexity {got}, graph oracle {want}", m.id);
        checked += 1;
    }
    ensure!(checked >= 20, "only {checked} methods checked");
    Ok(())
}

/// Conservation and largest-remainder rounding for every segmentation of a report.
fn check_conservation(r: &Report) -> Check {
    for s in &r.segmentations {
        let expected: u64 = r
            .methods
            .iter()
            .filter(|m| s.level == ScopeLevel::Repo || s.level.key(m) == s.scope)
            .filter(|m| m.classification.bucket().is_some())
            .map(|m| m.loc as u64)
            .sum();
        ensure!(s.loc_total == expected, "{}: total {} vs {expected}", s.scope, s.loc_total);
        let sum = s.not_testable.loc + s.trivial.loc + s.testable.loc;
        ensure!(sum == s.loc_total, "{}: buckets sum to {sum} of {}", s.scope, s.loc_total);
        let tenths: i64 = [Bucket::NotTestable, Bucket::Trivial, Bucket::Testable]
            .iter()
            .map(|&b| (s.share(b).percent * 10.0).round() as i64)
            .sum();
        ensure!(tenths == if s.loc_total == 0 { 0 } else { 1000 }, "{}: percentages sum to {tenths} tenths", s.scope);
    }
    Ok(())
}

fn arb_classification() -> impl Strategy<Value = Classification> {
    let reason = (0..=Category::ALL.len()).prop_map(|i| {
        Category::ALL.get(i).map_or(Reason::Observability, |&c| Reason::NonMockable(c))
    });
    prop_oneof![
        Just(Classification::Excluded { reason: testmap_core::metrics::ExclusionReason::Abstract }),
        Just(Classification::Trivial { pattern: TrivialKind::Getter }),
        Just(Classification::Testable),
        prop::collection::btree_set(reason, 1..3).prop_map(|reasons| Classification::NotTestable { reasons }),
    ]
}

fn conservation() -> Check {
    let a = analyze_all(KnowledgeBase::builtin());
    for level in [ScopeLevel::Repo, ScopeLevel::Module, ScopeLevel::Package] {
        check_conservation(&a.report(level))?;
    }
    let methods = prop::collection::vec((arb_classification(), 0..500u32, 0..3usize, 0..5usize), 0..80);
    let mut runner = TestRunner::new(Config { cases: 500, failure_persistence: None, ..Config::default() });
    runner
        .run(&methods, |methods| {
            let records: Vec<MethodRecord> = methods
                .into_iter()
                .enumerate()
                .map(|(i, (classification, loc, module, package))| MethodRecord {
                    id: MethodId::new(format!("p{package}/C"), format!("m{i}"), "()V"),
                    module: format!("mod{module}"),
                    package: format!("p{package}"),
                    classification,
                    loc,
                    complexity: 1,
                    observations: vec![],
                    observability_uncertain: false,
                    trace: None,
                })
                .collect();
            for level in [ScopeLevel::Repo, ScopeLevel::Module, ScopeLevel::Package] {
                let r = Report {
                    header: a.report(level).header,
                    segmentations: aggregate_segmentation(&records, level),
                    methods: records.clone(),
                    diagnostics: vec![],
                };
                let verdict = check_conservation(&r);
                prop_assert!(verdict.is_ok(), "{}", verdict.unwrap_err());
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn diff_direction() -> Check {
    let dir = tempdir();
    let before = dir.path().join("before");
    let after = dir.path().join("after");
    analyze_cli(&[corpus("refactor-before")], &before, &[])?;
    analyze_cli(&[corpus("refactor-after")], &after, &[])?;
    let out = testmap(&[
        "diff".as_ref(),
        before.join("report.json").as_os_str(),
        after.join("report.json").as_os_str(),
        "--out".as_ref(),
        dir.path().as_os_str(),
    ]);
    succeeded(&out, "diff")?;
    let text = std::fs::read_to_string(dir.path().join("diff.json")).map_err(|e| e.to_string())?;
    let d: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let repo = d["scopes"]
        .as_array()
        .and_then(|s| s.iter().find(|s| s["level"] == "repo"))
        .ok_or("no repository scope in the diff")?;
    let gained = repo["testable"]["loc"].as_i64().unwrap_or(0);
    ensure!(gained > 0, "testable LOC delta is {gained}");

    let stdout = String::from_utf8_lossy(&out.stdout);
    let transitions = d["transitions"].as_array().ok_or("no transitions")?;
    for m in [
        "billing/InvoiceService.charge(Lbilling/Invoice;)V",
        "billing/InvoiceService.isOverdue(Lbilling/Invoice;)Z",
        "billing/InvoiceService.reference(Lbilling/Invoice;)Ljava/lang/String;",
    ] {
        let t = transitions.iter().find(|t| t["id"] == m).ok_or_else(|| format!("{m} has no transition"))?;
        ensure!(t["before"]["kind"] == "NotTestable" && t["after"]["kind"] == "Testable", "{m}: {t}");
        ensure!(stdout.contains(m), "{m} not printed");
    }
    Ok(())
}

struct Leaf {
    fill: String,
    title: String,
}

/// Leaf rectangles of a rendered map, in document order.
fn svg_leaves(svg: &[u8]) -> Result<Vec<Leaf>, String> {
    use quick_xml::events::Event;
    let mut reader = quick_xml::Reader::from_reader(svg);
    let mut buf = Vec::new();
    let mut leaves = Vec::new();
    let mut open: Option<Leaf> = None;
    let mut depth = 0i32;
    loop {
        match reader.read_event_into(&mut buf).map_err(|e| e.to_string())? {
            Event::Start(e) => {
                depth += 1;
                let attr = |k: &[u8]| {
                    e.attributes()
                        .flatten()
                        .find(|a| a.key.as_ref() == k)
                        .map(|a| String::from_utf8_lossy(&a.value).into_owned())
                };
                if e.name().as_ref() == b"rect" && attr(b"class").as_deref() == Some("leaf") {
                    open = Some(Leaf { fill: attr(b"fill").unwrap_or_default(), title: String::new() });
                }
            }
            Event::Text(t) => {
                if let Some(l) = open.as_mut() {
                    l.title.push_str(&t.unescape().map_err(|e| e.to_string())?);
                }
            }
            Event::End(e) => {
                depth -= 1;
                if e.name().as_ref() == b"rect" {
                    leaves.extend(open.take());
                }
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    ensure!(depth == 0, "unbalanced SVG");
    Ok(leaves)
}

fn rgb(hex: &str) -> Option<(i32, i32, i32)> {
    let p = |i: usize| hex.get(i..i + 2).and_then(|s| i32::from_str_radix(s, 16).ok());
    Some((p(1)?, p(3)?, p(5)?))
}

fn treemaps() -> Check {
    let mut runner = TestRunner::new(Config { cases: 1000, failure_persistence: None, ..Config::default() });
    runner
        .run(&(oracles::arb_tree(), 10.0f64..2000.0, 10.0f64..2000.0), |(tree, w, h)| {
            let verdict = oracles::check_layout(&tree, Rect::new(0.0, 0.0, w, h));
            prop_assert!(verdict.is_ok(), "{}", verdict.unwrap_err());
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    let dir = tempdir();
    let report_bytes = analyze_cli(&[corpus("figures")], dir.path(), &[])?;
    let report = parse(&report_bytes)?;
    let report_path = dir.path().join("report.json");
    let mut renders = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = testmap(&["map".as_ref(), "--report".as_ref(), report_path.as_os_str(), "--out".as_ref(), out.as_os_str()]);
        succeeded(&o, "map")?;
        renders.push(std::fs::read(out.join("testability.svg")).map_err(|e| e.to_string())?);
    }
    ensure!(renders[0] == renders[1], "rendering is not byte-deterministic");

    let leaves = svg_leaves(&renders[0])?;
    let analyzable: Vec<&MethodRecord> =
        report.methods.iter().filter(|m| !matches!(m.classification, Classification::Excluded { .. })).collect();
    ensure!(leaves.len() == analyzable.len(), "{} rectangles for {} methods", leaves.len(), analyzable.len());
    let mut seen = BTreeSet::new();
    for leaf in &leaves {
        let name = leaf.title.lines().next().unwrap_or_default();
        let m = record(&report, name)?;
        ensure!(seen.insert(name.to_string()), "{name} drawn twice");
        let (r, g, b) = rgb(&leaf.fill).ok_or_else(|| format!("{name}: bad fill {}", leaf.fill))?;
        match &m.classification {
            Classification::Testable => {
                ensure!(leaf.fill == TESTABLE && g > r && g > b, "{name}: testable painted {}", leaf.fill)
            }
            Classification::Trivial { .. } => {
                ensure!(leaf.fill == TRIVIAL && r > b + 0x60 && g > b + 0x60, "{name}: trivial painted {}", leaf.fill)
            }
            Classification::NotTestable { reasons } => {
                let first = *reasons.iter().next().ok_or("empty reasons")?;
                ensure!(leaf.fill == reason_color(first), "{name}: painted {} not the {first} shade", leaf.fill);
                ensure!(r > g && r > b, "{name}: not-testable painted {}", leaf.fill);
            }
            Classification::Excluded { .. } => return Err(format!("{name} is excluded but drawn")),
        }
    }
    Ok(())
}

fn scale() -> Check {
    let dir = tempdir();
    let start = Instant::now();
    let bytes = analyze_cli(&[jar()], &dir.path().join("a"), &["--threads", "8"])?;
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    let report = parse(&bytes)?;
    let classes: BTreeSet<&str> = report.methods.iter().map(|m| m.id.owner.as_str()).collect();
    ensure!(classes.len() >= 1000, "only {} classes with methods", classes.len());
    for m in &report.methods {
        if let Classification::NotTestable { reasons } = &m.classification {
            ensure!(!reasons.is_empty(), "{} has no reasons", m.id);
            let nonmockable = reasons.iter().any(|r| matches!(r, Reason::NonMockable(_)));
            ensure!(nonmockable == m.trace.is_some(), "{}: trace does not match its reasons", m.id);
        }
    }
    check_conservation(&report)?;

    let again = analyze_cli(&[jar()], &dir.path().join("b"), &["--threads", "1"])?;
    ensure!(bytes == again, "jar report differs between 8 threads and 1");

    let a = Analysis::run(&[Input::application(jar())], KnowledgeBase::builtin(), &ClassParser::default())
        .map_err(|e| e.to_string())?;
    check_kb_monotone(&a, 10)?;
    check_cut_law(&a, 25)
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("figure fixtures", figures),
        ("under-approximation", under_approximation),
        ("fixed-point determinism", determinism),
        ("triviality and complexity oracles", metric_oracles),
        ("segmentation conservation", conservation),
        ("diff directionality", diff_direction),
        ("treemap properties", treemaps),
        ("scale smoke test", scale),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let label = format!("criterion {} ({name})", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => println!("{label}: PASS ({secs:.1}s)"),
            Err(why) => {
                failed += 1;
                println!("{label}: FAIL ({secs:.1}s): {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
