use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use testmap_core::classfile::{ClassParser, Input, MethodId};
use testmap_core::classify::{diff_reports, parse_report, Classification, MethodRecord, Reason, Report, ScopeLevel};
use testmap_core::knowledge::load_knowledge_base;
use testmap_core::treemap::{ingest_coverage, render_report, CoverageMap, MapMode, Rect};
use testmap_core::{Analysis, AnalysisError};

use crate::{AnalyzeArgs, DiffArgs, ExplainArgs, InputArgs, MapArgs};

/// Exit status plus the message printed for it.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

/// Bad paths, configs or arguments: exit 2.
fn invalid(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: error.into() }
}

/// Anything else: exit 1.
fn internal(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, error: error.into() }
}

type Outcome = Result<(), Failure>;

fn inputs(args: &InputArgs) -> Result<Vec<Input>, Failure> {
    if args.app.is_empty() {
        return Err(invalid(anyhow!("at least one --app input is required")));
    }
    let app = args.app.iter().map(Input::application);
    let dep = args.dep.iter().map(Input::dependency);
    Ok(app.chain(dep).collect())
}

fn run_analysis(args: &InputArgs, kb_path: Option<&Path>) -> Result<Analysis, Failure> {
    let inputs = inputs(args)?;
    let kb = load_knowledge_base(kb_path).map_err(invalid)?;
    let analysis = Analysis::run(&inputs, kb, &ClassParser::default()).map_err(|e| match e {
        AnalysisError::Load(_) | AnalysisError::Hierarchy(_) => invalid(e),
    })?;
    let diagnostics = analysis.pool.diagnostics().len();
    if diagnostics > 0 {
        log::warn!("{diagnostics} class file(s) skipped; see the report's diagnostics");
    }
    Ok(analysis)
}

fn write(path: &Path, bytes: &[u8]) -> Outcome {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display())).map_err(internal)?;
    }
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display())).map_err(internal)
}

fn read_report(path: &Path) -> Result<Report, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read report {}", path.display())).map_err(invalid)?;
    parse_report(&text).with_context(|| format!("in {}", path.display())).map_err(invalid)
}

/// Segmentation table in not-testable, trivial, testable order.
pub fn summary(report: &Report) -> String {
    let mut s = String::new();
    let analyzable = report.methods.iter().filter(|m| m.classification.bucket().is_some()).count();
    let excluded = report.methods.len() - analyzable;
    let total = report.total().map_or(0, |t| t.loc_total);
    let _ = writeln!(s, "{total} lines in {analyzable} methods ({excluded} excluded)");
    let width = report.segmentations.iter().map(|x| x.scope.len()).max().unwrap_or(0).max(5);
    let _ = writeln!(s, "{:<width$}  {:>8}  {:>16}  {:>16}  {:>16}", "scope", "lines", "not testable", "trivial", "testable");
    for seg in &report.segmentations {
        let cell = |b: &testmap_core::classify::BucketShare| format!("{:>6.1}% {:>8}", b.percent, b.loc);
        let _ = writeln!(
            s,
            "{:<width$}  {:>8}  {:>16}  {:>16}  {:>16}",
            seg.scope,
            seg.loc_total,
            cell(&seg.not_testable),
            cell(&seg.trivial),
            cell(&seg.testable)
        );
    }
    if let Some(t) = report.total().filter(|t| !t.reasons.is_empty()) {
        let reasons: Vec<String> = t.reasons.iter().map(|(r, loc)| format!("{r} {loc}")).collect();
        let _ = writeln!(s, "not-testable lines by reason: {}", reasons.join(", "));
    }
    s
}

pub fn analyze(args: AnalyzeArgs, kb_path: Option<&Path>) -> Outcome {
    let analysis = run_analysis(&args.inputs, kb_path)?;
    let report = analysis.report(args.scope.into());
    let path = args.out.join("report.json");
    write(&path, report.to_json().as_bytes())?;
    print!("{}", summary(&report));
    println!("report: {}", path.display());
    Ok(())
}

pub fn map(args: MapArgs) -> Outcome {
    if args.mode.contains(&crate::Mode::Coverage) && args.coverage.is_none() {
        return Err(invalid(anyhow!("--mode coverage needs --coverage <xml>")));
    }
    if !(args.width > 0.0 && args.height > 0.0) {
        return Err(invalid(anyhow!("--width and --height must be positive")));
    }
    let report = read_report(&args.report)?;
    let coverage: Option<CoverageMap> = match &args.coverage {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display())).map_err(invalid)?;
            Some(ingest_coverage(&text).with_context(|| format!("in {}", p.display())).map_err(invalid)?)
        }
        None => None,
    };
    let out: PathBuf = args
        .out
        .clone()
        .unwrap_or_else(|| args.report.parent().map(Path::to_path_buf).unwrap_or_default());
    let level: ScopeLevel = args.scope.map_or(report.header.scope, Into::into);
    let canvas = Rect::new(0.0, 0.0, args.width, args.height);
    let mut modes: Vec<MapMode> = args.mode.iter().map(|&m| m.into()).collect();
    modes.dedup();
    for mode in modes {
        let svg = render_report(&report, level, mode, coverage.as_ref(), canvas, !args.no_legend).map_err(internal)?;
        let path = out.join(mode.file_name());
        write(&path, &svg)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn explain_record(r: &MethodRecord) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{}", r.id);
    let _ = writeln!(s, "  classification: {}", r.classification);
    let _ = writeln!(s, "  lines: {}, complexity: {}", r.loc, r.complexity);
    match &r.classification {
        Classification::Excluded { .. } => {
            let _ = writeln!(s, "  not analyzed: no developer-written body");
        }
        Classification::Trivial { pattern } => {
            let _ = writeln!(s, "  trivial ({pattern:?}); too simple to be worth a dedicated test");
        }
        Classification::Testable => {
            let _ = writeln!(s, "  no issues found");
        }
        Classification::NotTestable { reasons } => {
            if let Some(t) = &r.trace {
                let _ = writeln!(s, "  cannot be isolated from {} behavior:", t.category);
                for (i, hop) in t.chain.iter().enumerate() {
                    let arrow = if i == 0 { "   " } else { "-> " };
                    let line = hop.line.map_or(String::new(), |l| format!(" (line {l})"));
                    let _ = writeln!(s, "    {arrow}{} {}{}{line}", hop.method.dotted_owner(), hop.method.name, hop.method.descriptor);
                }
                if !t.receiver_fields.is_empty() {
                    let fields: Vec<String> =
                        t.receiver_fields.iter().map(|f| format!("{}.{}", f.owner.replace('/', "."), f.name)).collect();
                    let _ = writeln!(s, "  non-injectable receiver fields: {}", fields.join(", "));
                }
            }
            if reasons.contains(&Reason::Observability) {
                let _ = writeln!(
                    s,
                    "  nothing to observe: no return value, escaping exception, readable field write or mockable dependency call"
                );
            }
        }
    }
    s
}

pub fn explain(args: ExplainArgs, kb_path: Option<&Path>) -> Outcome {
    let id: MethodId = args.method.parse().map_err(|e| invalid(anyhow!("bad method id `{}`: {e}", args.method)))?;
    let report = match &args.report {
        Some(p) => read_report(p)?,
        None => run_analysis(&args.inputs, kb_path)?.report(ScopeLevel::Repo),
    };
    let record = report.method(&id).ok_or_else(|| invalid(anyhow!("method {id} not found")))?;
    print!("{}", explain_record(record));
    Ok(())
}

pub fn diff(args: DiffArgs) -> Outcome {
    let before = read_report(&args.before)?;
    let after = read_report(&args.after)?;
    let d = diff_reports(&before, &after).map_err(invalid)?;
    let mut s = String::new();
    let _ = writeln!(s, "{:<24}  {:>8}  {:>18}  {:>18}  {:>18}", "scope", "lines", "not testable", "trivial", "testable");
    let pct = |t: i64| format!("{:+.1}", t as f64 / 10.0);
    for sd in &d.scopes {
        let cell = |b: &testmap_core::classify::BucketDelta| format!("{:>7}% {:>+8}", pct(b.percent_tenths), b.loc);
        let _ = writeln!(
            s,
            "{:<24}  {:>+8}  {:>18}  {:>18}  {:>18}",
            format!("{:?} {}", sd.level, sd.scope).to_lowercase(),
            sd.loc_total,
            cell(&sd.not_testable),
            cell(&sd.trivial),
            cell(&sd.testable)
        );
    }
    for t in &d.transitions {
        let _ = writeln!(s, "changed {}: {} -> {}", t.id, t.before, t.after);
    }
    for m in &d.removed {
        let _ = writeln!(s, "removed {m}");
    }
    for m in &d.added {
        let _ = writeln!(s, "added {m}");
    }
    let path = args.out.join("diff.json");
    let mut json = serde_json::to_string_pretty(&d).map_err(internal)?;
    json.push('\n');
    write(&path, json.as_bytes())?;
    print!("{s}");
    println!("diff: {}", path.display());
    Ok(())
}
