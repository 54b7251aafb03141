//! Squarified treemaps of a report, painted by testability, complexity or
//! coverage, rendered as standalone SVG.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use quick_xml::events::Event;
use serde::{Deserialize, Serialize};

use crate::classfile::MethodId;
use crate::classify::{Classification, Reason, Report, ScopeLevel};
use crate::knowledge::Category;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Rect { x, y, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    fn inset(&self, d: f64) -> Rect {
        if d <= 0.0 || self.w <= 2.0 * d || self.h <= 2.0 * d {
            return *self;
        }
        Rect::new(self.x + d, self.y + d, self.w - 2.0 * d, self.h - 2.0 * d)
    }
}

/// What a leaf is painted from.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafKey {
    pub classification: Classification,
    pub complexity: u32,
    /// Covered-line ratio; `None` when the method is absent from the coverage report.
    pub coverage: Option<f64>,
}

/// Scope, class and method hierarchy. A node without children is a leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct MapTree {
    pub name: String,
    /// Leaf weight; ignored for inner nodes, whose weight is the sum of their leaves.
    pub weight: f64,
    pub children: Vec<MapTree>,
    pub tooltip: String,
    pub key: Option<LeafKey>,
}

impl MapTree {
    pub fn group(name: impl Into<String>, children: Vec<MapTree>) -> Self {
        let name = name.into();
        MapTree { tooltip: name.clone(), name, weight: 0.0, children, key: None }
    }

    pub fn leaf(name: impl Into<String>, weight: f64) -> Self {
        let name = name.into();
        MapTree { tooltip: name.clone(), name, weight, children: Vec::new(), key: None }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        if self.is_leaf() {
            self.weight
        } else {
            self.children.iter().map(MapTree::total_weight).sum()
        }
    }

    /// Nodes in the order [`squarify_layout`] numbers them.
    pub fn preorder(&self) -> Vec<&MapTree> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(sorted_children(n).into_iter().rev());
        }
        out
    }

    pub fn leaf_count(&self) -> usize {
        if self.is_leaf() {
            1
        } else {
            self.children.iter().map(MapTree::leaf_count).sum()
        }
    }

    /// Grouping by `level` (none for the repository level), then class,
    /// then non-excluded methods weighted by LOC (at least 1).
    pub fn from_report(report: &Report, level: ScopeLevel, coverage: Option<&CoverageMap>) -> MapTree {
        let mut scopes: BTreeMap<String, BTreeMap<String, Vec<MapTree>>> = BTreeMap::new();
        for r in &report.methods {
            if matches!(r.classification, Classification::Excluded { .. }) {
                continue;
            }
            let reasons: Vec<String> = r.classification.reasons().map(|x| x.to_string()).collect();
            let mut tooltip = format!("{}\n{}", r.id, r.classification);
            if !reasons.is_empty() {
                let _ = write!(tooltip, "\nreasons: {}", reasons.join(", "));
            }
            let _ = write!(tooltip, "\nloc {} | complexity {}", r.loc, r.complexity);
            let ratio = coverage.and_then(|c| c.ratio(&r.id));
            if let Some(c) = ratio {
                let _ = write!(tooltip, " | coverage {:.1}%", c * 100.0);
            }
            let leaf = MapTree {
                name: format!("{}{}", r.id.name, r.id.descriptor),
                weight: r.loc.max(1) as f64,
                children: Vec::new(),
                tooltip,
                key: Some(LeafKey { classification: r.classification.clone(), complexity: r.complexity, coverage: ratio }),
            };
            scopes.entry(level.key(r)).or_default().entry(r.id.owner.replace('/', ".")).or_default().push(leaf);
        }
        let classes = |m: BTreeMap<String, Vec<MapTree>>| m.into_iter().map(|(c, ls)| MapTree::group(c, ls)).collect::<Vec<_>>();
        match level {
            ScopeLevel::Repo => MapTree::group("*", scopes.into_values().flat_map(classes).collect()),
            _ => MapTree::group("*", scopes.into_iter().map(|(s, m)| MapTree::group(s, classes(m))).collect()),
        }
    }
}

/// Descending weight, ties by name.
fn sorted_children(n: &MapTree) -> Vec<&MapTree> {
    let mut c: Vec<&MapTree> = n.children.iter().collect();
    c.sort_by(|a, b| b.total_weight().total_cmp(&a.total_weight()).then_with(|| a.name.cmp(&b.name)));
    c
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayoutBox {
    /// Preorder index, matching [`MapTree::preorder`].
    pub index: usize,
    pub parent: Option<usize>,
    pub depth: u32,
    pub rect: Rect,
    pub leaf: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LayoutError {
    #[error("canvas has zero area")]
    DegenerateCanvas,
    #[error("node `{0}` has a non-positive weight")]
    NonPositiveWeight(String),
}

/// Worst aspect ratio of a row of areas laid along a side of length `side`.
fn worst(row: &[f64], side: f64) -> f64 {
    let sum: f64 = row.iter().sum();
    let (min, max) = row.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &a| (lo.min(a), hi.max(a)));
    let s2 = side * side;
    let sum2 = sum * sum;
    (s2 * max / sum2).max(sum2 / (s2 * min))
}

/// Splits `rect` among `areas` (already scaled to sum to its area) with the
/// squarified row heuristic. The last box of every row and the last row
/// absorb rounding so the tiling is exact.
fn squarify(areas: &[f64], rect: Rect) -> Vec<Rect> {
    let mut out = Vec::with_capacity(areas.len());
    let mut free = rect;
    let mut i = 0;
    while i < areas.len() {
        let side = free.w.min(free.h);
        let mut end = i + 1;
        let mut best = worst(&areas[i..end], side);
        while end < areas.len() {
            let next = worst(&areas[i..=end], side);
            if next > best {
                break;
            }
            best = next;
            end += 1;
        }
        let row = &areas[i..end];
        let row_sum: f64 = row.iter().sum();
        let last_row = end == areas.len();
        if free.w >= free.h {
            // column on the left, as wide as the row needs
            let cw = if last_row { free.w } else { (row_sum / free.h).min(free.w) };
            let mut y = free.y;
            for (k, a) in row.iter().enumerate() {
                let h = if k + 1 == row.len() { free.y + free.h - y } else { a / cw };
                out.push(Rect::new(free.x, y, cw, h));
                y += h;
            }
            free = Rect::new(free.x + cw, free.y, free.w - cw, free.h);
        } else {
            let rh = if last_row { free.h } else { (row_sum / free.w).min(free.h) };
            let mut x = free.x;
            for (k, a) in row.iter().enumerate() {
                let w = if k + 1 == row.len() { free.x + free.w - x } else { a / rh };
                out.push(Rect::new(x, free.y, w, rh));
                x += w;
            }
            free = Rect::new(free.x, free.y + rh, free.w, free.h - rh);
        }
        i = end;
    }
    out
}

fn check_weights(n: &MapTree) -> Result<(), LayoutError> {
    if n.is_leaf() {
        if n.weight > 0.0 && n.weight.is_finite() {
            return Ok(());
        }
        return Err(LayoutError::NonPositiveWeight(n.name.clone()));
    }
    n.children.iter().try_for_each(check_weights)
}

/// Boxes for every node in preorder. Children tile their parent's rectangle
/// inset by `gutter`; the root alone may have no children.
pub fn squarify_layout(tree: &MapTree, canvas: Rect, gutter: f64) -> Result<Vec<LayoutBox>, LayoutError> {
    // NaN dimensions count as degenerate too
    if canvas.area().partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(LayoutError::DegenerateCanvas);
    }
    if !tree.is_leaf() {
        tree.children.iter().try_for_each(check_weights)?;
    }
    let mut boxes = Vec::new();
    place(tree, canvas, 0, None, gutter, &mut boxes);
    Ok(boxes)
}

fn place(n: &MapTree, rect: Rect, depth: u32, parent: Option<usize>, gutter: f64, out: &mut Vec<LayoutBox>) {
    let index = out.len();
    out.push(LayoutBox { index, parent, depth, rect, leaf: n.is_leaf() });
    if n.is_leaf() {
        return;
    }
    let children = sorted_children(n);
    let inner = rect.inset(gutter);
    let total: f64 = children.iter().map(|c| c.total_weight()).sum();
    let areas: Vec<f64> = children.iter().map(|c| c.total_weight() / total * inner.area()).collect();
    for (c, r) in children.into_iter().zip(squarify(&areas, inner)) {
        place(c, r, depth + 1, Some(index), gutter, out);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapMode {
    Testability,
    Complexity,
    Coverage,
}

impl MapMode {
    pub fn file_name(self) -> &'static str {
        match self {
            MapMode::Testability => "testability.svg",
            MapMode::Complexity => "complexity.svg",
            MapMode::Coverage => "coverage.svg",
        }
    }
}

pub const TESTABLE: &str = "#1a9850";
pub const TRIVIAL: &str = "#f6d32d";
pub const UNKNOWN_COVERAGE: &str = "#bdbdbd";
const RAMP_LOW: (u8, u8, u8) = (0x1a, 0x98, 0x50);
const RAMP_MID: (u8, u8, u8) = (0xfe, 0xe0, 0x8b);
const RAMP_HIGH: (u8, u8, u8) = (0xd7, 0x30, 0x27);
pub const DEFAULT_COMPLEXITY_MAX: u32 = 15;

/// Red-family shade for each reason, ordered from light to dark so that
/// neighbouring reasons differ in lightness as well as hue.
pub fn reason_color(r: Reason) -> &'static str {
    match r {
        Reason::NonMockable(Category::Threading) => "#fc8d59",
        Reason::NonMockable(Category::Console) => "#ef6548",
        Reason::NonMockable(Category::FileSystem) => "#e34a33",
        Reason::Observability => "#e7298a",
        Reason::NonMockable(Category::Time) => "#d7301f",
        Reason::NonMockable(Category::ProcessEnv) => "#ce1256",
        Reason::NonMockable(Category::OtherNonDeterminism) => "#a50f15",
        Reason::NonMockable(Category::Random) => "#b30000",
        Reason::NonMockable(Category::Network) => "#7f0000",
    }
}

/// Testability palette. A method with several reasons takes the color of the first.
pub fn testability_color(c: &Classification) -> &'static str {
    match c {
        Classification::Testable => TESTABLE,
        Classification::Trivial { .. } => TRIVIAL,
        Classification::NotTestable { reasons } => reason_color(*reasons.iter().next().expect("reasons are non-empty")),
        Classification::Excluded { .. } => UNKNOWN_COVERAGE,
    }
}

fn lerp(a: (u8, u8, u8), b: (u8, u8, u8), t: f64) -> String {
    let mix = |x: u8, y: u8| (x as f64 + (y as f64 - x as f64) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Green through yellow to red; `t` in `[0, 1]`.
fn ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    if t <= 0.5 {
        lerp(RAMP_LOW, RAMP_MID, t * 2.0)
    } else {
        lerp(RAMP_MID, RAMP_HIGH, (t - 0.5) * 2.0)
    }
}

/// Complexity 1 is the green end; `max` and above the red end.
pub fn complexity_color(complexity: u32, max: u32) -> String {
    let max = max.max(2);
    let c = complexity.clamp(1, max);
    ramp((c - 1) as f64 / (max - 1) as f64)
}

/// Fully covered is green, uncovered red, unknown gray.
pub fn coverage_color(ratio: Option<f64>) -> String {
    match ratio {
        Some(r) => ramp(1.0 - r),
        None => UNKNOWN_COVERAGE.to_string(),
    }
}

pub fn paint(key: &LeafKey, mode: MapMode, complexity_max: u32) -> String {
    match mode {
        MapMode::Testability => testability_color(&key.classification).to_string(),
        MapMode::Complexity => complexity_color(key.complexity, complexity_max),
        MapMode::Coverage => coverage_color(key.coverage),
    }
}

/// Legend entries (color, label) for a mode.
pub fn legend(mode: MapMode, complexity_max: u32) -> Vec<(String, String)> {
    match mode {
        MapMode::Testability => {
            let mut v = vec![(TESTABLE.to_string(), "Testable".to_string()), (TRIVIAL.to_string(), "Trivial".to_string())];
            let mut reasons: Vec<Reason> = Category::ALL.iter().map(|&c| Reason::NonMockable(c)).collect();
            reasons.push(Reason::Observability);
            v.extend(reasons.into_iter().map(|r| (reason_color(r).to_string(), format!("Not testable: {r}"))));
            v
        }
        MapMode::Complexity => [1, complexity_max.div_ceil(2), complexity_max]
            .iter()
            .map(|&c| (complexity_color(c, complexity_max), format!("complexity {c}{}", if c == complexity_max { "+" } else { "" })))
            .collect(),
        MapMode::Coverage => vec![
            (coverage_color(Some(1.0)), "100% lines covered".to_string()),
            (coverage_color(Some(0.5)), "50% lines covered".to_string()),
            (coverage_color(Some(0.0)), "0% lines covered".to_string()),
            (coverage_color(None), "no coverage data".to_string()),
        ],
    }
}

const LEGEND_ROW: f64 = 18.0;

/// Standalone SVG: background, one `rect` per box (leaves carry class
/// `leaf`, inner nodes class `group`), each with a `title` tooltip, then the
/// optional legend below the map.
pub fn render_svg(tree: &MapTree, layout: &[LayoutBox], paints: &[Option<String>], legend: Option<&[(String, String)]>) -> Vec<u8> {
    let nodes = tree.preorder();
    let canvas = layout.first().map_or(Rect::new(0.0, 0.0, 0.0, 0.0), |b| b.rect);
    let legend_h = legend.map_or(0.0, |l| l.len() as f64 * LEGEND_ROW + 10.0);
    let (w, h) = (canvas.w, canvas.h + legend_h);
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w:.3}" height="{h:.3}" viewBox="{:.3} {:.3} {w:.3} {h:.3}">"#,
        canvas.x, canvas.y
    );
    let _ = writeln!(
        s,
        r##"<rect class="background" x="{:.3}" y="{:.3}" width="{w:.3}" height="{h:.3}" fill="#ffffff"/>"##,
        canvas.x, canvas.y
    );
    let _ = writeln!(s, r#"<g class="map">"#);
    for b in layout.iter().skip(1) {
        let node = nodes[b.index];
        let title = quick_xml::escape::escape(node.tooltip.as_str());
        let r = b.rect;
        if b.leaf {
            let fill = paints.get(b.index).cloned().flatten().unwrap_or_else(|| UNKNOWN_COVERAGE.to_string());
            let _ = writeln!(
                s,
                r##"<rect class="leaf" x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="{fill}" stroke="#ffffff" stroke-width="0.5"><title>{title}</title></rect>"##,
                r.x, r.y, r.w, r.h
            );
        } else {
            let width = if b.depth == 1 { 2.0 } else { 1.0 };
            let _ = writeln!(
                s,
                r##"<rect class="group" x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="none" stroke="#333333" stroke-width="{width}"><title>{title}</title></rect>"##,
                r.x, r.y, r.w, r.h
            );
        }
    }
    let _ = writeln!(s, "</g>");
    if let Some(entries) = legend {
        let _ = writeln!(s, r#"<g class="legend" font-family="sans-serif" font-size="12">"#);
        for (i, (color, label)) in entries.iter().enumerate() {
            let y = canvas.y + canvas.h + 6.0 + i as f64 * LEGEND_ROW;
            let _ = writeln!(
                s,
                r##"<rect class="swatch" x="{:.3}" y="{y:.3}" width="14" height="14" fill="{color}" stroke="#333333" stroke-width="0.5"/><text x="{:.3}" y="{:.3}">{}</text>"##,
                canvas.x + 4.0,
                canvas.x + 24.0,
                y + 11.0,
                quick_xml::escape::escape(label.as_str())
            );
        }
        let _ = writeln!(s, "</g>");
    }
    let _ = writeln!(s, "</svg>");
    s.into_bytes()
}

/// Paints aligned with [`MapTree::preorder`]; inner nodes get `None`.
pub fn paint_tree(tree: &MapTree, mode: MapMode, complexity_max: u32) -> Vec<Option<String>> {
    tree.preorder().iter().map(|n| n.key.as_ref().map(|k| paint(k, mode, complexity_max))).collect()
}

/// Lays out and renders a report in one step.
pub fn render_report(
    report: &Report,
    level: ScopeLevel,
    mode: MapMode,
    coverage: Option<&CoverageMap>,
    canvas: Rect,
    with_legend: bool,
) -> Result<Vec<u8>, LayoutError> {
    let tree = MapTree::from_report(report, level, coverage);
    let layout = squarify_layout(&tree, canvas, 0.0)?;
    let paints = paint_tree(&tree, mode, DEFAULT_COMPLEXITY_MAX);
    let entries = legend(mode, DEFAULT_COMPLEXITY_MAX);
    Ok(render_svg(&tree, &layout, &paints, with_legend.then_some(entries.as_slice())))
}

/// Covered-line ratio per method from a coverage report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoverageMap {
    ratios: BTreeMap<MethodId, f64>,
}

impl CoverageMap {
    /// `None` for methods absent from the report or without line counters.
    pub fn ratio(&self, m: &MethodId) -> Option<f64> {
        self.ratios.get(m).copied()
    }

    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("malformed coverage report: {0}")]
pub struct MalformedCoverage(pub String);

fn attr(e: &quick_xml::events::BytesStart<'_>, name: &str) -> Result<Option<String>, MalformedCoverage> {
    for a in e.attributes() {
        let a = a.map_err(|err| MalformedCoverage(err.to_string()))?;
        if a.key.as_ref() == name.as_bytes() {
            let v = a.unescape_value().map_err(|err| MalformedCoverage(err.to_string()))?;
            return Ok(Some(v.into_owned()));
        }
    }
    Ok(None)
}

fn required(e: &quick_xml::events::BytesStart<'_>, name: &str) -> Result<String, MalformedCoverage> {
    let tag = String::from_utf8_lossy(e.name().as_ref()).into_owned();
    attr(e, name)?.ok_or_else(|| MalformedCoverage(format!("<{tag}> without `{name}`")))
}

fn count(e: &quick_xml::events::BytesStart<'_>, name: &str) -> Result<u64, MalformedCoverage> {
    let v = required(e, name)?;
    v.parse().map_err(|_| MalformedCoverage(format!("counter `{name}` is not a count: `{v}`")))
}

/// Reads the coverage XML dialect: `report > package > class[name] >
/// method[name, desc] > counter[type, missed, covered]`. Only `LINE`
/// counters directly under a method are used.
pub fn ingest_coverage(xml: &str) -> Result<CoverageMap, MalformedCoverage> {
    let mut reader = quick_xml::Reader::from_str(xml);
    let mut ratios = BTreeMap::new();
    let mut stack: Vec<Vec<u8>> = Vec::new();
    let mut class: Option<String> = None;
    let mut method: Option<MethodId> = None;
    let mut seen_root = false;
    loop {
        let event = reader.read_event().map_err(|e| MalformedCoverage(format!("at byte {}: {e}", reader.error_position())))?;
        let (start, empty) = match &event {
            Event::Start(e) => (Some(e.clone()), false),
            Event::Empty(e) => (Some(e.clone()), true),
            Event::End(_) => {
                match stack.pop().as_deref() {
                    Some(b"class") => class = None,
                    Some(b"method") => method = None,
                    _ => {}
                }
                continue;
            }
            Event::Eof => break,
            _ => continue,
        };
        let Some(e) = start else { continue };
        let tag = e.name().as_ref().to_vec();
        if stack.is_empty() {
            if tag != b"report" || seen_root {
                return Err(MalformedCoverage(format!("unexpected root element <{}>", String::from_utf8_lossy(&tag))));
            }
            seen_root = true;
        }
        match tag.as_slice() {
            b"class" => class = Some(required(&e, "name")?),
            b"method" => {
                let owner = class.clone().ok_or_else(|| MalformedCoverage("<method> outside <class>".into()))?;
                let id = MethodId::new(owner, required(&e, "name")?, required(&e, "desc")?);
                method = Some(id);
            }
            b"counter" if stack.last().map(Vec::as_slice) == Some(b"method") && required(&e, "type")? == "LINE" => {
                let missed = count(&e, "missed")?;
                let covered = count(&e, "covered")?;
                if covered + missed > 0 {
                    let id = method.clone().expect("inside a method element");
                    ratios.insert(id, covered as f64 / (covered + missed) as f64);
                }
            }
            _ => {}
        }
        if !empty {
            stack.push(tag);
        } else if tag == b"method" {
            method = None;
        }
    }
    if !seen_root {
        return Err(MalformedCoverage("no <report> element".into()));
    }
    if !stack.is_empty() {
        return Err(MalformedCoverage("unclosed elements at end of document".into()));
    }
    Ok(CoverageMap { ratios })
}
