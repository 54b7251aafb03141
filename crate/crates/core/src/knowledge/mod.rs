//! Callee knowledge base: which library methods must be mocked, which are
//! tolerated sinks, and which are neutral.

mod builtin;

use std::fmt;
use std::path::{Path, PathBuf};

use glob::{MatchOptions, Pattern};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classfile::{parse_method_descriptor, MethodId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    FileSystem,
    Network,
    Time,
    Random,
    Threading,
    ProcessEnv,
    Console,
    OtherNonDeterminism,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::FileSystem,
        Category::Network,
        Category::Time,
        Category::Random,
        Category::Threading,
        Category::ProcessEnv,
        Category::Console,
        Category::OtherNonDeterminism,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::FileSystem => "FileSystem",
            Category::Network => "Network",
            Category::Time => "Time",
            Category::Random => "Random",
            Category::Threading => "Threading",
            Category::ProcessEnv => "ProcessEnv",
            Category::Console => "Console",
            Category::OtherNonDeterminism => "OtherNonDeterminism",
        }
    }

    /// Case-insensitive lookup by variant name.
    pub fn from_name(name: &str) -> Option<Category> {
        Category::ALL.into_iter().find(|c| c.name().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Knowledge-base verdict for one callee.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CalleeClass {
    MustMock(Category),
    Sink,
    Neutral,
}

impl fmt::Display for CalleeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CalleeClass::MustMock(c) => write!(f, "must-mock({c})"),
            CalleeClass::Sink => f.write_str("sink"),
            CalleeClass::Neutral => f.write_str("neutral"),
        }
    }
}

/// Owner and name globs over source-form names (`java.time.*`), plus an
/// exact descriptor or `*`.
#[derive(Debug, Clone)]
pub struct MethodPattern {
    owner: Pattern,
    name: Pattern,
    descriptor: Option<String>,
    /// Literal text before the first glob metacharacter, for cheap rejection.
    owner_prefix: String,
}

const MATCH: MatchOptions = MatchOptions {
    case_sensitive: true,
    require_literal_separator: false,
    require_literal_leading_dot: false,
};

impl MethodPattern {
    pub fn new(owner: &str, name: &str, descriptor: &str) -> Result<Self, String> {
        if owner.is_empty() || name.is_empty() || descriptor.is_empty() {
            return Err("owner, name and descriptor patterns must be non-empty".to_string());
        }
        let owner_glob = Pattern::new(owner).map_err(|e| format!("bad owner pattern `{owner}`: {e}"))?;
        let name_glob = Pattern::new(name).map_err(|e| format!("bad name pattern `{name}`: {e}"))?;
        let descriptor = if descriptor == "*" {
            None
        } else {
            parse_method_descriptor(descriptor).map_err(|e| e.to_string())?;
            Some(descriptor.to_string())
        };
        let owner_prefix = owner.chars().take_while(|c| !matches!(c, '*' | '?' | '[')).collect();
        Ok(MethodPattern { owner: owner_glob, name: name_glob, descriptor, owner_prefix })
    }

    pub fn owner(&self) -> &str {
        self.owner.as_str()
    }

    pub fn name(&self) -> &str {
        self.name.as_str()
    }

    pub fn descriptor(&self) -> &str {
        self.descriptor.as_deref().unwrap_or("*")
    }

    /// `dotted_owner` is the callee owner with `/` replaced by `.`.
    fn matches_dotted(&self, dotted_owner: &str, id: &MethodId) -> bool {
        dotted_owner.starts_with(&self.owner_prefix)
            && self.descriptor.as_ref().is_none_or(|d| *d == id.descriptor)
            && self.name.matches_with(&id.name, MATCH)
            && self.owner.matches_with(dotted_owner, MATCH)
    }

    pub fn matches(&self, id: &MethodId) -> bool {
        self.matches_dotted(&id.dotted_owner(), id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EntrySource {
    Builtin,
    Config { path: PathBuf, line: usize },
}

impl fmt::Display for EntrySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntrySource::Builtin => f.write_str("builtin"),
            EntrySource::Config { path, line } => write!(f, "{}:{line}", path.display()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct KbEntry {
    pub pattern: MethodPattern,
    pub classification: CalleeClass,
    pub source: EntrySource,
}

/// Which members a test in the same code base may touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestVisibility {
    /// Anything not private (tests live in the same package).
    #[default]
    Package,
    /// Public members only.
    Public,
}

impl TestVisibility {
    pub fn allows(self, access: crate::classfile::AccessFlags) -> bool {
        match self {
            TestVisibility::Package => !access.is_private(),
            TestVisibility::Public => access.is_public(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    entries: Vec<KbEntry>,
    /// Mock makers can subclass-proxy final classes.
    pub mock_final_classes: bool,
    /// Static methods can be mocked (bytecode-rewriting mock makers).
    pub mock_static_methods: bool,
    pub test_visibility: TestVisibility,
}

impl Default for KnowledgeBase {
    fn default() -> Self {
        Self::builtin()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum KbError {
    #[error("cannot read knowledge base {}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: malformed knowledge base: {message}", path.display())]
    ConfigSyntax { path: PathBuf, message: String },
    #[error("{}:{line}: {message}", path.display())]
    ConfigSemantic { path: PathBuf, line: usize, message: String },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mock_final_classes: Option<bool>,
    mock_static_methods: Option<bool>,
    test_visibility: Option<toml::Spanned<String>>,
    #[serde(default)]
    entry: Vec<toml::Spanned<RawEntry>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    owner: String,
    name: String,
    #[serde(default = "any_descriptor")]
    descriptor: String,
    classification: toml::Spanned<String>,
    category: Option<toml::Spanned<String>>,
}

fn any_descriptor() -> String {
    "*".to_string()
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

impl KnowledgeBase {
    /// Default entries only.
    pub fn builtin() -> Self {
        let entries = builtin::ENTRIES
            .iter()
            .map(|&(owner, name, descriptor, classification)| KbEntry {
                pattern: MethodPattern::new(owner, name, descriptor).expect("builtin patterns are valid"),
                classification,
                source: EntrySource::Builtin,
            })
            .collect();
        KnowledgeBase {
            entries,
            mock_final_classes: true,
            mock_static_methods: false,
            test_visibility: TestVisibility::Package,
        }
    }

    pub fn entries(&self) -> &[KbEntry] {
        &self.entries
    }

    /// Appends an entry; it overrides every earlier entry wherever it matches.
    pub fn push(&mut self, entry: KbEntry) {
        self.entries.push(entry);
    }

    /// Appends the entries and switches of a TOML document to this knowledge base.
    pub fn extend_from_toml(&mut self, text: &str, path: &Path) -> Result<(), KbError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| KbError::ConfigSyntax {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let semantic = |offset: usize, message: String| KbError::ConfigSemantic {
            path: path.to_path_buf(),
            line: line_of(text, offset),
            message,
        };
        if let Some(v) = raw.mock_final_classes {
            self.mock_final_classes = v;
        }
        if let Some(v) = raw.mock_static_methods {
            self.mock_static_methods = v;
        }
        if let Some(v) = raw.test_visibility {
            self.test_visibility = match v.get_ref().as_str() {
                "package" => TestVisibility::Package,
                "public" => TestVisibility::Public,
                other => {
                    return Err(semantic(v.span().start, format!("unknown test_visibility `{other}` (expected package or public)")))
                }
            };
        }
        for spanned in raw.entry {
            let start = spanned.span().start;
            let e = spanned.into_inner();
            let classification = match e.classification.get_ref().as_str() {
                "must-mock" => {
                    let Some(category) = &e.category else {
                        return Err(semantic(e.classification.span().start, "must-mock entry needs a category".to_string()));
                    };
                    let Some(c) = Category::from_name(category.get_ref()) else {
                        let names: Vec<&str> = Category::ALL.iter().map(|c| c.name()).collect();
                        return Err(semantic(
                            category.span().start,
                            format!("unknown category `{}` (expected one of {})", category.get_ref(), names.join(", ")),
                        ));
                    };
                    CalleeClass::MustMock(c)
                }
                "sink" | "neutral" if e.category.is_some() => {
                    let category = e.category.as_ref().unwrap();
                    return Err(semantic(category.span().start, "category is only allowed on must-mock entries".to_string()));
                }
                "sink" => CalleeClass::Sink,
                "neutral" => CalleeClass::Neutral,
                other => {
                    return Err(semantic(
                        e.classification.span().start,
                        format!("unknown classification `{other}` (expected must-mock, sink or neutral)"),
                    ))
                }
            };
            let pattern = MethodPattern::new(&e.owner, &e.name, &e.descriptor).map_err(|m| semantic(start, m))?;
            self.entries.push(KbEntry {
                pattern,
                classification,
                source: EntrySource::Config { path: path.to_path_buf(), line: line_of(text, start) },
            });
        }
        Ok(())
    }

    /// The last entry matching `callee`, if any.
    pub fn lookup(&self, callee: &MethodId) -> Option<&KbEntry> {
        let dotted = callee.dotted_owner();
        self.entries.iter().rev().find(|e| e.pattern.matches_dotted(&dotted, callee))
    }

    pub fn classify(&self, callee: &MethodId) -> CalleeClass {
        self.lookup(callee).map_or(CalleeClass::Neutral, |e| e.classification)
    }

    /// Stable hash of the effective configuration, recorded in reports.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!(
            "final={} static={} visibility={:?}\n",
            self.mock_final_classes, self.mock_static_methods, self.test_visibility
        ));
        for e in &self.entries {
            h.update(format!(
                "{}\t{}\t{}\t{}\n",
                e.pattern.owner(),
                e.pattern.name(),
                e.pattern.descriptor(),
                e.classification
            ));
        }
        format!("sha256:{}", hex::encode(h.finalize()))
    }
}

/// Builtin defaults, then the entries of `config_path` if given.
pub fn load_knowledge_base(config_path: Option<&Path>) -> Result<KnowledgeBase, KbError> {
    let mut kb = KnowledgeBase::builtin();
    if let Some(path) = config_path {
        let text = std::fs::read_to_string(path).map_err(|source| KbError::Io { path: path.to_path_buf(), source })?;
        kb.extend_from_toml(&text, path)?;
    }
    Ok(kb)
}

pub fn classify_callee(callee: &MethodId, kb: &KnowledgeBase) -> CalleeClass {
    kb.classify(callee)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> MethodId {
        s.parse().unwrap()
    }

    #[test]
    fn clock_free_now_is_time_but_clock_now_is_neutral() {
        let kb = KnowledgeBase::builtin();
        assert_eq!(
            kb.classify(&id("java/time/LocalDateTime.now()Ljava/time/LocalDateTime;")),
            CalleeClass::MustMock(Category::Time)
        );
        assert_eq!(
            kb.classify(&id("java/time/LocalDateTime.now(Ljava/time/Clock;)Ljava/time/LocalDateTime;")),
            CalleeClass::Neutral
        );
        assert_eq!(
            kb.classify(&id("java/time/Instant.now()Ljava/time/Instant;")),
            CalleeClass::MustMock(Category::Time)
        );
    }

    #[test]
    fn builtin_families() {
        let kb = KnowledgeBase::builtin();
        let cases = [
            ("org/slf4j/Logger.error(Ljava/lang/String;Ljava/lang/Throwable;)V", CalleeClass::Sink),
            ("java/nio/file/Files.readAllLines(Ljava/nio/file/Path;)Ljava/util/List;", CalleeClass::MustMock(Category::FileSystem)),
            ("java/net/Socket.<init>(Ljava/lang/String;I)V", CalleeClass::MustMock(Category::Network)),
            ("java/util/Random.<init>()V", CalleeClass::MustMock(Category::Random)),
            ("java/util/Random.<init>(J)V", CalleeClass::Neutral),
            ("java/lang/Thread.sleep(J)V", CalleeClass::MustMock(Category::Threading)),
            ("java/lang/System.getenv(Ljava/lang/String;)Ljava/lang/String;", CalleeClass::MustMock(Category::ProcessEnv)),
            ("java/lang/System.console()Ljava/io/Console;", CalleeClass::MustMock(Category::Console)),
            ("java/lang/System.identityHashCode(Ljava/lang/Object;)I", CalleeClass::MustMock(Category::OtherNonDeterminism)),
            ("java/lang/String.length()I", CalleeClass::Neutral),
        ];
        for (callee, want) in cases {
            assert_eq!(kb.classify(&id(callee)), want, "{callee}");
        }
    }

    #[test]
    fn config_appends_and_overrides() {
        let mut kb = KnowledgeBase::builtin();
        let n = kb.entries().len();
        kb.extend_from_toml(
            "mock_static_methods = true\n[[entry]]\nowner = \"java.time.*\"\nname = \"now\"\nclassification = \"neutral\"\n",
            Path::new("kb.toml"),
        )
        .unwrap();
        assert_eq!(kb.entries().len(), n + 1);
        assert!(kb.mock_static_methods);
        assert_eq!(kb.classify(&id("java/time/LocalDateTime.now()Ljava/time/LocalDateTime;")), CalleeClass::Neutral);
        assert_eq!(
            kb.entries().last().unwrap().source,
            EntrySource::Config { path: "kb.toml".into(), line: 2 }
        );
    }

    #[test]
    fn unknown_category_names_its_line() {
        let text = "[[entry]]\nowner = \"a.B\"\nname = \"m\"\nclassification = \"must-mock\"\ncategory = \"Quantum\"\n";
        let err = KnowledgeBase::builtin().extend_from_toml(text, Path::new("kb.toml")).unwrap_err();
        match err {
            KbError::ConfigSemantic { line, message, .. } => {
                assert_eq!(line, 5);
                assert!(message.contains("Quantum"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_documents_and_empty_patterns() {
        let mut kb = KnowledgeBase::builtin();
        assert!(matches!(kb.extend_from_toml("[[entry]\n", Path::new("x")), Err(KbError::ConfigSyntax { .. })));
        assert!(matches!(kb.extend_from_toml("surprise = 1\n", Path::new("x")), Err(KbError::ConfigSyntax { .. })));
        let empty = "[[entry]]\nowner = \"\"\nname = \"m\"\nclassification = \"sink\"\n";
        assert!(matches!(kb.extend_from_toml(empty, Path::new("x")), Err(KbError::ConfigSemantic { line: 1, .. })));
        let bad_desc = "[[entry]]\nowner = \"a\"\nname = \"m\"\ndescriptor = \"(Q)V\"\nclassification = \"sink\"\n";
        assert!(matches!(kb.extend_from_toml(bad_desc, Path::new("x")), Err(KbError::ConfigSemantic { .. })));
    }

    #[test]
    fn fingerprint_tracks_configuration() {
        let a = KnowledgeBase::builtin();
        let mut b = KnowledgeBase::builtin();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.mock_final_classes = false;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
