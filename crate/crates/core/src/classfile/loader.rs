use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::reader::ClassParser;
use super::{ClassError, ClassModel, MethodId, MethodModel, Origin, Role};

/// One path handed to the loader.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Input {
    pub path: PathBuf,
    pub role: Role,
}

impl Input {
    pub fn application(path: impl Into<PathBuf>) -> Self {
        Input { path: path.into(), role: Role::Application }
    }

    pub fn dependency(path: impl Into<PathBuf>) -> Self {
        Input { path: path.into(), role: Role::Dependency }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    MalformedClass,
    UnsupportedVersion,
    DuplicateClass,
    UnreadableEntry,
}

/// Non-fatal problem found while loading; the offending entry is left out of the pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    /// `path` or `path!entry`.
    pub location: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot open archive {}: {message}", path.display())]
    Archive { path: PathBuf, message: String },
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> LoadError + '_ {
    move |source| LoadError::Io { path: path.to_path_buf(), source }
}

/// Classes under analysis, sorted by internal name, plus loader diagnostics.
#[derive(Debug, Clone, Default)]
pub struct ClassPool {
    classes: Vec<ClassModel>,
    index: HashMap<String, usize>,
    diagnostics: Vec<Diagnostic>,
}

impl ClassPool {
    /// Builds a pool from classes in precedence order; later duplicates are dropped with a diagnostic.
    pub fn from_classes(classes: impl IntoIterator<Item = ClassModel>) -> Self {
        let mut pool = ClassPool::default();
        let mut kept: Vec<ClassModel> = Vec::new();
        let mut seen: HashMap<String, String> = HashMap::new();
        for class in classes {
            let location = location_of(&class.origin);
            if let Some(first) = seen.get(&class.internal_name) {
                pool.diagnostics.push(Diagnostic {
                    kind: DiagnosticKind::DuplicateClass,
                    location,
                    message: format!("duplicate class {} ignored; first seen in {first}", class.internal_name),
                });
                continue;
            }
            seen.insert(class.internal_name.clone(), location);
            kept.push(class);
        }
        kept.sort_by(|a, b| a.internal_name.cmp(&b.internal_name));
        pool.index = kept.iter().enumerate().map(|(i, c)| (c.internal_name.clone(), i)).collect();
        pool.classes = kept;
        pool
    }

    pub fn classes(&self) -> &[ClassModel] {
        &self.classes
    }

    pub fn application_classes(&self) -> impl Iterator<Item = &ClassModel> {
        self.classes.iter().filter(|c| c.origin.role == Role::Application)
    }

    pub fn get(&self, internal_name: &str) -> Option<&ClassModel> {
        self.index.get(internal_name).map(|&i| &self.classes[i])
    }

    pub fn contains(&self, internal_name: &str) -> bool {
        self.index.contains_key(internal_name)
    }

    pub fn method(&self, id: &MethodId) -> Option<&MethodModel> {
        self.get(&id.owner)?.method(&id.name, &id.descriptor)
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        &self.diagnostics
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn methods(&self) -> impl Iterator<Item = &MethodModel> {
        self.classes.iter().flat_map(|c| c.methods.iter())
    }
}

fn location_of(origin: &Origin) -> String {
    match &origin.entry {
        Some(entry) if origin.input.extension().is_some_and(|e| e.eq_ignore_ascii_case("jar")) => {
            format!("{}!{entry}", origin.input.display())
        }
        Some(entry) => origin.input.join(entry).display().to_string(),
        None => origin.input.display().to_string(),
    }
}

struct RawEntry {
    origin: Origin,
    bytes: Vec<u8>,
}

fn is_class_entry(name: &str) -> bool {
    name.ends_with(".class")
        && !name.ends_with("module-info.class")
        && !name.starts_with("META-INF/")
}

fn is_archive(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("jar") || e.eq_ignore_ascii_case("zip"))
}

fn read_archive(path: &Path, role: Role, raw: &mut Vec<RawEntry>, diagnostics: &mut Vec<Diagnostic>) -> Result<(), LoadError> {
    let file = File::open(path).map_err(io_error(path))?;
    let mut archive = zip::ZipArchive::new(file).map_err(|e| LoadError::Archive {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    // Archive order, which is what class-path lookup would see first.
    for i in 0..archive.len() {
        let mut entry = match archive.by_index(i) {
            Ok(entry) => entry,
            Err(e) => {
                diagnostics.push(Diagnostic {
                    kind: DiagnosticKind::UnreadableEntry,
                    location: format!("{}!#{i}", path.display()),
                    message: e.to_string(),
                });
                continue;
            }
        };
        let name = entry.name().to_string();
        if entry.is_dir() || !is_class_entry(&name) {
            continue;
        }
        let mut bytes = Vec::with_capacity(entry.size() as usize);
        if let Err(e) = entry.read_to_end(&mut bytes) {
            diagnostics.push(Diagnostic {
                kind: DiagnosticKind::UnreadableEntry,
                location: format!("{}!{name}", path.display()),
                message: e.to_string(),
            });
            continue;
        }
        raw.push(RawEntry {
            origin: Origin { input: path.to_path_buf(), entry: Some(name), role },
            bytes,
        });
    }
    Ok(())
}

fn read_directory(root: &Path, role: Role, raw: &mut Vec<RawEntry>, diagnostics: &mut Vec<Diagnostic>) -> Result<(), LoadError> {
    let walker = walkdir::WalkDir::new(root).sort_by_file_name();
    for item in walker {
        let item = item.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            LoadError::Io { path, source: e.into() }
        })?;
        if !item.file_type().is_file() {
            continue;
        }
        let path = item.path();
        if is_archive(path) {
            read_archive(path, role, raw, diagnostics)?;
            continue;
        }
        let relative = path.strip_prefix(root).unwrap_or(path).to_string_lossy().replace('\\', "/");
        if !is_class_entry(&relative) {
            continue;
        }
        let bytes = std::fs::read(path).map_err(io_error(path))?;
        raw.push(RawEntry {
            origin: Origin { input: root.to_path_buf(), entry: Some(relative), role },
            bytes,
        });
    }
    Ok(())
}

/// Loads every class file reachable from `inputs`. Earlier inputs take
/// precedence over later ones for duplicate class names.
pub fn load_inputs(inputs: &[Input], parser: &ClassParser) -> Result<ClassPool, LoadError> {
    let mut raw = Vec::new();
    let mut diagnostics = Vec::new();
    for input in inputs {
        let path = &input.path;
        let meta = std::fs::metadata(path).map_err(io_error(path))?;
        if meta.is_dir() {
            read_directory(path, input.role, &mut raw, &mut diagnostics)?;
        } else if is_archive(path) {
            read_archive(path, input.role, &mut raw, &mut diagnostics)?;
        } else {
            let bytes = std::fs::read(path).map_err(io_error(path))?;
            raw.push(RawEntry {
                origin: Origin { input: path.clone(), entry: None, role: input.role },
                bytes,
            });
        }
    }

    // Parallel parse; collecting an indexed parallel iterator preserves input order.
    let parsed: Vec<Result<ClassModel, (Origin, ClassError)>> = raw
        .into_par_iter()
        .map(|entry| match parser.parse(&entry.bytes) {
            Ok(mut class) => {
                class.origin = entry.origin;
                Ok(class)
            }
            Err(e) => Err((entry.origin, e)),
        })
        .collect();

    let mut classes = Vec::with_capacity(parsed.len());
    for result in parsed {
        match result {
            Ok(class) => classes.push(class),
            Err((origin, e)) => {
                let kind = match e {
                    ClassError::MalformedClass(_) => DiagnosticKind::MalformedClass,
                    ClassError::UnsupportedVersion { .. } => DiagnosticKind::UnsupportedVersion,
                };
                diagnostics.push(Diagnostic { kind, location: location_of(&origin), message: e.to_string() });
            }
        }
    }
    let mut pool = ClassPool::from_classes(classes);
    for d in &diagnostics {
        log::warn!("{d}");
    }
    for d in &pool.diagnostics {
        log::warn!("{d}");
    }
    diagnostics.append(&mut pool.diagnostics);
    pool.diagnostics = diagnostics;
    Ok(pool)
}
