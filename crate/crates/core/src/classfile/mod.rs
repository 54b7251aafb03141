//! Parsed representation of JVM class files and the pool of classes under analysis.

mod descriptor;
mod loader;
mod opcode;
mod reader;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use descriptor::{parse_field_descriptor, parse_method_descriptor, DescriptorError, FieldType, MethodDescriptor};
pub use loader::{load_inputs, ClassPool, Diagnostic, DiagnosticKind, Input, LoadError};
pub use opcode::Opcode;
pub use reader::{parse_class, ClassError, ClassParser, MAX_SUPPORTED_MAJOR};

/// Access and property flags shared by classes, fields and methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct AccessFlags(pub u16);

impl AccessFlags {
    pub const PUBLIC: u16 = 0x0001;
    pub const PRIVATE: u16 = 0x0002;
    pub const PROTECTED: u16 = 0x0004;
    pub const STATIC: u16 = 0x0008;
    pub const FINAL: u16 = 0x0010;
    pub const BRIDGE: u16 = 0x0040;
    pub const NATIVE: u16 = 0x0100;
    pub const INTERFACE: u16 = 0x0200;
    pub const ABSTRACT: u16 = 0x0400;
    pub const SYNTHETIC: u16 = 0x1000;
    pub const MODULE: u16 = 0x8000;

    pub fn contains(self, flag: u16) -> bool {
        self.0 & flag != 0
    }

    pub fn is_public(self) -> bool {
        self.contains(Self::PUBLIC)
    }

    pub fn is_private(self) -> bool {
        self.contains(Self::PRIVATE)
    }

    pub fn is_protected(self) -> bool {
        self.contains(Self::PROTECTED)
    }

    pub fn is_static(self) -> bool {
        self.contains(Self::STATIC)
    }

    pub fn is_final(self) -> bool {
        self.contains(Self::FINAL)
    }

    pub fn is_abstract(self) -> bool {
        self.contains(Self::ABSTRACT)
    }

    pub fn is_native(self) -> bool {
        self.contains(Self::NATIVE)
    }

    pub fn is_interface(self) -> bool {
        self.contains(Self::INTERFACE)
    }

    pub fn is_synthetic(self) -> bool {
        self.contains(Self::SYNTHETIC)
    }

    pub fn is_bridge(self) -> bool {
        self.contains(Self::BRIDGE)
    }
}

/// Whether a class belongs to the code base under analysis or to its dependencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    #[default]
    Application,
    Dependency,
}

/// Where a class file came from: the input path given by the user plus, for
/// directories and archives, the entry path beneath it.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Origin {
    pub input: PathBuf,
    pub entry: Option<String>,
    pub role: Role,
}

/// `owner.name descriptor` triple identifying a method globally.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MethodId {
    pub owner: String,
    pub name: String,
    pub descriptor: String,
}

impl MethodId {
    pub fn new(owner: impl Into<String>, name: impl Into<String>, descriptor: impl Into<String>) -> Self {
        MethodId {
            owner: owner.into(),
            name: name.into(),
            descriptor: descriptor.into(),
        }
    }

    pub fn is_constructor(&self) -> bool {
        self.name == "<init>"
    }

    pub fn is_static_initializer(&self) -> bool {
        self.name == "<clinit>"
    }

    pub fn parsed_descriptor(&self) -> Result<MethodDescriptor, DescriptorError> {
        parse_method_descriptor(&self.descriptor)
    }

    /// Owner in source form (`java.time.LocalDateTime`).
    pub fn dotted_owner(&self) -> String {
        self.owner.replace('/', ".")
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}{}", self.owner, self.name, self.descriptor)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid method id `{0}` (expected owner/Name.method(Descriptor)Ret)")]
pub struct MethodIdError(pub String);

impl FromStr for MethodId {
    type Err = MethodIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || MethodIdError(s.to_string());
        let paren = s.find('(').ok_or_else(err)?;
        let dot = s[..paren].rfind('.').ok_or_else(err)?;
        let id = MethodId::new(&s[..dot], &s[dot + 1..paren], &s[paren..]);
        if id.owner.is_empty() || id.name.is_empty() || id.parsed_descriptor().is_err() {
            return Err(err());
        }
        Ok(id)
    }
}

impl Serialize for MethodId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MethodId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Symbolic field reference as it appears in field instructions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FieldRef {
    pub owner: String,
    pub name: String,
    pub descriptor: String,
}

impl FieldRef {
    pub fn new(owner: impl Into<String>, name: impl Into<String>, descriptor: impl Into<String>) -> Self {
        FieldRef {
            owner: owner.into(),
            name: name.into(),
            descriptor: descriptor.into(),
        }
    }
}

impl fmt::Display for FieldRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.owner, self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldModel {
    pub name: String,
    pub descriptor: String,
    pub access: AccessFlags,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constant {
    Int(i32),
    Float(f32),
    Long(i64),
    Double(f64),
    String(String),
    Class(String),
    MethodType(String),
    MethodHandle,
    Dynamic(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwitchTable {
    pub default: u32,
    pub cases: Vec<(i32, u32)>,
}

impl SwitchTable {
    /// All jump targets including the default, deduplicated, in ascending order.
    pub fn distinct_targets(&self) -> Vec<u32> {
        let mut targets: Vec<u32> = self.cases.iter().map(|&(_, t)| t).collect();
        targets.push(self.default);
        targets.sort_unstable();
        targets.dedup();
        targets
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodRef {
    pub id: MethodId,
    pub interface: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    None,
    /// Local variable slot (loads, stores, `ret`).
    Local(u16),
    /// `bipush` / `sipush` immediate.
    Int(i32),
    Constant(Constant),
    /// Absolute offset of a branch target.
    Branch(u32),
    Switch(SwitchTable),
    Field(FieldRef),
    Invoke(MethodRef),
    /// `invokedynamic`; the callee id uses `java/lang/invoke/CallSite` as owner.
    Dynamic(MethodId),
    /// Class operand of `new`, `anewarray`, `checkcast`, `instanceof`.
    Type(String),
    Iinc { index: u16, delta: i16 },
    MultiArray { class: String, dims: u8 },
    ArrayType(u8),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instruction {
    pub offset: u32,
    pub opcode: Opcode,
    pub operand: Operand,
}

impl Instruction {
    /// Callee of an invocation instruction.
    pub fn callee(&self) -> Option<&MethodId> {
        match &self.operand {
            Operand::Invoke(r) => Some(&r.id),
            Operand::Dynamic(id) => Some(id),
            _ => None,
        }
    }

    pub fn field(&self) -> Option<&FieldRef> {
        match &self.operand {
            Operand::Field(f) => Some(f),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExceptionHandler {
    pub start: u32,
    pub end: u32,
    pub handler: u32,
    /// `None` catches everything (`finally`).
    pub catch_type: Option<String>,
}

impl ExceptionHandler {
    pub fn covers(&self, offset: u32) -> bool {
        self.start <= offset && offset < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LineEntry {
    pub offset: u32,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodModel {
    pub id: MethodId,
    pub access: AccessFlags,
    pub instructions: Vec<Instruction>,
    pub exception_table: Vec<ExceptionHandler>,
    pub line_table: Option<Vec<LineEntry>>,
    pub declared_exceptions: Vec<String>,
    pub max_locals: u16,
}

impl MethodModel {
    pub fn has_body(&self) -> bool {
        !self.instructions.is_empty()
    }

    pub fn is_static(&self) -> bool {
        self.access.is_static()
    }

    pub fn descriptor(&self) -> MethodDescriptor {
        // Descriptors are validated during parsing.
        self.id.parsed_descriptor().unwrap_or(MethodDescriptor { params: Vec::new(), ret: None })
    }

    pub fn index_of_offset(&self, offset: u32) -> Option<usize> {
        self.instructions.binary_search_by_key(&offset, |i| i.offset).ok()
    }

    /// Source line for a bytecode offset: the entry with the greatest start offset not beyond it.
    pub fn line_at(&self, offset: u32) -> Option<u32> {
        let table = self.line_table.as_ref()?;
        table
            .iter()
            .filter(|e| e.offset <= offset)
            .max_by_key(|e| e.offset)
            .map(|e| e.line)
    }
}

/// Source lines of a method: distinct line numbers in the line table, or
/// `ceil(instructions / 4)` without debug info; zero for bodiless methods.
pub fn method_loc(m: &MethodModel) -> u32 {
    if m.access.is_abstract() || m.access.is_native() || !m.has_body() {
        return 0;
    }
    match &m.line_table {
        Some(table) if !table.is_empty() => {
            let mut lines: Vec<u32> = table.iter().map(|e| e.line).collect();
            lines.sort_unstable();
            lines.dedup();
            lines.len() as u32
        }
        _ => (m.instructions.len() as u32).div_ceil(4),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassModel {
    pub internal_name: String,
    pub super_name: Option<String>,
    pub interfaces: Vec<String>,
    pub access: AccessFlags,
    pub fields: Vec<FieldModel>,
    pub methods: Vec<MethodModel>,
    pub source_file: Option<String>,
    pub major_version: u16,
    pub origin: Origin,
}

impl ClassModel {
    pub fn field(&self, name: &str) -> Option<&FieldModel> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn method(&self, name: &str, descriptor: &str) -> Option<&MethodModel> {
        self.methods.iter().find(|m| m.id.name == name && m.id.descriptor == descriptor)
    }

    pub fn is_interface(&self) -> bool {
        self.access.is_interface()
    }

    pub fn is_concrete(&self) -> bool {
        !self.access.is_interface() && !self.access.is_abstract()
    }

    /// Package part of the internal name, slash-separated; empty for the default package.
    pub fn package(&self) -> &str {
        self.internal_name.rsplit_once('/').map_or("", |(p, _)| p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn method_with(lines: Option<Vec<u32>>, n: usize) -> MethodModel {
        MethodModel {
            id: MethodId::new("a/B", "m", "()V"),
            access: AccessFlags(AccessFlags::PUBLIC),
            instructions: (0..n)
                .map(|i| Instruction { offset: i as u32, opcode: Opcode::NOP, operand: Operand::None })
                .collect(),
            exception_table: Vec::new(),
            line_table: lines.map(|ls| {
                ls.into_iter()
                    .enumerate()
                    .map(|(i, line)| LineEntry { offset: i as u32, line })
                    .collect()
            }),
            declared_exceptions: Vec::new(),
            max_locals: 1,
        }
    }

    #[test]
    fn loc_counts_distinct_lines() {
        assert_eq!(method_loc(&method_with(Some(vec![10, 11, 12, 11]), 4)), 3);
    }

    #[test]
    fn loc_falls_back_to_instruction_quarter() {
        assert_eq!(method_loc(&method_with(None, 10)), 3);
        assert_eq!(method_loc(&method_with(None, 8)), 2);
        assert_eq!(method_loc(&method_with(None, 1)), 1);
    }

    #[test]
    fn loc_is_zero_for_bodiless_methods() {
        let mut m = method_with(None, 0);
        assert_eq!(method_loc(&m), 0);
        m.access = AccessFlags(AccessFlags::ABSTRACT);
        assert_eq!(method_loc(&m), 0);
    }

    #[test]
    fn method_id_round_trips_through_text() {
        let id: MethodId = "fig9/App.send(Lfig9/Message;)V".parse().unwrap();
        assert_eq!(id.owner, "fig9/App");
        assert_eq!(id.name, "send");
        assert_eq!(id.to_string(), "fig9/App.send(Lfig9/Message;)V");
        assert!("fig9/App.send".parse::<MethodId>().is_err());
        assert!("send()V".parse::<MethodId>().is_err());
        let ctor: MethodId = "a/B.<init>()V".parse().unwrap();
        assert!(ctor.is_constructor());
    }

    #[test]
    fn line_lookup_uses_preceding_entry() {
        let m = method_with(Some(vec![5, 5, 9]), 3);
        assert_eq!(m.line_at(0), Some(5));
        assert_eq!(m.line_at(2), Some(9));
        assert_eq!(m.line_at(7), Some(9));
    }
}
