//! Big-endian class-file decoding.
//!
//! Only the pieces the analyses need are modeled: the constant pool, class
//! header, fields, methods, and the `Code`, `LineNumberTable`, `Exceptions`
//! and `SourceFile` attributes. Everything else is skipped by length.

use std::collections::HashSet;

use super::descriptor::{parse_field_descriptor, parse_method_descriptor};
use super::{
    AccessFlags, ClassModel, Constant, ExceptionHandler, FieldModel, FieldRef, Instruction, LineEntry, MethodId,
    MethodModel, MethodRef, Opcode, Operand, Origin, SwitchTable,
};

const MAGIC: u32 = 0xCAFE_BABE;

/// Newest class-file major version the instruction grammar here covers (Java 25).
pub const MAX_SUPPORTED_MAJOR: u16 = 69;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClassError {
    #[error("malformed class file: {0}")]
    MalformedClass(String),
    #[error("unsupported class file version {major}.{minor} (newest accepted major version is {max})")]
    UnsupportedVersion { major: u16, minor: u16, max: u16 },
}

type Result<T> = std::result::Result<T, ClassError>;

fn malformed<T>(msg: impl Into<String>) -> Result<T> {
    Err(ClassError::MalformedClass(msg.into()))
}

/// Parses with the default version cap.
pub fn parse_class(bytes: &[u8]) -> Result<ClassModel> {
    ClassParser::default().parse(bytes)
}

#[derive(Debug, Clone, Copy)]
pub struct ClassParser {
    pub max_major: u16,
}

impl Default for ClassParser {
    fn default() -> Self {
        ClassParser { max_major: MAX_SUPPORTED_MAJOR }
    }
}

impl ClassParser {
    pub fn parse(&self, bytes: &[u8]) -> Result<ClassModel> {
        let mut r = Reader::new(bytes);
        if r.u32().ok() != Some(MAGIC) {
            return malformed("bad magic number");
        }
        let minor = r.u16()?;
        let major = r.u16()?;
        if major > self.max_major {
            return Err(ClassError::UnsupportedVersion { major, minor, max: self.max_major });
        }
        let pool = ConstantPool::read(&mut r)?;
        let access = AccessFlags(r.u16()?);
        let internal_name = pool.class_name(r.u16()?)?.to_string();
        if internal_name.is_empty() {
            return malformed("empty class name");
        }
        let super_index = r.u16()?;
        let super_name = if super_index == 0 {
            None
        } else {
            Some(pool.class_name(super_index)?.to_string())
        };
        let interface_count = r.u16()?;
        let mut interfaces = Vec::with_capacity(interface_count as usize);
        for _ in 0..interface_count {
            interfaces.push(pool.class_name(r.u16()?)?.to_string());
        }

        let field_count = r.u16()?;
        let mut fields = Vec::with_capacity(field_count as usize);
        for _ in 0..field_count {
            let access = AccessFlags(r.u16()?);
            let name = pool.utf8(r.u16()?)?.to_string();
            let descriptor = pool.utf8(r.u16()?)?.to_string();
            if parse_field_descriptor(&descriptor).is_err() {
                return malformed(format!("invalid field descriptor `{descriptor}`"));
            }
            skip_attributes(&mut r)?;
            fields.push(FieldModel { name, descriptor, access });
        }

        let method_count = r.u16()?;
        let mut methods = Vec::with_capacity(method_count as usize);
        for _ in 0..method_count {
            methods.push(read_method(&mut r, &pool, &internal_name)?);
        }

        let mut source_file = None;
        let attribute_count = r.u16()?;
        for _ in 0..attribute_count {
            let name = pool.utf8(r.u16()?)?;
            let len = r.u32()? as usize;
            let body = r.bytes(len)?;
            if name == "SourceFile" && len == 2 {
                let idx = u16::from_be_bytes([body[0], body[1]]);
                source_file = Some(pool.utf8(idx)?.to_string());
            }
        }

        Ok(ClassModel {
            internal_name,
            super_name,
            interfaces,
            access,
            fields,
            methods,
            source_file,
            major_version: major,
            origin: Origin::default(),
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => malformed(format!("truncated at byte {}", self.pos)),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.bytes(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.bytes(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(self.u32()? as i32)
    }
}

#[derive(Debug, Clone)]
enum Entry {
    Unusable,
    Utf8(String),
    Integer(i32),
    Float(f32),
    Long(i64),
    Double(f64),
    Class(u16),
    String(u16),
    FieldRef(u16, u16),
    MethodRef(u16, u16),
    InterfaceMethodRef(u16, u16),
    NameAndType(u16, u16),
    MethodHandle,
    MethodType(u16),
    Dynamic(u16),
    InvokeDynamic(u16),
    Module,
    Package,
}

struct ConstantPool {
    entries: Vec<Entry>,
}

impl ConstantPool {
    fn read(r: &mut Reader<'_>) -> Result<Self> {
        let count = r.u16()?;
        if count == 0 {
            return malformed("constant pool count is zero");
        }
        let mut entries = Vec::with_capacity(count as usize);
        entries.push(Entry::Unusable);
        while entries.len() < count as usize {
            let tag = r.u8()?;
            let entry = match tag {
                1 => {
                    let len = r.u16()? as usize;
                    Entry::Utf8(decode_modified_utf8(r.bytes(len)?)?)
                }
                3 => Entry::Integer(r.i32()?),
                4 => Entry::Float(f32::from_bits(r.u32()?)),
                5 | 6 => {
                    let hi = r.u32()? as u64;
                    let lo = r.u32()? as u64;
                    let bits = (hi << 32) | lo;
                    entries.push(if tag == 5 { Entry::Long(bits as i64) } else { Entry::Double(f64::from_bits(bits)) });
                    Entry::Unusable
                }
                7 => Entry::Class(r.u16()?),
                8 => Entry::String(r.u16()?),
                9 => Entry::FieldRef(r.u16()?, r.u16()?),
                10 => Entry::MethodRef(r.u16()?, r.u16()?),
                11 => Entry::InterfaceMethodRef(r.u16()?, r.u16()?),
                12 => Entry::NameAndType(r.u16()?, r.u16()?),
                15 => {
                    r.u8()?;
                    r.u16()?;
                    Entry::MethodHandle
                }
                16 => Entry::MethodType(r.u16()?),
                17 => {
                    r.u16()?;
                    Entry::Dynamic(r.u16()?)
                }
                18 => {
                    r.u16()?;
                    Entry::InvokeDynamic(r.u16()?)
                }
                19 => {
                    r.u16()?;
                    Entry::Module
                }
                20 => {
                    r.u16()?;
                    Entry::Package
                }
                other => return malformed(format!("unknown constant pool tag {other}")),
            };
            entries.push(entry);
        }
        if entries.len() != count as usize {
            return malformed("8-byte constant overruns the constant pool");
        }
        Ok(ConstantPool { entries })
    }

    fn get(&self, index: u16) -> Result<&Entry> {
        match self.entries.get(index as usize) {
            Some(Entry::Unusable) | None => malformed(format!("dangling constant pool index {index}")),
            Some(e) => Ok(e),
        }
    }

    fn utf8(&self, index: u16) -> Result<&str> {
        match self.get(index)? {
            Entry::Utf8(s) => Ok(s),
            _ => malformed(format!("constant {index} is not Utf8")),
        }
    }

    fn class_name(&self, index: u16) -> Result<&str> {
        match self.get(index)? {
            Entry::Class(name) => self.utf8(*name),
            _ => malformed(format!("constant {index} is not a Class")),
        }
    }

    fn name_and_type(&self, index: u16) -> Result<(&str, &str)> {
        match self.get(index)? {
            Entry::NameAndType(n, t) => Ok((self.utf8(*n)?, self.utf8(*t)?)),
            _ => malformed(format!("constant {index} is not NameAndType")),
        }
    }

    fn field_ref(&self, index: u16) -> Result<FieldRef> {
        match self.get(index)? {
            Entry::FieldRef(class, nat) => {
                let (name, descriptor) = self.name_and_type(*nat)?;
                if parse_field_descriptor(descriptor).is_err() {
                    return malformed(format!("invalid field descriptor `{descriptor}`"));
                }
                Ok(FieldRef::new(self.class_name(*class)?, name, descriptor))
            }
            _ => malformed(format!("constant {index} is not a Fieldref")),
        }
    }

    fn method_ref(&self, index: u16) -> Result<MethodRef> {
        let (class, nat, interface) = match self.get(index)? {
            Entry::MethodRef(c, n) => (*c, *n, false),
            Entry::InterfaceMethodRef(c, n) => (*c, *n, true),
            _ => return malformed(format!("constant {index} is not a method reference")),
        };
        let (name, descriptor) = self.name_and_type(nat)?;
        if parse_method_descriptor(descriptor).is_err() {
            return malformed(format!("invalid method descriptor `{descriptor}`"));
        }
        Ok(MethodRef {
            id: MethodId::new(self.class_name(class)?, name, descriptor),
            interface,
        })
    }

    fn invoke_dynamic(&self, index: u16) -> Result<MethodId> {
        match self.get(index)? {
            Entry::InvokeDynamic(nat) => {
                let (name, descriptor) = self.name_and_type(*nat)?;
                if parse_method_descriptor(descriptor).is_err() {
                    return malformed(format!("invalid method descriptor `{descriptor}`"));
                }
                Ok(MethodId::new("java/lang/invoke/CallSite", name, descriptor))
            }
            _ => malformed(format!("constant {index} is not InvokeDynamic")),
        }
    }

    fn loadable(&self, index: u16) -> Result<Constant> {
        Ok(match self.get(index)? {
            Entry::Integer(v) => Constant::Int(*v),
            Entry::Float(v) => Constant::Float(*v),
            Entry::Long(v) => Constant::Long(*v),
            Entry::Double(v) => Constant::Double(*v),
            Entry::String(s) => Constant::String(self.utf8(*s)?.to_string()),
            Entry::Class(c) => Constant::Class(self.utf8(*c)?.to_string()),
            Entry::MethodType(t) => Constant::MethodType(self.utf8(*t)?.to_string()),
            Entry::MethodHandle => Constant::MethodHandle,
            Entry::Dynamic(nat) => Constant::Dynamic(self.name_and_type(*nat)?.0.to_string()),
            _ => return malformed(format!("constant {index} is not loadable")),
        })
    }
}

/// Decodes the JVM's modified UTF-8 (two-byte NUL, surrogate pairs as two
/// three-byte sequences).
fn decode_modified_utf8(bytes: &[u8]) -> Result<String> {
    if let Ok(s) = std::str::from_utf8(bytes) {
        if !s.contains('\0') {
            return Ok(s.to_string());
        }
    }
    let mut units: Vec<u16> = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        let a = bytes[i] as u16;
        if a & 0x80 == 0 && a != 0 {
            units.push(a);
            i += 1;
        } else if a & 0xE0 == 0xC0 && i + 1 < bytes.len() {
            let b = bytes[i + 1] as u16;
            units.push(((a & 0x1F) << 6) | (b & 0x3F));
            i += 2;
        } else if a & 0xF0 == 0xE0 && i + 2 < bytes.len() {
            let b = bytes[i + 1] as u16;
            let c = bytes[i + 2] as u16;
            units.push(((a & 0x0F) << 12) | ((b & 0x3F) << 6) | (c & 0x3F));
            i += 3;
        } else {
            return malformed("invalid modified UTF-8");
        }
    }
    Ok(String::from_utf16_lossy(&units))
}

fn skip_attributes(r: &mut Reader<'_>) -> Result<()> {
    let count = r.u16()?;
    for _ in 0..count {
        r.u16()?;
        let len = r.u32()? as usize;
        r.bytes(len)?;
    }
    Ok(())
}

fn read_method(r: &mut Reader<'_>, pool: &ConstantPool, owner: &str) -> Result<MethodModel> {
    let access = AccessFlags(r.u16()?);
    let name = pool.utf8(r.u16()?)?.to_string();
    let descriptor = pool.utf8(r.u16()?)?.to_string();
    if parse_method_descriptor(&descriptor).is_err() {
        return malformed(format!("invalid method descriptor `{descriptor}` on {name}"));
    }
    let mut method = MethodModel {
        id: MethodId::new(owner, name, descriptor),
        access,
        instructions: Vec::new(),
        exception_table: Vec::new(),
        line_table: None,
        declared_exceptions: Vec::new(),
        max_locals: 0,
    };
    let bodiless = access.is_abstract() || access.is_native();
    let count = r.u16()?;
    for _ in 0..count {
        let attr_name = pool.utf8(r.u16()?)?;
        let len = r.u32()? as usize;
        let body = r.bytes(len)?;
        match attr_name {
            "Code" if !bodiless => read_code(&mut Reader::new(body), pool, &mut method)?,
            "Exceptions" => {
                let mut a = Reader::new(body);
                let n = a.u16()?;
                for _ in 0..n {
                    method.declared_exceptions.push(pool.class_name(a.u16()?)?.to_string());
                }
            }
            _ => {}
        }
    }
    Ok(method)
}

fn read_code(r: &mut Reader<'_>, pool: &ConstantPool, method: &mut MethodModel) -> Result<()> {
    r.u16()?; // max_stack
    method.max_locals = r.u16()?;
    let code_len = r.u32()? as usize;
    let code = r.bytes(code_len)?;
    method.instructions = decode_instructions(code, pool)?;

    let offsets: HashSet<u32> = method.instructions.iter().map(|i| i.offset).collect();
    let valid = |target: u32| offsets.contains(&target);
    for ins in &method.instructions {
        let ok = match &ins.operand {
            Operand::Branch(t) => valid(*t),
            Operand::Switch(table) => valid(table.default) && table.cases.iter().all(|&(_, t)| valid(t)),
            _ => true,
        };
        if !ok {
            return malformed(format!("{}: branch at {} leaves the method body", method.id, ins.offset));
        }
    }

    let handler_count = r.u16()?;
    for _ in 0..handler_count {
        let start = r.u16()? as u32;
        let end = r.u16()? as u32;
        let handler = r.u16()? as u32;
        let catch_index = r.u16()?;
        let catch_type = if catch_index == 0 {
            None
        } else {
            Some(pool.class_name(catch_index)?.to_string())
        };
        if !valid(start) || !valid(handler) || end as usize > code_len || end <= start {
            return malformed(format!("{}: exception table entry out of range", method.id));
        }
        method.exception_table.push(ExceptionHandler { start, end, handler, catch_type });
    }

    let attr_count = r.u16()?;
    for _ in 0..attr_count {
        let name = pool.utf8(r.u16()?)?;
        let len = r.u32()? as usize;
        let body = r.bytes(len)?;
        if name == "LineNumberTable" {
            let mut a = Reader::new(body);
            let n = a.u16()?;
            let table = method.line_table.get_or_insert_with(Vec::new);
            for _ in 0..n {
                let offset = a.u16()? as u32;
                let line = a.u16()? as u32;
                table.push(LineEntry { offset, line });
            }
        }
    }
    Ok(())
}

fn decode_instructions(code: &[u8], pool: &ConstantPool) -> Result<Vec<Instruction>> {
    let mut r = Reader::new(code);
    let mut out = Vec::new();
    while r.pos < code.len() {
        let offset = r.pos as u32;
        let opcode = Opcode(r.u8()?);
        let branch = |delta: i32| -> Result<u32> {
            let target = offset as i64 + delta as i64;
            if target < 0 || target as usize >= code.len() {
                return malformed(format!("branch target {target} outside code"));
            }
            Ok(target as u32)
        };
        let operand = match opcode.0 {
            0..=15 | 46..=53 | 79..=131 | 133..=152 | 172..=177 | 190 | 191 | 194 | 195 => Operand::None,
            26..=45 => Operand::Local(((opcode.0 - 26) % 4) as u16),
            59..=78 => Operand::Local(((opcode.0 - 59) % 4) as u16),
            16 => Operand::Int(r.u8()? as i8 as i32),
            17 => Operand::Int(r.u16()? as i16 as i32),
            18 => Operand::Constant(pool.loadable(r.u8()? as u16)?),
            19 | 20 => Operand::Constant(pool.loadable(r.u16()?)?),
            21..=25 | 54..=58 | 169 => Operand::Local(r.u8()? as u16),
            132 => {
                let index = r.u8()? as u16;
                let delta = r.u8()? as i8 as i16;
                Operand::Iinc { index, delta }
            }
            153..=168 | 198 | 199 => Operand::Branch(branch(r.u16()? as i16 as i32)?),
            200 | 201 => Operand::Branch(branch(r.i32()?)?),
            170 | 171 => {
                while !r.pos.is_multiple_of(4) {
                    r.u8()?;
                }
                let default = branch(r.i32()?)?;
                let mut cases = Vec::new();
                if opcode == Opcode::TABLESWITCH {
                    let low = r.i32()?;
                    let high = r.i32()?;
                    if high < low || (high as i64 - low as i64) > 65_535 {
                        return malformed("tableswitch bounds");
                    }
                    for key in low..=high {
                        cases.push((key, branch(r.i32()?)?));
                    }
                } else {
                    let pairs = r.i32()?;
                    if !(0..=65_535).contains(&pairs) {
                        return malformed("lookupswitch pair count");
                    }
                    for _ in 0..pairs {
                        let key = r.i32()?;
                        cases.push((key, branch(r.i32()?)?));
                    }
                }
                Operand::Switch(SwitchTable { default, cases })
            }
            178..=181 => Operand::Field(pool.field_ref(r.u16()?)?),
            182..=184 => Operand::Invoke(pool.method_ref(r.u16()?)?),
            185 => {
                let m = pool.method_ref(r.u16()?)?;
                r.u8()?;
                r.u8()?;
                Operand::Invoke(m)
            }
            186 => {
                let id = pool.invoke_dynamic(r.u16()?)?;
                r.u16()?;
                Operand::Dynamic(id)
            }
            187 | 189 | 192 | 193 => Operand::Type(pool.class_name(r.u16()?)?.to_string()),
            188 => Operand::ArrayType(r.u8()?),
            196 => {
                let inner = Opcode(r.u8()?);
                let index = r.u16()?;
                match inner.0 {
                    132 => {
                        let delta = r.u16()? as i16;
                        out.push(Instruction { offset, opcode: inner, operand: Operand::Iinc { index, delta } });
                    }
                    21..=25 | 54..=58 | 169 => {
                        out.push(Instruction { offset, opcode: inner, operand: Operand::Local(index) });
                    }
                    other => return malformed(format!("wide applied to opcode {other}")),
                }
                continue;
            }
            197 => {
                let class = pool.class_name(r.u16()?)?.to_string();
                let dims = r.u8()?;
                Operand::MultiArray { class, dims }
            }
            other => return malformed(format!("undefined opcode {other} at {offset}")),
        };
        out.push(Instruction { offset, opcode, operand });
    }
    Ok(out)
}
