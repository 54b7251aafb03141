//! Field and method descriptor grammar.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FieldType {
    Byte,
    Char,
    Double,
    Float,
    Int,
    Long,
    Short,
    Boolean,
    Object(String),
    Array(Box<FieldType>),
}

impl FieldType {
    /// Number of local-variable / operand-stack slots a value of this type occupies.
    pub fn slots(&self) -> u16 {
        match self {
            FieldType::Long | FieldType::Double => 2,
            _ => 1,
        }
    }

    pub fn is_reference(&self) -> bool {
        matches!(self, FieldType::Object(_) | FieldType::Array(_))
    }
}

impl fmt::Display for FieldType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldType::Byte => f.write_str("byte"),
            FieldType::Char => f.write_str("char"),
            FieldType::Double => f.write_str("double"),
            FieldType::Float => f.write_str("float"),
            FieldType::Int => f.write_str("int"),
            FieldType::Long => f.write_str("long"),
            FieldType::Short => f.write_str("short"),
            FieldType::Boolean => f.write_str("boolean"),
            FieldType::Object(name) => f.write_str(&name.replace('/', ".")),
            FieldType::Array(inner) => write!(f, "{inner}[]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodDescriptor {
    pub params: Vec<FieldType>,
    /// `None` for `void`.
    pub ret: Option<FieldType>,
}

impl MethodDescriptor {
    pub fn param_slots(&self) -> u16 {
        self.params.iter().map(FieldType::slots).sum()
    }

    pub fn return_slots(&self) -> u16 {
        self.ret.as_ref().map_or(0, FieldType::slots)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid descriptor `{0}`")]
pub struct DescriptorError(pub String);

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn field_type(&mut self) -> Option<FieldType> {
        let rest = &self.text[self.pos..];
        let c = rest.chars().next()?;
        self.pos += 1;
        Some(match c {
            'B' => FieldType::Byte,
            'C' => FieldType::Char,
            'D' => FieldType::Double,
            'F' => FieldType::Float,
            'I' => FieldType::Int,
            'J' => FieldType::Long,
            'S' => FieldType::Short,
            'Z' => FieldType::Boolean,
            'L' => {
                let end = rest.find(';')?;
                let name = &rest[1..end];
                if name.is_empty() || name.contains(['.', '[']) {
                    return None;
                }
                self.pos += end;
                FieldType::Object(name.to_string())
            }
            '[' => {
                let mut depth = 1;
                while self.text[self.pos..].starts_with('[') {
                    depth += 1;
                    self.pos += 1;
                }
                if depth > 255 {
                    return None;
                }
                let mut ty = self.field_type()?;
                for _ in 0..depth {
                    ty = FieldType::Array(Box::new(ty));
                }
                return Some(ty);
            }
            _ => return None,
        })
    }
}

pub fn parse_field_descriptor(text: &str) -> Result<FieldType, DescriptorError> {
    let mut cursor = Cursor { text, pos: 0 };
    match cursor.field_type() {
        Some(ty) if cursor.pos == text.len() => Ok(ty),
        _ => Err(DescriptorError(text.to_string())),
    }
}

pub fn parse_method_descriptor(text: &str) -> Result<MethodDescriptor, DescriptorError> {
    let err = || DescriptorError(text.to_string());
    if !text.starts_with('(') {
        return Err(err());
    }
    let mut cursor = Cursor { text, pos: 1 };
    let mut params = Vec::new();
    loop {
        if text[cursor.pos..].starts_with(')') {
            cursor.pos += 1;
            break;
        }
        params.push(cursor.field_type().ok_or_else(err)?);
    }
    let ret = if &text[cursor.pos..] == "V" {
        None
    } else {
        let ty = cursor.field_type().ok_or_else(err)?;
        if cursor.pos != text.len() {
            return Err(err());
        }
        Some(ty)
    };
    Ok(MethodDescriptor { params, ret })
}
