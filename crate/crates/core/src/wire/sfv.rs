//! Restricted structured-field profile for `Attest-*` values.
//!
//! A top-level value is a single item, a comma-separated list of items, or a
//! comma-separated map of `key=item` members. An item is an integer, a token
//! or a byte string (`:base64url-without-padding:`), optionally followed by
//! `;key=value` parameters. There are no inner lists, booleans, decimals or
//! quoted strings.

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;

use super::WireError;

const MAX_INTEGER: i64 = 999_999_999_999_999;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BareItem {
    Integer(i64),
    Token(String),
    Bytes(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Item {
    pub bare: BareItem,
    pub params: Vec<(String, BareItem)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Item(Item),
    List(Vec<Item>),
    Map(Vec<(String, Item)>),
}

/// Which top-level grammar a field uses. Like structured fields, the shape is
/// a property of the field name, not of the text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Item,
    List,
    Map,
}

pub fn b64_encode(bytes: &[u8]) -> String {
    URL_SAFE_NO_PAD.encode(bytes)
}

/// Strict base64url decoding: no padding, no non-zero trailing bits.
pub fn b64_decode(text: &str) -> Result<Vec<u8>, WireError> {
    URL_SAFE_NO_PAD
        .decode(text)
        .map_err(|e| WireError::MalformedValue(format!("base64url: {e}")))
}

impl BareItem {
    pub fn token(t: impl Into<String>) -> Self {
        BareItem::Token(t.into())
    }

    pub fn as_bytes(&self) -> Option<&[u8]> {
        match self {
            BareItem::Bytes(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_token(&self) -> Option<&str> {
        match self {
            BareItem::Token(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_integer(&self) -> Option<i64> {
        match self {
            BareItem::Integer(i) => Some(*i),
            _ => None,
        }
    }

    fn check(&self) -> Result<(), WireError> {
        match self {
            BareItem::Integer(i) if i.abs() > MAX_INTEGER => {
                Err(WireError::MalformedValue(format!("integer {i} out of range")))
            }
            BareItem::Token(t) if !is_token(t) => {
                Err(WireError::MalformedValue(format!("bad token {t:?}")))
            }
            _ => Ok(()),
        }
    }

    fn write(&self, out: &mut String) {
        match self {
            BareItem::Integer(i) => out.push_str(&i.to_string()),
            BareItem::Token(t) => out.push_str(t),
            BareItem::Bytes(b) => {
                out.push(':');
                out.push_str(&b64_encode(b));
                out.push(':');
            }
        }
    }
}

impl Item {
    pub fn new(bare: BareItem) -> Self {
        Item {
            bare,
            params: Vec::new(),
        }
    }

    pub fn bytes(b: impl Into<Vec<u8>>) -> Self {
        Item::new(BareItem::Bytes(b.into()))
    }

    pub fn token(t: impl Into<String>) -> Self {
        Item::new(BareItem::Token(t.into()))
    }

    pub fn integer(i: i64) -> Self {
        Item::new(BareItem::Integer(i))
    }

    pub fn with_param(mut self, key: impl Into<String>, value: BareItem) -> Self {
        self.params.push((key.into(), value));
        self
    }

    pub fn param(&self, key: &str) -> Option<&BareItem> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    fn write(&self, out: &mut String) {
        self.bare.write(out);
        for (k, v) in &self.params {
            out.push(';');
            out.push_str(k);
            out.push('=');
            v.write(out);
        }
    }

    fn check(&self) -> Result<(), WireError> {
        self.bare.check()?;
        for (k, v) in &self.params {
            if !is_key(k) {
                return Err(WireError::MalformedValue(format!("bad parameter key {k:?}")));
            }
            v.check()?;
        }
        Ok(())
    }
}

impl Value {
    pub fn shape(&self) -> Shape {
        match self {
            Value::Item(_) => Shape::Item,
            Value::List(_) => Shape::List,
            Value::Map(_) => Shape::Map,
        }
    }

    pub fn as_item(&self) -> Option<&Item> {
        match self {
            Value::Item(i) => Some(i),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Item]> {
        match self {
            Value::List(l) => Some(l),
            _ => None,
        }
    }

    pub fn as_map(&self) -> Option<&[(String, Item)]> {
        match self {
            Value::Map(m) => Some(m),
            _ => None,
        }
    }

    pub fn map_get(&self, key: &str) -> Option<&Item> {
        self.as_map()?.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    /// Checks every token, key and integer against the grammar.
    pub fn check(&self) -> Result<(), WireError> {
        match self {
            Value::Item(i) => i.check(),
            Value::List(l) => l.iter().try_for_each(Item::check),
            Value::Map(m) => m.iter().try_for_each(|(k, v)| {
                if !is_key(k) {
                    return Err(WireError::MalformedValue(format!("bad map key {k:?}")));
                }
                v.check()
            }),
        }
    }

    /// Canonical text form. Parsing it back with the same shape is the identity.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        match self {
            Value::Item(i) => i.write(&mut out),
            Value::List(l) => {
                for (n, i) in l.iter().enumerate() {
                    if n > 0 {
                        out.push_str(", ");
                    }
                    i.write(&mut out);
                }
            }
            Value::Map(m) => {
                for (n, (k, i)) in m.iter().enumerate() {
                    if n > 0 {
                        out.push_str(", ");
                    }
                    out.push_str(k);
                    out.push('=');
                    i.write(&mut out);
                }
            }
        }
        out
    }

    pub fn parse(text: &str, shape: Shape) -> Result<Value, WireError> {
        let mut p = Parser {
            s: text.as_bytes(),
            pos: 0,
        };
        p.skip_ows();
        let value = match shape {
            Shape::Item => {
                let item = p.item()?;
                Value::Item(item)
            }
            Shape::List => {
                let mut items = Vec::new();
                if !p.at_end() {
                    loop {
                        items.push(p.item()?);
                        p.skip_ows();
                        if p.at_end() {
                            break;
                        }
                        p.expect(b',')?;
                        p.skip_ows();
                    }
                }
                Value::List(items)
            }
            Shape::Map => {
                let mut members = Vec::new();
                if !p.at_end() {
                    loop {
                        let key = p.key()?;
                        p.expect(b'=')?;
                        members.push((key, p.item()?));
                        p.skip_ows();
                        if p.at_end() {
                            break;
                        }
                        p.expect(b',')?;
                        p.skip_ows();
                    }
                }
                Value::Map(members)
            }
        };
        p.skip_ows();
        if !p.at_end() {
            return Err(WireError::MalformedValue(format!(
                "unexpected trailing text at offset {}",
                p.pos
            )));
        }
        Ok(value)
    }
}

pub(crate) fn is_token(t: &str) -> bool {
    let b = t.as_bytes();
    match b.first() {
        Some(c) if c.is_ascii_alphabetic() || *c == b'*' => {}
        _ => return false,
    }
    b[1..]
        .iter()
        .all(|&c| super::message::is_tchar(c) || c == b':' || c == b'/')
}

fn is_key(k: &str) -> bool {
    let b = k.as_bytes();
    match b.first() {
        Some(c) if c.is_ascii_alphabetic() || *c == b'*' => {}
        _ => return false,
    }
    b[1..]
        .iter()
        .all(|&c| c.is_ascii_alphanumeric() || b"_-.*".contains(&c))
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn at_end(&self) -> bool {
        self.pos >= self.s.len()
    }

    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn skip_ows(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t')) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), WireError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(WireError::MalformedValue(format!(
                "expected {:?} at offset {}",
                c as char, self.pos
            )))
        }
    }

    fn take_while(&mut self, f: impl Fn(u8) -> bool) -> &str {
        let start = self.pos;
        while self.peek().is_some_and(&f) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.s[start..self.pos]).expect("ascii subset")
    }

    fn key(&mut self) -> Result<String, WireError> {
        let k = self
            .take_while(|c| c.is_ascii_alphanumeric() || b"_-.*".contains(&c))
            .to_string();
        if !is_key(&k) {
            return Err(WireError::MalformedValue(format!("bad key {k:?}")));
        }
        Ok(k)
    }

    fn item(&mut self) -> Result<Item, WireError> {
        let bare = self.bare_item()?;
        let mut params = Vec::new();
        while self.peek() == Some(b';') {
            self.pos += 1;
            let key = self.key()?;
            self.expect(b'=')?;
            params.push((key, self.bare_item()?));
        }
        Ok(Item { bare, params })
    }

    fn bare_item(&mut self) -> Result<BareItem, WireError> {
        match self.peek() {
            Some(b':') => {
                self.pos += 1;
                let text = self
                    .take_while(|c| c.is_ascii_alphanumeric() || c == b'-' || c == b'_')
                    .to_string();
                self.expect(b':')?;
                Ok(BareItem::Bytes(b64_decode(&text)?))
            }
            Some(c) if c == b'-' || c.is_ascii_digit() => {
                let start = self.pos;
                if c == b'-' {
                    self.pos += 1;
                }
                let digits = self.take_while(|c| c.is_ascii_digit());
                if digits.is_empty() || digits.len() > 15 {
                    return Err(WireError::MalformedValue(format!(
                        "bad integer at offset {start}"
                    )));
                }
                if digits.len() > 1 && digits.starts_with('0') {
                    return Err(WireError::MalformedValue("integer with leading zero".into()));
                }
                let text = std::str::from_utf8(&self.s[start..self.pos]).expect("ascii");
                if text == "-0" {
                    return Err(WireError::MalformedValue("negative zero".into()));
                }
                Ok(BareItem::Integer(text.parse().expect("checked digits")))
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'*' => {
                let t = self
                    .take_while(|c| super::message::is_tchar(c) || c == b':' || c == b'/')
                    .to_string();
                Ok(BareItem::Token(t))
            }
            _ => Err(WireError::MalformedValue(format!(
                "expected item at offset {}",
                self.pos
            ))),
        }
    }
}
