use serde::{Deserialize, Serialize};

use crate::wire::{classify_request, shape_of, Field, Message, RequestClass, Shape, Value};

/// Which exchanges a rule looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchClass {
    Preflight,
    Utr,
    AtrAths,
    AtrAtsp,
    Trr,
}

impl MatchClass {
    pub fn of(req: &Message) -> Option<MatchClass> {
        if req.method() == Some("OPTIONS") {
            return Some(MatchClass::Preflight);
        }
        Some(match classify_request(req).ok()? {
            RequestClass::Utr => MatchClass::Utr,
            RequestClass::AtrAths => MatchClass::AtrAths,
            RequestClass::AtrAtsp => MatchClass::AtrAtsp,
            RequestClass::Trr => MatchClass::Trr,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Request,
    Response,
}

/// What part of a message a rule edits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    /// First header with this name.
    Header(String),
    /// First trailer with this name.
    Trailer(String),
    /// First header or trailer with this name.
    Field(String),
    /// A span of the body.
    Body { offset: usize, length: usize },
    /// One member of a list- or map-valued field.
    ListElement { field: String, index: usize },
    /// The message as a whole; only `replay_previous` and `drop` apply.
    Message,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    /// Remove the selection (for `message`: answer 502 instead).
    Drop,
    /// Replace the selection with this text.
    Set(String),
    /// XOR 0x01 into the middle byte of the selection.
    Flip,
    /// XOR 0x01 into byte `n` of the selection.
    FlipAt(usize),
    /// Append `;<param>` to a field value.
    AppendParam(String),
    /// Repeat the selection right after itself.
    Duplicate,
    /// Swap the selection with its successor (or predecessor, if last).
    Reorder,
    /// Substitute the previous message of the same class and direction.
    ReplayPrevious,
}

/// A scripted edit. Rules are deterministic in the traffic they see:
/// `nth` counts matching messages on this hop, starting at 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TamperRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<MatchClass>,
    #[serde(default)]
    pub direction: Direction,
    pub target: Selector,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nth: Option<usize>,
}

impl TamperRule {
    pub fn new(class: MatchClass, direction: Direction, target: Selector, action: Action) -> Self {
        TamperRule {
            class: Some(class),
            direction,
            target,
            action,
            nth: None,
        }
    }

    pub fn nth(mut self, n: usize) -> Self {
        self.nth = Some(n);
        self
    }

    pub fn matches(&self, class: Option<MatchClass>, direction: Direction) -> bool {
        self.direction == direction && (self.class.is_none() || self.class == class)
    }
}

/// The outcome of applying a rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Applied {
    Edited,
    /// The selection was not present; the message is untouched.
    NoTarget,
    /// The message should not be forwarded.
    Dropped,
    /// Replace the message with the stored previous one.
    Replay,
}

fn flip_byte(bytes: &mut [u8], at: Option<usize>) -> bool {
    if bytes.is_empty() {
        return false;
    }
    let i = at.unwrap_or(bytes.len() / 2).min(bytes.len() - 1);
    bytes[i] ^= 0x01;
    true
}

fn locate(msg: &Message, name: &str, headers: bool, trailers: bool) -> Option<(bool, usize)> {
    if headers {
        if let Some(i) = msg.headers.iter().position(|f| f.is_named(name)) {
            return Some((true, i));
        }
    }
    if trailers {
        if let Some(i) = msg.trailers.iter().position(|f| f.is_named(name)) {
            return Some((false, i));
        }
    }
    None
}

fn edit_field(section: &mut Vec<Field>, i: usize, action: &Action) -> Applied {
    match action {
        Action::Drop => {
            section.remove(i);
        }
        Action::Set(v) => section[i].value = v.as_bytes().to_vec(),
        Action::Flip => {
            flip_byte(&mut section[i].value, None);
        }
        Action::FlipAt(n) => {
            flip_byte(&mut section[i].value, Some(*n));
        }
        Action::AppendParam(p) => {
            section[i].value.push(b';');
            section[i].value.extend_from_slice(p.as_bytes());
        }
        Action::Duplicate => {
            let f = section[i].clone();
            section.insert(i + 1, f);
        }
        Action::Reorder => {
            if section.len() < 2 {
                return Applied::NoTarget;
            }
            let j = if i + 1 < section.len() { i + 1 } else { i - 1 };
            section.swap(i, j);
        }
        Action::ReplayPrevious => return Applied::Replay,
    }
    Applied::Edited
}

fn edit_body(body: &mut Vec<u8>, offset: usize, length: usize, action: &Action) -> Applied {
    if offset >= body.len() && !(offset == body.len() && matches!(action, Action::Set(_))) {
        return Applied::NoTarget;
    }
    let end = offset.saturating_add(length).min(body.len());
    match action {
        Action::Drop => {
            body.drain(offset..end);
        }
        Action::Set(v) => {
            body.splice(offset..end, v.bytes());
        }
        Action::Flip => {
            flip_byte(&mut body[offset..end], None);
        }
        Action::FlipAt(n) => {
            flip_byte(&mut body[offset..end], Some(*n));
        }
        Action::Duplicate => {
            let span = body[offset..end].to_vec();
            body.splice(end..end, span);
        }
        Action::Reorder => body[offset..end].reverse(),
        Action::AppendParam(_) => return Applied::NoTarget,
        Action::ReplayPrevious => return Applied::Replay,
    }
    Applied::Edited
}

fn edit_element(field: &mut Field, index: usize, action: &Action) -> Applied {
    let shape = shape_of(&field.name);
    let Some(mut value) = field.value_str().and_then(|t| Value::parse(t, shape).ok()) else {
        return Applied::NoTarget;
    };
    fn apply<T: Clone>(v: &mut Vec<T>, i: usize, action: &Action, mut edit: impl FnMut(&mut T) -> bool) -> Applied {
        if i >= v.len() {
            return Applied::NoTarget;
        }
        match action {
            Action::Drop => {
                v.remove(i);
            }
            Action::Duplicate => {
                let e = v[i].clone();
                v.insert(i + 1, e);
            }
            Action::Reorder => {
                if v.len() < 2 {
                    return Applied::NoTarget;
                }
                let j = if i + 1 < v.len() { i + 1 } else { i - 1 };
                v.swap(i, j);
            }
            Action::ReplayPrevious => return Applied::Replay,
            _ => {
                if !edit(&mut v[i]) {
                    return Applied::NoTarget;
                }
            }
        }
        Applied::Edited
    }
    let edit_item = |item: &mut crate::wire::Item| -> bool {
        let mut text = Value::Item(item.clone()).serialize().into_bytes();
        match action {
            Action::Set(s) => text = s.as_bytes().to_vec(),
            Action::Flip => {
                flip_byte(&mut text, None);
            }
            Action::FlipAt(n) => {
                flip_byte(&mut text, Some(*n));
            }
            Action::AppendParam(p) => {
                text.push(b';');
                text.extend_from_slice(p.as_bytes());
            }
            _ => return false,
        }
        match std::str::from_utf8(&text).ok().and_then(|t| Value::parse(t, Shape::Item).ok()) {
            Some(Value::Item(i)) => {
                *item = i;
                true
            }
            // an edit that breaks the grammar is kept as raw text below
            _ => false,
        }
    };
    let result = match &mut value {
        Value::List(items) => apply(items, index, action, edit_item),
        Value::Map(entries) => apply(entries, index, action, |(_, item)| edit_item(item)),
        Value::Item(_) => return Applied::NoTarget,
    };
    if result == Applied::NoTarget && matches!(action, Action::Flip | Action::FlipAt(_) | Action::Set(_)) {
        // fall back to a raw edit of the element's text
        return raw_element_edit(field, &value, index, action);
    }
    if result == Applied::Edited {
        field.value = value.serialize().into_bytes();
    }
    result
}

fn raw_element_edit(field: &mut Field, value: &Value, index: usize, action: &Action) -> Applied {
    let parts: Vec<String> = match value {
        Value::List(items) => items.iter().map(|i| Value::Item(i.clone()).serialize()).collect(),
        Value::Map(entries) => entries
            .iter()
            .map(|(k, i)| format!("{k}={}", Value::Item(i.clone()).serialize()))
            .collect(),
        Value::Item(_) => return Applied::NoTarget,
    };
    let Some(target) = parts.get(index) else {
        return Applied::NoTarget;
    };
    let mut bytes = target.clone().into_bytes();
    match action {
        Action::Set(s) => bytes = s.as_bytes().to_vec(),
        Action::Flip => {
            flip_byte(&mut bytes, None);
        }
        Action::FlipAt(n) => {
            flip_byte(&mut bytes, Some(*n));
        }
        _ => return Applied::NoTarget,
    }
    let mut out: Vec<Vec<u8>> = parts.into_iter().map(String::into_bytes).collect();
    out[index] = bytes;
    field.value = out.join(&b", "[..]);
    Applied::Edited
}

/// Applies `rule` to `msg` in place.
pub fn apply_rule(rule: &TamperRule, msg: &mut Message) -> Applied {
    match &rule.target {
        Selector::Message => match rule.action {
            Action::ReplayPrevious => Applied::Replay,
            Action::Drop => Applied::Dropped,
            _ => Applied::NoTarget,
        },
        Selector::Header(n) | Selector::Trailer(n) | Selector::Field(n) => {
            let (h, t) = match &rule.target {
                Selector::Header(_) => (true, false),
                Selector::Trailer(_) => (false, true),
                _ => (true, true),
            };
            match locate(msg, n, h, t) {
                Some((true, i)) => edit_field(&mut msg.headers, i, &rule.action),
                Some((false, i)) => edit_field(&mut msg.trailers, i, &rule.action),
                None => Applied::NoTarget,
            }
        }
        Selector::Body { offset, length } => edit_body(&mut msg.body, *offset, *length, &rule.action),
        Selector::ListElement { field, index } => match locate(msg, field, true, true) {
            Some((true, i)) => edit_element(&mut msg.headers[i], *index, &rule.action),
            Some((false, i)) => edit_element(&mut msg.trailers[i], *index, &rule.action),
            None => Applied::NoTarget,
        },
    }
}
