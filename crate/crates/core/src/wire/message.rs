use super::WireError;

/// Field names the codec owns; they never appear in `Message::headers` or
/// `Message::trailers`.
pub const FRAMING_FIELDS: [&str; 2] = ["Content-Length", "Transfer-Encoding"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StartLine {
    Request { method: String, target: String },
    Response { status: u16 },
}

/// One header or trailer line. Names compare case-insensitively.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Field {
    pub name: String,
    pub value: Vec<u8>,
}

impl Field {
    pub fn new(name: impl Into<String>, value: impl Into<Vec<u8>>) -> Self {
        Field {
            name: name.into(),
            value: value.into(),
        }
    }

    pub fn is_named(&self, name: &str) -> bool {
        self.name.eq_ignore_ascii_case(name)
    }

    pub fn value_str(&self) -> Option<&str> {
        std::str::from_utf8(&self.value).ok()
    }
}

/// An HTTP/1.1 request or response. Framing (`Content-Length` or chunked
/// transfer-encoding) is chosen by the codec, so the model only carries the
/// semantic parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub start: StartLine,
    pub headers: Vec<Field>,
    pub body: Vec<u8>,
    pub trailers: Vec<Field>,
}

impl Message {
    pub fn request(method: impl Into<String>, target: impl Into<String>) -> Self {
        Message {
            start: StartLine::Request {
                method: method.into(),
                target: target.into(),
            },
            headers: Vec::new(),
            body: Vec::new(),
            trailers: Vec::new(),
        }
    }

    pub fn response(status: u16) -> Self {
        Message {
            start: StartLine::Response { status },
            headers: Vec::new(),
            body: Vec::new(),
            trailers: Vec::new(),
        }
    }

    pub fn is_request(&self) -> bool {
        matches!(self.start, StartLine::Request { .. })
    }

    pub fn method(&self) -> Option<&str> {
        match &self.start {
            StartLine::Request { method, .. } => Some(method),
            StartLine::Response { .. } => None,
        }
    }

    pub fn target(&self) -> Option<&str> {
        match &self.start {
            StartLine::Request { target, .. } => Some(target),
            StartLine::Response { .. } => None,
        }
    }

    pub fn status(&self) -> Option<u16> {
        match self.start {
            StartLine::Response { status } => Some(status),
            StartLine::Request { .. } => None,
        }
    }

    /// First header with the given name.
    pub fn header(&self, name: &str) -> Option<&[u8]> {
        self.headers
            .iter()
            .find(|f| f.is_named(name))
            .map(|f| f.value.as_slice())
    }

    pub fn header_str(&self, name: &str) -> Option<&str> {
        self.header(name).and_then(|v| std::str::from_utf8(v).ok())
    }

    pub fn trailer(&self, name: &str) -> Option<&[u8]> {
        self.trailers
            .iter()
            .find(|f| f.is_named(name))
            .map(|f| f.value.as_slice())
    }

    /// Looks in headers first, then trailers.
    pub fn field(&self, name: &str) -> Option<&[u8]> {
        self.header(name).or_else(|| self.trailer(name))
    }

    pub fn has_field(&self, name: &str) -> bool {
        self.field(name).is_some()
    }

    pub fn push_header(&mut self, name: impl Into<String>, value: impl Into<Vec<u8>>) {
        self.headers.push(Field::new(name, value));
    }

    pub fn push_trailer(&mut self, name: impl Into<String>, value: impl Into<Vec<u8>>) {
        self.trailers.push(Field::new(name, value));
    }

    pub fn with_header(mut self, name: impl Into<String>, value: impl Into<Vec<u8>>) -> Self {
        self.push_header(name, value);
        self
    }

    pub fn with_body(mut self, body: impl Into<Vec<u8>>) -> Self {
        self.body = body.into();
        self
    }

    /// Removes every header and trailer with this name.
    pub fn remove_field(&mut self, name: &str) {
        self.headers.retain(|f| !f.is_named(name));
        self.trailers.retain(|f| !f.is_named(name));
    }

    /// Header fields followed by trailer fields, in wire order.
    pub fn all_fields(&self) -> impl Iterator<Item = &Field> {
        self.headers.iter().chain(self.trailers.iter())
    }

    pub fn validate(&self) -> Result<(), WireError> {
        match &self.start {
            StartLine::Request { method, target } => {
                if method.is_empty() || !method.bytes().all(is_tchar) {
                    return Err(WireError::InvalidMessage(format!("bad method {method:?}")));
                }
                if target.is_empty() || target.bytes().any(|b| b <= b' ' || b == 0x7f) {
                    return Err(WireError::InvalidMessage(format!("bad target {target:?}")));
                }
            }
            StartLine::Response { status } => {
                if !(100..=599).contains(status) {
                    return Err(WireError::InvalidMessage(format!("status {status} out of range")));
                }
            }
        }
        for (section, fields) in [("header", &self.headers), ("trailer", &self.trailers)] {
            for f in fields {
                if f.name.is_empty() || !f.name.bytes().all(is_tchar) {
                    return Err(WireError::InvalidMessage(format!(
                        "bad {section} name {:?}",
                        f.name
                    )));
                }
                if FRAMING_FIELDS.iter().any(|n| f.is_named(n)) {
                    return Err(WireError::InvalidMessage(format!(
                        "{section} {} is managed by the codec",
                        f.name
                    )));
                }
                if f.value.iter().any(|&b| b == b'\r' || b == b'\n' || b == 0) {
                    return Err(WireError::InvalidMessage(format!(
                        "{section} {} contains a line break",
                        f.name
                    )));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn is_tchar(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b"!#$%&'*+-.^_`|~".contains(&b)
}

pub(crate) fn reason_phrase(status: u16) -> &'static str {
    match status {
        100 => "Continue",
        200 => "OK",
        201 => "Created",
        204 => "No Content",
        400 => "Bad Request",
        401 => "Unauthorized",
        403 => "Forbidden",
        404 => "Not Found",
        405 => "Method Not Allowed",
        413 => "Content Too Large",
        500 => "Internal Server Error",
        502 => "Bad Gateway",
        503 => "Service Unavailable",
        _ => "Unknown",
    }
}
