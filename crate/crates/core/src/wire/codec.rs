use std::io::{BufRead, Write};

use super::message::{is_tchar, reason_phrase, Field, Message, StartLine, FRAMING_FIELDS};
use super::WireError;

pub const DEFAULT_MAX_HEADER_BYTES: usize = 64 * 1024;
pub const DEFAULT_MAX_BODY_BYTES: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    /// Cap on the start line plus header section (and on the trailer section).
    pub max_header_bytes: usize,
    /// Cap on the de-chunked body.
    pub max_body_bytes: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_header_bytes: DEFAULT_MAX_HEADER_BYTES,
            max_body_bytes: DEFAULT_MAX_BODY_BYTES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Framing {
    /// Chunked when trailers are present, `Content-Length` otherwise.
    #[default]
    Auto,
    ContentLength,
    Chunked,
}

pub fn parse_message(bytes: &[u8]) -> Result<Message, WireError> {
    parse_message_with(bytes, &Limits::default())
}

/// Parses exactly one complete message; trailing bytes are an error.
pub fn parse_message_with(bytes: &[u8], limits: &Limits) -> Result<Message, WireError> {
    match parse_prefix(bytes, limits)? {
        Some((msg, used)) if used == bytes.len() => Ok(msg),
        Some((_, used)) => Err(WireError::MalformedMessage(format!(
            "{} trailing bytes after message",
            bytes.len() - used
        ))),
        None => Err(WireError::MalformedMessage("truncated message".into())),
    }
}

/// Parses one message from the front of `buf`. `Ok(None)` means more bytes
/// are needed; on success returns the message and the number of bytes used.
pub fn parse_prefix(buf: &[u8], limits: &Limits) -> Result<Option<(Message, usize)>, WireError> {
    let head_end = match find(buf, b"\r\n\r\n") {
        Some(p) => p,
        None => {
            if buf.len() > limits.max_header_bytes {
                return Err(WireError::OversizeMessage {
                    part: "header section",
                    limit: limits.max_header_bytes,
                });
            }
            return Ok(None);
        }
    };
    if head_end + 4 > limits.max_header_bytes {
        return Err(WireError::OversizeMessage {
            part: "header section",
            limit: limits.max_header_bytes,
        });
    }
    let head = &buf[..head_end];
    let mut lines = head.split(|&b| b == b'\n').map(strip_cr);
    let start_line = lines
        .next()
        .ok_or_else(|| WireError::MalformedMessage("empty start line".into()))?;
    let start = parse_start_line(start_line)?;

    let mut headers = Vec::new();
    let mut content_length: Option<usize> = None;
    let mut chunked = false;
    for line in lines {
        let field = parse_field_line(line)?;
        if field.is_named("Content-Length") {
            let text = field
                .value_str()
                .filter(|s| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()))
                .ok_or_else(|| WireError::MalformedMessage("bad Content-Length".into()))?;
            let n: usize = text
                .parse()
                .map_err(|_| WireError::MalformedMessage("bad Content-Length".into()))?;
            if content_length.is_some_and(|prev| prev != n) {
                return Err(WireError::MalformedMessage("conflicting Content-Length".into()));
            }
            content_length = Some(n);
        } else if field.is_named("Transfer-Encoding") {
            let text = field.value_str().unwrap_or_default();
            let last = text.rsplit(',').next().unwrap_or_default().trim();
            if !last.eq_ignore_ascii_case("chunked") {
                return Err(WireError::MalformedMessage(format!(
                    "unsupported transfer-encoding {text:?}"
                )));
            }
            chunked = true;
        } else {
            headers.push(field);
        }
    }
    if chunked && content_length.is_some() {
        return Err(WireError::MalformedMessage(
            "both Content-Length and Transfer-Encoding present".into(),
        ));
    }

    let mut pos = head_end + 4;
    let mut body = Vec::new();
    let mut trailers = Vec::new();
    if chunked {
        loop {
            let Some(eol) = find(&buf[pos..], b"\r\n") else {
                return Ok(None);
            };
            let size_line = &buf[pos..pos + eol];
            pos += eol + 2;
            let size_text = size_line.split(|&b| b == b';').next().unwrap_or_default();
            let size_text = std::str::from_utf8(size_text)
                .map_err(|_| WireError::MalformedMessage("bad chunk size".into()))?
                .trim();
            if size_text.is_empty() || !size_text.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(WireError::MalformedMessage(format!(
                    "bad chunk size {size_text:?}"
                )));
            }
            let size = usize::from_str_radix(size_text, 16)
                .map_err(|_| WireError::MalformedMessage("chunk size overflow".into()))?;
            if size == 0 {
                break;
            }
            if body.len().saturating_add(size) > limits.max_body_bytes {
                return Err(WireError::OversizeMessage {
                    part: "body",
                    limit: limits.max_body_bytes,
                });
            }
            if buf.len() < pos + size + 2 {
                return Ok(None);
            }
            body.extend_from_slice(&buf[pos..pos + size]);
            pos += size;
            if &buf[pos..pos + 2] != b"\r\n" {
                return Err(WireError::MalformedMessage("chunk not terminated by CRLF".into()));
            }
            pos += 2;
        }
        let trailer_start = pos;
        loop {
            let Some(eol) = find(&buf[pos..], b"\r\n") else {
                if buf.len() - trailer_start > limits.max_header_bytes {
                    return Err(WireError::OversizeMessage {
                        part: "trailer section",
                        limit: limits.max_header_bytes,
                    });
                }
                return Ok(None);
            };
            let line = &buf[pos..pos + eol];
            pos += eol + 2;
            if pos - trailer_start > limits.max_header_bytes {
                return Err(WireError::OversizeMessage {
                    part: "trailer section",
                    limit: limits.max_header_bytes,
                });
            }
            if line.is_empty() {
                break;
            }
            let field = parse_field_line(line)?;
            if FRAMING_FIELDS.iter().any(|n| field.is_named(n)) {
                return Err(WireError::MalformedMessage(format!(
                    "framing field {} in trailer section",
                    field.name
                )));
            }
            trailers.push(field);
        }
    } else if let Some(n) = content_length {
        if n > limits.max_body_bytes {
            return Err(WireError::OversizeMessage {
                part: "body",
                limit: limits.max_body_bytes,
            });
        }
        if buf.len() < pos + n {
            return Ok(None);
        }
        body.extend_from_slice(&buf[pos..pos + n]);
        pos += n;
    }

    Ok(Some((
        Message {
            start,
            headers,
            body,
            trailers,
        },
        pos,
    )))
}

pub fn serialize_message(msg: &Message) -> Result<Vec<u8>, WireError> {
    serialize_with(msg, Framing::Auto)
}

pub fn serialize_with(msg: &Message, framing: Framing) -> Result<Vec<u8>, WireError> {
    msg.validate()?;
    let chunked = match framing {
        Framing::Auto => !msg.trailers.is_empty(),
        Framing::Chunked => true,
        Framing::ContentLength => {
            if !msg.trailers.is_empty() {
                return Err(WireError::InvalidMessage(
                    "trailers need chunked transfer-encoding".into(),
                ));
            }
            false
        }
    };
    let mut out = Vec::with_capacity(256 + msg.body.len());
    match &msg.start {
        StartLine::Request { method, target } => {
            out.extend_from_slice(format!("{method} {target} HTTP/1.1\r\n").as_bytes());
        }
        StartLine::Response { status } => {
            out.extend_from_slice(
                format!("HTTP/1.1 {status} {}\r\n", reason_phrase(*status)).as_bytes(),
            );
        }
    }
    for f in &msg.headers {
        write_field(&mut out, f);
    }
    if chunked {
        out.extend_from_slice(b"Transfer-Encoding: chunked\r\n\r\n");
        if !msg.body.is_empty() {
            out.extend_from_slice(format!("{:x}\r\n", msg.body.len()).as_bytes());
            out.extend_from_slice(&msg.body);
            out.extend_from_slice(b"\r\n");
        }
        out.extend_from_slice(b"0\r\n");
        for f in &msg.trailers {
            write_field(&mut out, f);
        }
        out.extend_from_slice(b"\r\n");
    } else {
        out.extend_from_slice(format!("Content-Length: {}\r\n\r\n", msg.body.len()).as_bytes());
        out.extend_from_slice(&msg.body);
    }
    Ok(out)
}

/// Reads one message from a buffered stream, returning it with the exact
/// bytes consumed. Bytes of any following (pipelined) message stay in the
/// reader.
pub fn read_message<R: BufRead>(reader: &mut R, limits: &Limits) -> Result<(Message, Vec<u8>), WireError> {
    let mut buf = Vec::with_capacity(4096);
    loop {
        let avail = reader.fill_buf().map_err(|e| WireError::Io(e.to_string()))?;
        if avail.is_empty() {
            return Err(if buf.is_empty() {
                WireError::Io("connection closed before a message arrived".into())
            } else {
                WireError::MalformedMessage("connection closed mid-message".into())
            });
        }
        let (start, n) = (buf.len(), avail.len());
        buf.extend_from_slice(avail);
        match parse_prefix(&buf, limits)? {
            Some((msg, used)) => {
                reader.consume(used - start);
                buf.truncate(used);
                return Ok((msg, buf));
            }
            None => reader.consume(n),
        }
    }
}

pub fn write_message<W: Write>(writer: &mut W, msg: &Message) -> Result<Vec<u8>, WireError> {
    let bytes = serialize_message(msg)?;
    writer
        .write_all(&bytes)
        .and_then(|_| writer.flush())
        .map_err(|e| WireError::Io(e.to_string()))?;
    Ok(bytes)
}

fn write_field(out: &mut Vec<u8>, f: &Field) {
    out.extend_from_slice(f.name.as_bytes());
    out.extend_from_slice(b": ");
    out.extend_from_slice(&f.value);
    out.extend_from_slice(b"\r\n");
}

fn parse_start_line(line: &[u8]) -> Result<StartLine, WireError> {
    let text = std::str::from_utf8(line)
        .map_err(|_| WireError::MalformedMessage("start line is not UTF-8".into()))?;
    if let Some(rest) = text.strip_prefix("HTTP/") {
        let mut parts = rest.splitn(3, ' ');
        let version = parts.next().unwrap_or_default();
        if version != "1.1" && version != "1.0" {
            return Err(WireError::MalformedMessage(format!("unsupported version HTTP/{version}")));
        }
        let code = parts.next().unwrap_or_default();
        if code.len() != 3 || !code.bytes().all(|b| b.is_ascii_digit()) {
            return Err(WireError::MalformedMessage(format!("bad status code {code:?}")));
        }
        let status: u16 = code.parse().expect("three ascii digits");
        if !(100..=599).contains(&status) {
            return Err(WireError::MalformedMessage(format!("status {status} out of range")));
        }
        return Ok(StartLine::Response { status });
    }
    let parts: Vec<&str> = text.split(' ').collect();
    if parts.len() != 3 {
        return Err(WireError::MalformedMessage(format!("bad request line {text:?}")));
    }
    let (method, target, version) = (parts[0], parts[1], parts[2]);
    if method.is_empty() || !method.bytes().all(is_tchar) {
        return Err(WireError::MalformedMessage(format!("bad method {method:?}")));
    }
    if target.is_empty() {
        return Err(WireError::MalformedMessage("empty request target".into()));
    }
    if version != "HTTP/1.1" && version != "HTTP/1.0" {
        return Err(WireError::MalformedMessage(format!("unsupported version {version:?}")));
    }
    Ok(StartLine::Request {
        method: method.to_string(),
        target: target.to_string(),
    })
}

fn parse_field_line(line: &[u8]) -> Result<Field, WireError> {
    let colon = line
        .iter()
        .position(|&b| b == b':')
        .ok_or_else(|| WireError::MalformedMessage("header line without colon".into()))?;
    let name = &line[..colon];
    if name.is_empty() || !name.iter().all(|&b| is_tchar(b)) {
        return Err(WireError::MalformedMessage(format!(
            "bad field name {:?}",
            String::from_utf8_lossy(name)
        )));
    }
    let value = trim_ows(&line[colon + 1..]);
    Ok(Field::new(
        String::from_utf8(name.to_vec()).expect("tchars are ascii"),
        value.to_vec(),
    ))
}

fn strip_cr(line: &[u8]) -> &[u8] {
    line.strip_suffix(b"\r").unwrap_or(line)
}

fn trim_ows(mut v: &[u8]) -> &[u8] {
    while let [b' ' | b'\t', rest @ ..] = v {
        v = rest;
    }
    while let [rest @ .., b' ' | b'\t'] = v {
        v = rest;
    }
    v
}

fn find(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}
