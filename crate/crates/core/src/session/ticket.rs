use crate::crypto::{accept_sequential_nonce, open, seal, CryptoError, ReplayVerdict, SequenceCounter, SessionKeys};
use crate::reason;
use crate::wire::{attest_fields, names, transcript_of_fields, AttestHeaderLine, BareItem, Item, Message, Value};

/// Single-use request authenticator carried as the last trailer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ticket {
    pub seq: u64,
    pub tag: Vec<u8>,
}

impl Ticket {
    pub fn to_line(&self) -> AttestHeaderLine {
        let seq = i64::try_from(self.seq).expect("sequence fits a structured integer");
        AttestHeaderLine::new(
            names::TICKET,
            Value::Item(Item::bytes(self.tag.clone()).with_param("seq", BareItem::Integer(seq))),
        )
        .expect("ticket shape")
    }

    /// Strict reading: a byte sequence with exactly one positive `seq`.
    pub fn from_line(line: &AttestHeaderLine) -> Option<Ticket> {
        let item = line.value().as_item()?;
        let tag = item.bare.as_bytes()?.to_vec();
        match item.params.as_slice() {
            [(k, BareItem::Integer(seq))] if k == "seq" && *seq > 0 => Some(Ticket {
                seq: *seq as u64,
                tag,
            }),
            _ => None,
        }
    }
}

fn protected_transcript(msg: &Message, exclude: &str) -> Vec<u8> {
    transcript_of_fields(attest_fields(msg).filter(|f| !f.is_named(exclude)))
}

fn ticket_aad(msg: &Message, seq: u64) -> Vec<u8> {
    let mut aad = protected_transcript(msg, names::TICKET);
    aad.extend_from_slice(msg.method().unwrap_or_default().as_bytes());
    aad.push(b' ');
    aad.extend_from_slice(msg.target().unwrap_or_default().as_bytes());
    aad.push(b'\n');
    aad.extend_from_slice(&seq.to_be_bytes());
    aad
}

/// Tags `msg` (which must not carry a ticket yet) under `seq` and appends the
/// ticket as its final trailer.
pub fn attach_ticket(keys: &SessionKeys, seq: u64, msg: &mut Message) -> Result<Ticket, CryptoError> {
    let tag = seal(
        keys.suite,
        &keys.ticket_key,
        &keys.client_iv,
        seq,
        b"",
        &ticket_aad(msg, seq),
    )?;
    let ticket = Ticket { seq, tag };
    msg.trailers.push(ticket.to_line().to_field());
    Ok(ticket)
}

/// MAC check, then the replay window. The counter moves only if both pass.
pub fn validate_ticket(
    keys: &SessionKeys,
    counter: &mut SequenceCounter,
    msg: &Message,
    strict: bool,
) -> Result<Ticket, &'static str> {
    match msg.trailers.last() {
        Some(f) if f.is_named(names::TICKET) => {}
        _ => return Err(reason::MISSING_TICKET),
    }
    if attest_fields(msg).filter(|f| f.is_named(names::TICKET)).count() != 1 {
        return Err(reason::BAD_MAC);
    }
    let last = msg.trailers.last().expect("checked above");
    let ticket = AttestHeaderLine::from_field(last)
        .ok()
        .as_ref()
        .and_then(Ticket::from_line)
        .ok_or(reason::BAD_MAC)?;
    open(
        keys.suite,
        &keys.ticket_key,
        &keys.client_iv,
        ticket.seq,
        &ticket.tag,
        &ticket_aad(msg, ticket.seq),
    )
    .map_err(|_| reason::BAD_MAC)?;
    match accept_sequential_nonce(counter, ticket.seq, strict) {
        ReplayVerdict::Accept => Ok(ticket),
        ReplayVerdict::Reject => Err(reason::REPLAY),
    }
}

fn binder_aad(resp: &Message, ticket: &Ticket) -> Vec<u8> {
    let mut aad = protected_transcript(resp, names::BINDER);
    aad.extend_from_slice(&ticket.seq.to_be_bytes());
    aad.extend_from_slice(&ticket.tag);
    aad
}

/// Binds `resp` to the request's ticket; appended as the final trailer.
pub fn attach_binder(keys: &SessionKeys, resp: &mut Message, ticket: &Ticket) -> Result<(), CryptoError> {
    let tag = seal(
        keys.suite,
        &keys.binder_key,
        &keys.service_iv,
        ticket.seq,
        b"",
        &binder_aad(resp, ticket),
    )?;
    let line = AttestHeaderLine::new(names::BINDER, Value::Item(Item::bytes(tag))).expect("binder shape");
    resp.trailers.push(line.to_field());
    Ok(())
}

pub fn validate_binder(keys: &SessionKeys, resp: &Message, ticket: &Ticket) -> Result<(), &'static str> {
    match resp.trailers.last() {
        Some(f) if f.is_named(names::BINDER) => {}
        _ => return Err(reason::MISSING_BINDER),
    }
    if attest_fields(resp).filter(|f| f.is_named(names::BINDER)).count() != 1 {
        return Err(reason::BAD_BINDER);
    }
    let tag = AttestHeaderLine::from_field(resp.trailers.last().expect("checked above"))
        .ok()
        .and_then(|l| match l.value().as_item() {
            Some(i) if i.params.is_empty() => i.bare.as_bytes().map(<[u8]>::to_vec),
            _ => None,
        })
        .ok_or(reason::BAD_BINDER)?;
    open(
        keys.suite,
        &keys.binder_key,
        &keys.service_iv,
        ticket.seq,
        &tag,
        &binder_aad(resp, ticket),
    )
    .map(|_| ())
    .map_err(|_| reason::BAD_BINDER)
}
