use httpa2::wire::{
    canonical_transcript, classify_request, parse_message, read_message, serialize_message, serialize_with, shape_of,
    transcript_of_fields, AttestHeaderLine, BareItem, Field, Framing, Item, Limits, Message, RequestClass, Shape,
    Value, WireError,
};
use proptest::prelude::*;

#[test]
fn chunked_body_with_trailers() {
    let raw = b"POST /echo HTTP/1.1\r\nHost: a\r\nTransfer-Encoding: chunked\r\n\r\n\
4\r\nWiki\r\n6\r\npedia \r\nE\r\nin \r\n\r\nchunks.\r\n0\r\nAttest-Ticket: :AAAA:\r\nX-Trailer: yes\r\n\r\n";
    let msg = parse_message(raw).unwrap();
    assert_eq!(msg.body, b"Wikipedia in \r\n\r\nchunks.");
    assert_eq!(msg.trailers.len(), 2);
    assert_eq!(msg.trailer("attest-ticket"), Some(&b":AAAA:"[..]));
    assert!(msg.header("Transfer-Encoding").is_none());

    let again = parse_message(&serialize_message(&msg).unwrap()).unwrap();
    assert_eq!(again, msg);
}

#[test]
fn content_length_framing_when_no_trailers() {
    let msg = Message::response(200).with_header("Content-Type", "text/plain").with_body("hi");
    let bytes = serialize_message(&msg).unwrap();
    let text = String::from_utf8(bytes).unwrap();
    assert!(text.starts_with("HTTP/1.1 200 OK\r\n"));
    assert!(text.contains("Content-Length: 2\r\n"));
    assert!(text.ends_with("\r\n\r\nhi"));

    let mut with_trailer = msg.clone();
    with_trailer.push_trailer("X-T", "1");
    assert!(serialize_with(&with_trailer, Framing::ContentLength).is_err());
}

#[test]
fn stream_reads_back_to_back_messages() {
    let a = Message::request("GET", "/a").with_header("Host", "x");
    let mut b = Message::request("POST", "/b").with_header("Host", "x").with_body("body");
    b.push_trailer("Attest-Ticket", ":AAAA:");
    let mut stream = serialize_message(&a).unwrap();
    let b_bytes = serialize_message(&b).unwrap();
    stream.extend_from_slice(&b_bytes);
    let mut cursor = std::io::Cursor::new(stream);
    let (first, _) = read_message(&mut cursor, &Limits::default()).unwrap();
    let (second, raw) = read_message(&mut cursor, &Limits::default()).unwrap();
    assert_eq!(first, a);
    assert_eq!(second, b);
    assert_eq!(raw, b_bytes);
}

#[test]
fn header_limits_enforced() {
    let mut msg = Message::request("GET", "/");
    msg.push_header("X-Big", "a".repeat(2000));
    let bytes = serialize_message(&msg).unwrap();
    let tight = Limits {
        max_header_bytes: 512,
        ..Limits::default()
    };
    let err = read_message(&mut std::io::Cursor::new(bytes), &tight).unwrap_err();
    assert!(matches!(err, WireError::OversizeMessage { .. }), "{err:?}");
}

#[test]
fn rejects_malformed_framing() {
    for raw in [
        &b"GET / HTTP/1.1\r\nContent-Length: 5\r\nContent-Length: 6\r\n\r\nhello"[..],
        b"GET / HTTP/1.1\r\nBad Header: x\r\n\r\n",
        b"POST / HTTP/1.1\r\nTransfer-Encoding: chunked\r\n\r\nzz\r\n",
    ] {
        assert!(parse_message(raw).is_err(), "{}", String::from_utf8_lossy(raw));
    }
}

#[test]
fn classification() {
    let utr = Message::request("GET", "/");
    assert_eq!(classify_request(&utr).unwrap(), RequestClass::Utr);
    let aths = Message::request("ATTEST", "/").with_header("Attest-Cipher-Suites", "HTTPA-AES128GCM-SHA256");
    assert_eq!(classify_request(&aths).unwrap(), RequestClass::AtrAths);
    let atsp = Message::request("ATTEST", "/").with_header("Attest-Base-ID", ":AAAA:");
    assert_eq!(classify_request(&atsp).unwrap(), RequestClass::AtrAtsp);
    let trr = Message::request("POST", "/x").with_header("Attest-Base-ID", ":AAAA:");
    assert_eq!(classify_request(&trr).unwrap(), RequestClass::Trr);
    assert!(classify_request(&Message::request("ATTEST", "/")).is_err());
}

#[test]
fn transcript_lines_are_lowercase_and_ordered() {
    let a = AttestHeaderLine::new("Attest-Versions", Value::List(vec![Item::integer(2)])).unwrap();
    let b = AttestHeaderLine::new("Attest-Random", Value::Item(Item::bytes(vec![0xff; 3]))).unwrap();
    assert_eq!(
        String::from_utf8(canonical_transcript(&[a.clone(), b.clone()])).unwrap(),
        "attest-versions:2\nattest-random::____:\n"
    );
    assert_ne!(canonical_transcript(&[a.clone(), b.clone()]), canonical_transcript(&[b, a]));
}

#[test]
fn transcript_skips_plain_fields_and_keeps_garbage_verbatim() {
    let fields = [
        Field::new("Host", "x"),
        Field::new("ATTEST-VERSIONS", "2,   3"),
        Field::new("Attest-Random", "not base64"),
    ];
    assert_eq!(
        String::from_utf8(transcript_of_fields(&fields)).unwrap(),
        "attest-versions:2, 3\nattest-random:not base64\n"
    );
}

#[test]
fn structured_values() {
    let v = Value::parse("HTTPA-AES128GCM-SHA256;q=1, x25519", Shape::List).unwrap();
    let items = v.as_list().unwrap();
    assert_eq!(items[0].bare, BareItem::token("HTTPA-AES128GCM-SHA256"));
    assert_eq!(items[0].param("q"), Some(&BareItem::Integer(1)));
    assert_eq!(shape_of("Attest-Policies"), Shape::Map);
    for bad in ["\"quoted\"", "1.5", "(inner list)", ":bad=:", "a,,b"] {
        assert!(Value::parse(bad, Shape::List).is_err(), "{bad}");
    }
}

fn token() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9-]{0,10}"
}

fn bare() -> impl Strategy<Value = BareItem> {
    prop_oneof![
        (-999_999_999_999_999i64..=999_999_999_999_999).prop_map(BareItem::Integer),
        "[A-Za-z][A-Za-z0-9_./:-]{0,12}".prop_map(BareItem::Token),
        proptest::collection::vec(any::<u8>(), 0..24).prop_map(BareItem::Bytes),
    ]
}

fn item() -> impl Strategy<Value = Item> {
    (bare(), proptest::collection::vec((token(), bare()), 0..3)).prop_map(|(bare, params)| Item { bare, params })
}

fn value() -> impl Strategy<Value = (Value, Shape)> {
    prop_oneof![
        item().prop_map(|i| (Value::Item(i), Shape::Item)),
        proptest::collection::vec(item(), 1..5).prop_map(|l| (Value::List(l), Shape::List)),
        proptest::collection::vec((token(), item()), 1..5).prop_map(|m| (Value::Map(m), Shape::Map)),
    ]
}

fn field_name() -> impl Strategy<Value = String> {
    "X-[A-Za-z][A-Za-z0-9-]{0,12}"
}

fn field_value() -> impl Strategy<Value = Vec<u8>> {
    "[!-~]([ -~]{0,30}[!-~])?".prop_map(String::into_bytes)
}

fn message() -> impl Strategy<Value = Message> {
    (
        any::<bool>(),
        proptest::collection::vec((field_name(), field_value()), 0..6),
        proptest::collection::vec(any::<u8>(), 0..400),
        proptest::collection::vec((field_name(), field_value()), 0..3),
    )
        .prop_map(|(req, headers, body, trailers)| {
            let mut m = if req { Message::request("POST", "/p") } else { Message::response(201) };
            for (n, v) in headers {
                m.push_header(n, v);
            }
            m.body = body;
            for (n, v) in trailers {
                m.push_trailer(n, v);
            }
            m
        })
}

proptest! {
    #[test]
    fn message_round_trip(msg in message()) {
        let bytes = serialize_message(&msg).unwrap();
        prop_assert_eq!(parse_message(&bytes).unwrap(), msg.clone());
        let forced = serialize_with(&msg, Framing::Chunked).unwrap();
        prop_assert_eq!(parse_message(&forced).unwrap(), msg);
    }

    #[test]
    fn value_round_trip((v, shape) in value()) {
        let text = v.serialize();
        prop_assert_eq!(Value::parse(&text, shape).unwrap(), v);
    }

    #[test]
    fn parser_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..300)) {
        let _ = parse_message(&bytes);
    }

    #[test]
    fn value_parser_never_panics(text in "[ -~]{0,60}") {
        for shape in [Shape::Item, Shape::List, Shape::Map] {
            if let Ok(v) = Value::parse(&text, shape) {
                // whatever parses re-serializes to something that parses the same
                prop_assert_eq!(Value::parse(&v.serialize(), shape).unwrap(), v);
            }
        }
    }
}
