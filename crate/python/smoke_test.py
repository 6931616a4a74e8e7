"""Smoke test for the Python bindings.

Build and install first:
    pip install -e crates/python --no-build-isolation
"""

import hashlib
import hmac
import json
import pathlib
import sys

import httpa2

ROOT = pathlib.Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "crates" / "core" / "scenarios"


def oracle_hkdf_expand(prk: bytes, info: bytes, length: int) -> bytes:
    out, t, i = b"", b"", 1
    while len(out) < length:
        t = hmac.new(prk, t + info + bytes([i]), hashlib.sha256).digest()
        out += t
        i += 1
    return out[:length]


def oracle_hkdf(salt: bytes, ikm: bytes, info: bytes, length: int) -> bytes:
    return oracle_hkdf_expand(hmac.new(salt, ikm, hashlib.sha256).digest(), info, length)


def check_hkdf() -> None:
    okm = httpa2.hkdf(bytes(range(13)), b"\x0b" * 22, bytes(range(0xF0, 0xFA)), 42)
    assert okm.hex().startswith("3cb25f25faacd57a"), okm.hex()
    for n in (1, 31, 32, 33, 100):
        assert httpa2.hkdf(b"salt", b"ikm", b"info", n) == oracle_hkdf(b"salt", b"ikm", b"info", n)


def check_key_schedule() -> None:
    shared, cr, sr = bytes([7] * 32), bytes([1] * 32), bytes([2] * 32)
    th = hashlib.sha256(b"transcript").digest()
    keys = httpa2.key_schedule("HTTPA-AES128GCM-SHA256", shared, cr, sr, th)
    master = hmac.new(cr + sr, shared, hashlib.sha256).digest()
    assert keys["master_secret"] == master
    assert keys["client_write_key"] == oracle_hkdf_expand(master, b"httpa2 c key" + th, 16)
    assert keys["client_write_key"].hex() == "b064531580b613c9c728024c72eb8709"


def check_aead() -> None:
    tag = httpa2.seal("HTTPA-AES128GCM-SHA256", bytes(16), bytes(12), 0, b"")
    assert tag.hex() == "58e2fccefa7e3061367f1d57a4e7455a", tag.hex()
    key, iv = bytes(range(16)), bytes(range(12))
    sealed = httpa2.seal("HTTPA-AES128GCM-SHA256", key, iv, 3, b"payload", b"aad")
    try:
        from cryptography.hazmat.primitives.ciphers.aead import AESGCM
    except ImportError:
        pass
    else:
        nonce = iv[:4] + (int.from_bytes(iv[4:], "big") ^ 3).to_bytes(8, "big")
        assert AESGCM(key).decrypt(nonce, sealed, b"aad") == b"payload"
    assert httpa2.open("HTTPA-AES128GCM-SHA256", key, iv, 3, sealed, b"aad") == b"payload"
    try:
        httpa2.open("HTTPA-AES128GCM-SHA256", key, iv, 4, sealed, b"aad")
    except ValueError:
        pass
    else:
        raise AssertionError("wrong sequence number opened")


def check_codec() -> None:
    raw = (
        b"POST /echo HTTP/1.1\r\nHost: a\r\nAttest-Versions: 2\r\nTransfer-Encoding: chunked\r\n\r\n"
        b"5\r\nhello\r\n0\r\nAttest-Ticket: :AAAA:\r\n\r\n"
    )
    msg = httpa2.parse_message(raw)
    assert msg["method"] == "POST" and msg["body"] == b"hello"
    assert msg["trailers"] == [("Attest-Ticket", b":AAAA:")]
    assert msg["transcript"] == b"attest-versions:2\n"


def check_scenarios() -> None:
    happy = (SCENARIOS / "01-happy-path.json").read_text()
    report = json.loads(httpa2.run_scenario(happy, extra_hops=1))
    assert report["passed"], report
    passed, failed = httpa2.run_all(str(SCENARIOS))
    assert failed == 0 and passed >= 12, (passed, failed)
    try:
        httpa2.run_scenario(happy, transport="carrier-pigeon")
    except ValueError:
        pass
    else:
        raise AssertionError("bad transport accepted")


def main() -> int:
    for check in (check_hkdf, check_key_schedule, check_aead, check_codec, check_scenarios):
        check()
        print(f"ok  {check.__name__}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
