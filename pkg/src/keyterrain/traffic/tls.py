"""TLS handshake detection and cipher-suite security policy.

Detection is signature based, not port based: any TCP payload that begins
with a well-formed handshake record counts, wherever it was seen. The
negotiated cipher suite is lifted from the server-hello.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

from ..errors import ConfigError

RECORD_HANDSHAKE = 22
HELLO_CLIENT = 1
HELLO_SERVER = 2

# IANA registry subset covering the suites commonly negotiated in practice,
# plus the legacy/broken families the default policy must recognize.
CIPHER_SUITES: dict[int, str] = {
    0x0000: "TLS_NULL_WITH_NULL_NULL",
    0x0001: "TLS_RSA_WITH_NULL_MD5",
    0x0002: "TLS_RSA_WITH_NULL_SHA",
    0x003B: "TLS_RSA_WITH_NULL_SHA256",
    0x0003: "TLS_RSA_EXPORT_WITH_RC4_40_MD5",
    0x0004: "TLS_RSA_WITH_RC4_128_MD5",
    0x0005: "TLS_RSA_WITH_RC4_128_SHA",
    0x0006: "TLS_RSA_EXPORT_WITH_RC2_CBC_40_MD5",
    0x0008: "TLS_RSA_EXPORT_WITH_DES40_CBC_SHA",
    0x0009: "TLS_RSA_WITH_DES_CBC_SHA",
    0x000A: "TLS_RSA_WITH_3DES_EDE_CBC_SHA",
    0x0016: "TLS_DHE_RSA_WITH_3DES_EDE_CBC_SHA",
    0x002F: "TLS_RSA_WITH_AES_128_CBC_SHA",
    0x0033: "TLS_DHE_RSA_WITH_AES_128_CBC_SHA",
    0x0035: "TLS_RSA_WITH_AES_256_CBC_SHA",
    0x0039: "TLS_DHE_RSA_WITH_AES_256_CBC_SHA",
    0x003C: "TLS_RSA_WITH_AES_128_CBC_SHA256",
    0x003D: "TLS_RSA_WITH_AES_256_CBC_SHA256",
    0x0067: "TLS_DHE_RSA_WITH_AES_128_CBC_SHA256",
    0x006B: "TLS_DHE_RSA_WITH_AES_256_CBC_SHA256",
    0x009C: "TLS_RSA_WITH_AES_128_GCM_SHA256",
    0x009D: "TLS_RSA_WITH_AES_256_GCM_SHA384",
    0x009E: "TLS_DHE_RSA_WITH_AES_128_GCM_SHA256",
    0x009F: "TLS_DHE_RSA_WITH_AES_256_GCM_SHA384",
    0xC008: "TLS_ECDHE_ECDSA_WITH_3DES_EDE_CBC_SHA",
    0xC009: "TLS_ECDHE_ECDSA_WITH_AES_128_CBC_SHA",
    0xC00A: "TLS_ECDHE_ECDSA_WITH_AES_256_CBC_SHA",
    0xC011: "TLS_ECDHE_RSA_WITH_RC4_128_SHA",
    0xC012: "TLS_ECDHE_RSA_WITH_3DES_EDE_CBC_SHA",
    0xC013: "TLS_ECDHE_RSA_WITH_AES_128_CBC_SHA",
    0xC014: "TLS_ECDHE_RSA_WITH_AES_256_CBC_SHA",
    0xC023: "TLS_ECDHE_ECDSA_WITH_AES_128_CBC_SHA256",
    0xC024: "TLS_ECDHE_ECDSA_WITH_AES_256_CBC_SHA384",
    0xC027: "TLS_ECDHE_RSA_WITH_AES_128_CBC_SHA256",
    0xC028: "TLS_ECDHE_RSA_WITH_AES_256_CBC_SHA384",
    0xC02B: "TLS_ECDHE_ECDSA_WITH_AES_128_GCM_SHA256",
    0xC02C: "TLS_ECDHE_ECDSA_WITH_AES_256_GCM_SHA384",
    0xC02F: "TLS_ECDHE_RSA_WITH_AES_128_GCM_SHA256",
    0xC030: "TLS_ECDHE_RSA_WITH_AES_256_GCM_SHA384",
    0xC09C: "TLS_RSA_WITH_AES_128_CCM",
    0xC09D: "TLS_RSA_WITH_AES_256_CCM",
    0xC0AC: "TLS_ECDHE_ECDSA_WITH_AES_128_CCM",
    0xC0AD: "TLS_ECDHE_ECDSA_WITH_AES_256_CCM",
    0xCCA8: "TLS_ECDHE_RSA_WITH_CHACHA20_POLY1305_SHA256",
    0xCCA9: "TLS_ECDHE_ECDSA_WITH_CHACHA20_POLY1305_SHA256",
    0xCCAA: "TLS_DHE_RSA_WITH_CHACHA20_POLY1305_SHA256",
    0x1301: "TLS_AES_128_GCM_SHA256",
    0x1302: "TLS_AES_256_GCM_SHA384",
    0x1303: "TLS_CHACHA20_POLY1305_SHA256",
    0x1304: "TLS_AES_128_CCM_SHA256",
    0x1305: "TLS_AES_128_CCM_8_SHA256",
}

_SUITE_CODES = {name: code for code, name in CIPHER_SUITES.items()}


def suite_name(code: int) -> str:
    return CIPHER_SUITES.get(code, f"0x{code:04X}")


def _is_aead(name: str) -> bool:
    return "_GCM" in name or "_CCM" in name or "CHACHA20_POLY1305" in name


def _is_cbc_hmac(name: str) -> bool:
    return "_CBC_" in name and "NULL" not in name and "EXPORT" not in name


@dataclass(frozen=True)
class CipherSuitePolicy:
    """Which cipher suites count as confidentiality- and integrity-secured."""

    confidentiality_secured: frozenset[str]
    integrity_secured: frozenset[str]

    def secures_confidentiality(self, suite: str | None) -> bool:
        return suite is not None and suite in self.confidentiality_secured

    def secures_integrity(self, suite: str | None) -> bool:
        return suite is not None and suite in self.integrity_secured


def default_policy() -> CipherSuitePolicy:
    """AEAD families secure both dimensions; CBC-with-HMAC only integrity.

    NULL-cipher, export-grade and the remaining legacy suites secure neither.
    """
    conf = frozenset(n for n in CIPHER_SUITES.values() if _is_aead(n))
    integ = frozenset(
        n for n in CIPHER_SUITES.values() if _is_aead(n) or _is_cbc_hmac(n)
    )
    return CipherSuitePolicy(conf, integ)


DEFAULT_POLICY = default_policy()


def load_policy(path: str | Path) -> CipherSuitePolicy:
    """Load a user policy file: two lists of suite identifiers."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        conf = frozenset(str(s) for s in doc["confidentiality_secured"])
        integ = frozenset(str(s) for s in doc["integrity_secured"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad cipher-suite policy file: {exc}") from exc
    return CipherSuitePolicy(conf, integ)


@dataclass
class TlsObservation:
    client_hello: bool = False
    server_hello: bool = False
    cipher_suite: int | None = None

    @property
    def observed(self) -> bool:
        return self.client_hello or self.server_hello


def scan_payload(payload: bytes) -> TlsObservation | None:
    """Look for TLS handshake records at the start of a TCP payload.

    Returns an observation when a client- or server-hello is found; the
    negotiated suite comes from the server-hello body.
    """
    if len(payload) < 5:
        return None
    observation = TlsObservation()
    offset = 0
    while offset + 5 <= len(payload):
        content_type = payload[offset]
        major, minor = payload[offset + 1], payload[offset + 2]
        length = struct.unpack("!H", payload[offset + 3:offset + 5])[0]
        if content_type not in (20, 21, 22, 23) or major != 3 or minor > 4:
            break
        body = payload[offset + 5:offset + 5 + length]
        if content_type == RECORD_HANDSHAKE:
            _scan_handshakes(body, observation)
        offset += 5 + length
        if len(body) < length:  # record continues beyond this segment
            break
    return observation if observation.observed else None


def _scan_handshakes(body: bytes, observation: TlsObservation) -> None:
    offset = 0
    while offset + 4 <= len(body):
        msg_type = body[offset]
        msg_len = int.from_bytes(body[offset + 1:offset + 4], "big")
        msg = body[offset + 4:offset + 4 + msg_len]
        if msg_type == HELLO_CLIENT:
            observation.client_hello = True
        elif msg_type == HELLO_SERVER:
            observation.server_hello = True
            suite = _server_hello_suite(msg)
            if suite is not None:
                observation.cipher_suite = suite
        offset += 4 + msg_len


def _server_hello_suite(msg: bytes) -> int | None:
    # legacy_version(2) random(32) session_id_len(1) session_id cipher(2)
    if len(msg) < 35:
        return None
    sid_len = msg[34]
    pos = 35 + sid_len
    if len(msg) < pos + 2:
        return None
    return struct.unpack("!H", msg[pos:pos + 2])[0]
