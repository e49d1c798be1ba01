"""Hand-rolled packet construction for capture fixtures.

Built independently of the parser under test: every header is laid out field
by field here, so a fixture decoded by the package is checked against this
explicit construction.
"""

from __future__ import annotations

import struct

ETHERTYPE_IPV4 = 0x0800


def ethernet(payload: bytes, src_mac: bytes = b"\x02\x00\x00\x00\x00\x01",
             dst_mac: bytes = b"\x02\x00\x00\x00\x00\x02",
             ethertype: int = ETHERTYPE_IPV4) -> bytes:
    return dst_mac + src_mac + struct.pack("!H", ethertype) + payload


def ipv4(src: str, dst: str, payload: bytes, proto: int = 6) -> bytes:
    version_ihl = (4 << 4) | 5
    total_len = 20 + len(payload)
    header = struct.pack(
        "!BBHHHBBH4s4s",
        version_ihl, 0, total_len, 0x1234, 0, 64, proto, 0,
        bytes(int(octet) for octet in src.split(".")),
        bytes(int(octet) for octet in dst.split(".")),
    )
    return header + payload


def tcp(sport: int, dport: int, payload: bytes = b"", seq: int = 1) -> bytes:
    offset_flags = (5 << 12) | 0x018  # PSH|ACK
    header = struct.pack("!HHIIHHHH", sport, dport, seq, 0, offset_flags, 8192, 0, 0)
    return header + payload


def udp(sport: int, dport: int, payload: bytes = b"") -> bytes:
    return struct.pack("!HHHH", sport, dport, 8 + len(payload), 0) + payload


def tls_record(content_type: int, body: bytes, version: tuple[int, int] = (3, 3)) -> bytes:
    return struct.pack("!BBBH", content_type, version[0], version[1], len(body)) + body


def handshake(msg_type: int, body: bytes) -> bytes:
    return bytes([msg_type]) + len(body).to_bytes(3, "big") + body


def client_hello() -> bytes:
    body = (
        b"\x03\x03"            # legacy version TLS 1.2
        + b"\x11" * 32          # random
        + b"\x00"               # empty session id
        + b"\x00\x04" + b"\x13\x01\xc0\x2f"  # two offered suites
        + b"\x01\x00"           # null compression
        + b"\x00\x00"           # no extensions
    )
    return tls_record(22, handshake(1, body))


def server_hello(cipher_suite: int, session_id: bytes = b"") -> bytes:
    body = (
        b"\x03\x03"
        + b"\x22" * 32
        + bytes([len(session_id)]) + session_id
        + struct.pack("!H", cipher_suite)
        + b"\x00"               # null compression
        + b"\x00\x00"
    )
    return tls_record(22, handshake(2, body))


def tcp_packet(src_ip: str, dst_ip: str, sport: int, dport: int, payload: bytes) -> bytes:
    return ethernet(ipv4(src_ip, dst_ip, tcp(sport, dport, payload)))


def udp_packet(src_ip: str, dst_ip: str, sport: int, dport: int, payload: bytes) -> bytes:
    return ethernet(ipv4(src_ip, dst_ip, udp(sport, dport, payload), proto=17))


def pcap_bytes(frames: list[bytes]) -> bytes:
    header = struct.pack("<IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, 1)
    chunks = [header]
    for index, frame in enumerate(frames):
        chunks.append(struct.pack("<IIII", index, 0, len(frame), len(frame)))
        chunks.append(frame)
    return b"".join(chunks)


def _png_block(block_type: int, body: bytes) -> bytes:
    total = 12 + len(body)
    pad = (-len(body)) % 4
    total += pad
    return (
        struct.pack("<II", block_type, total)
        + body + b"\x00" * pad
        + struct.pack("<I", total)
    )


def pcapng_bytes(frames: list[bytes]) -> bytes:
    shb_body = struct.pack("<IHHq", 0x1A2B3C4D, 1, 0, -1)
    idb_body = struct.pack("<HHI", 1, 0, 65535)  # ethernet
    chunks = [_png_block(0x0A0D0D0A, shb_body), _png_block(0x00000001, idb_body)]
    for index, frame in enumerate(frames):
        body = struct.pack("<IIIII", 0, 0, index, len(frame), len(frame)) + frame
        chunks.append(_png_block(0x00000006, body))
    return b"".join(chunks)
