"""Minimal pcap/pcapng readers and TCP/UDP packet decoding.

Only what connection accounting needs: libpcap (classic) and pcapng enhanced
packet blocks, Ethernet/raw-IP link layers, IPv4/IPv6, TCP and UDP. Anything
else is skipped, not an error. Truncated files yield the packets parsed so
far plus a truncation flag.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from ..errors import CaptureError

PCAP_MAGICS = {
    0xA1B2C3D4: ("<", 1e-6),  # little endian may be either; resolved below
}

LINKTYPE_ETHERNET = 1
LINKTYPE_RAW = 101
LINKTYPE_NULL = 0
LINKTYPE_LOOP = 108


@dataclass(frozen=True)
class Frame:
    """One captured frame: raw link-layer bytes plus the original wire length."""

    data: bytes
    orig_len: int
    link_type: int


@dataclass(frozen=True)
class DecodedPacket:
    """IP/transport view of a frame."""

    src_ip: str
    dst_ip: str
    protocol: str  # "tcp" | "udp"
    src_port: int
    dst_port: int
    payload: bytes
    wire_len: int


@dataclass
class FrameStream:
    frames: list[Frame]
    truncated: bool
    warnings: list[str]


def read_frames(source: str | Path | bytes) -> FrameStream:
    """Read a capture file (pcap or pcapng) into frames."""
    if isinstance(source, (str, Path)):
        try:
            blob = Path(source).read_bytes()
        except OSError as exc:
            raise CaptureError(f"cannot read capture: {exc}") from exc
    else:
        blob = source
    if len(blob) < 4:
        raise CaptureError("capture too short to carry a file header")
    magic = blob[:4]
    if magic in (b"\xd4\xc3\xb2\xa1", b"\xa1\xb2\xc3\xd4", b"\x4d\x3c\xb2\xa1", b"\xa1\xb2\x3c\x4d"):
        return _read_pcap(blob)
    if magic == b"\x0a\x0d\x0d\x0a":
        return _read_pcapng(blob)
    raise CaptureError(f"not a pcap or pcapng stream (magic {magic.hex()})")


def _read_pcap(blob: bytes) -> FrameStream:
    if len(blob) < 24:
        return FrameStream([], truncated=True, warnings=["pcap header truncated"])
    magic = blob[:4]
    if magic in (b"\xd4\xc3\xb2\xa1", b"\x4d\x3c\xb2\xa1"):
        endian = "<"
    else:
        endian = ">"
    _, _, _, _, snaplen, network = struct.unpack(endian + "HHiIII", blob[4:24])
    frames: list[Frame] = []
    warnings: list[str] = []
    truncated = False
    offset = 24
    while offset < len(blob):
        if offset + 16 > len(blob):
            truncated = True
            break
        _, _, incl_len, orig_len = struct.unpack(endian + "IIII", blob[offset:offset + 16])
        offset += 16
        if offset + incl_len > len(blob):
            truncated = True
            break
        frames.append(Frame(blob[offset:offset + incl_len], orig_len or incl_len, network))
        offset += incl_len
    if truncated:
        warnings.append("capture truncated; returning frames parsed so far")
    return FrameStream(frames, truncated, warnings)


def _read_pcapng(blob: bytes) -> FrameStream:
    frames: list[Frame] = []
    warnings: list[str] = []
    truncated = False
    endian = "<"
    link_types: list[int] = []
    offset = 0
    while offset + 8 <= len(blob):
        block_type = struct.unpack(endian + "I", blob[offset:offset + 4])[0]
        if block_type == 0x0A0D0D0A:
            # Section header: byte-order magic decides endianness for the section.
            if offset + 12 > len(blob):
                truncated = True
                break
            bom = blob[offset + 8:offset + 12]
            endian = "<" if bom == b"\x4d\x3c\x2b\x1a" else ">"
            block_type = struct.unpack(endian + "I", blob[offset:offset + 4])[0]
            link_types = []
        total_len = struct.unpack(endian + "I", blob[offset + 4:offset + 8])[0]
        if total_len < 12 or offset + total_len > len(blob):
            truncated = True
            break
        body = blob[offset + 8:offset + total_len - 4]
        if block_type == 0x00000001:  # interface description
            if len(body) >= 2:
                link_types.append(struct.unpack(endian + "H", body[:2])[0])
        elif block_type == 0x00000006:  # enhanced packet
            if len(body) >= 20:
                iface, _, _, cap_len, orig_len = struct.unpack(endian + "IIIII", body[:20])
                data = body[20:20 + cap_len]
                if len(data) < cap_len:
                    truncated = True
                    break
                link = link_types[iface] if iface < len(link_types) else LINKTYPE_ETHERNET
                frames.append(Frame(bytes(data), orig_len or cap_len, link))
        elif block_type == 0x00000003:  # simple packet
            if len(body) >= 4:
                orig_len = struct.unpack(endian + "I", body[:4])[0]
                link = link_types[0] if link_types else LINKTYPE_ETHERNET
                frames.append(Frame(bytes(body[4:4 + orig_len]), orig_len, link))
        offset += total_len
    if truncated:
        warnings.append("capture truncated; returning frames parsed so far")
    return FrameStream(frames, truncated, warnings)


def decode_packets(stream: FrameStream) -> Iterator[DecodedPacket]:
    """Decode frames down to TCP/UDP; frames of other shapes are skipped."""
    for frame in stream.frames:
        decoded = _decode_frame(frame)
        if decoded is not None:
            yield decoded


def _decode_frame(frame: Frame) -> DecodedPacket | None:
    data = frame.data
    if frame.link_type == LINKTYPE_ETHERNET:
        if len(data) < 14:
            return None
        ethertype = struct.unpack("!H", data[12:14])[0]
        payload = data[14:]
        if ethertype == 0x8100 and len(payload) >= 4:  # VLAN tag
            ethertype = struct.unpack("!H", payload[2:4])[0]
            payload = payload[4:]
        if ethertype == 0x0800:
            return _decode_ipv4(payload, frame.orig_len)
        if ethertype == 0x86DD:
            return _decode_ipv6(payload, frame.orig_len)
        return None
    if frame.link_type in (LINKTYPE_RAW, LINKTYPE_NULL, LINKTYPE_LOOP):
        body = data[4:] if frame.link_type in (LINKTYPE_NULL, LINKTYPE_LOOP) else data
        if body and body[0] >> 4 == 4:
            return _decode_ipv4(body, frame.orig_len)
        if body and body[0] >> 4 == 6:
            return _decode_ipv6(body, frame.orig_len)
    return None


def _decode_ipv4(data: bytes, wire_len: int) -> DecodedPacket | None:
    if len(data) < 20 or data[0] >> 4 != 4:
        return None
    ihl = (data[0] & 0x0F) * 4
    if len(data) < ihl:
        return None
    proto = data[9]
    src = ".".join(str(b) for b in data[12:16])
    dst = ".".join(str(b) for b in data[16:20])
    return _decode_transport(data[ihl:], proto, src, dst, wire_len)


def _decode_ipv6(data: bytes, wire_len: int) -> DecodedPacket | None:
    if len(data) < 40:
        return None
    proto = data[6]
    src = _ipv6_str(data[8:24])
    dst = _ipv6_str(data[24:40])
    return _decode_transport(data[40:], proto, src, dst, wire_len)


def _ipv6_str(raw: bytes) -> str:
    groups = [f"{raw[i] << 8 | raw[i + 1]:x}" for i in range(0, 16, 2)]
    return ":".join(groups)


def _decode_transport(
    segment: bytes, proto: int, src: str, dst: str, wire_len: int
) -> DecodedPacket | None:
    if proto == 6:  # TCP
        if len(segment) < 20:
            return None
        sport, dport = struct.unpack("!HH", segment[:4])
        data_offset = (segment[12] >> 4) * 4
        if len(segment) < data_offset:
            return None
        return DecodedPacket(src, dst, "tcp", sport, dport, segment[data_offset:], wire_len)
    if proto == 17:  # UDP
        if len(segment) < 8:
            return None
        sport, dport = struct.unpack("!HH", segment[:4])
        return DecodedPacket(src, dst, "udp", sport, dport, segment[8:], wire_len)
    return None
