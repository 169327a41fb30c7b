"""
RTP / UDP / IPv4 wire handling for TranSteg.

Parses and serializes RTP packets (RFC 3550) and their IPv4/UDP envelopes
(RFC 791 / RFC 768), recomputes UDP checksums after payload rewriting and
reads/writes classic pcap captures with Ethernet II framing. Header packing
goes through dpkt; checksums are recomputed here over the exact RTP bytes.
"""

import io
import logging
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, List, Optional, Tuple, Union

import dpkt
import numpy as np

from transteg_errors import (
    BadMagic, BadPadding, BadVersion, FieldOverflow, LengthChanged, RtpError, TooShort, Truncated,
)

logger = logging.getLogger(__name__)

RTP_VERSION = 2
RTP_HEADER_LEN = 12
UDP_HEADER_LEN = 8
IPV4_HEADER_LEN = 20
ETH_HEADER_LEN = 14
IPPROTO_UDP = dpkt.ip.IP_PROTO_UDP

PCAP_GLOBAL_HEADER_LEN = 24

# Locally administered addresses used for every exported frame
CALLER_MAC = bytes.fromhex("020000000001")
CALLEE_MAC = bytes.fromhex("020000000002")


# =============================================================================
# DOMAIN TYPES
# =============================================================================

@dataclass(frozen=True)
class RtpPacket:
    version: int = RTP_VERSION
    padding_flag: bool = False
    extension_flag: bool = False
    csrc_count: int = 0
    marker: bool = False
    payload_type: int = 0
    sequence_number: int = 0
    timestamp: int = 0
    ssrc: int = 0
    csrc_list: Tuple[int, ...] = ()
    payload: bytes = b""
    # Carried verbatim: extension header (profile, length, words) and padding octets
    extension: bytes = b""
    padding: bytes = b""

    @property
    def header_len(self) -> int:
        return RTP_HEADER_LEN + 4 * self.csrc_count

    def header_bytes(self) -> bytes:
        """Fixed header, CSRC list and extension: everything TranSteg must leave untouched."""
        return serialize_rtp(self)[: self.header_len + len(self.extension)]

    def with_payload(self, payload: bytes) -> "RtpPacket":
        return replace(self, payload=bytes(payload))


@dataclass(frozen=True)
class Ipv4UdpEnvelope:
    src_addr: bytes
    dst_addr: bytes
    src_port: int
    dst_port: int
    udp_length: int
    udp_checksum: int = 0
    ip_header_checksum: int = 0
    ttl: int = 64
    protocol: int = IPPROTO_UDP
    identification: int = 0
    flags_fragment: int = 0
    tos: int = 0
    ip_options: bytes = b""

    @property
    def payload_length(self) -> int:
        return self.udp_length - UDP_HEADER_LEN

    @property
    def ip_header_len(self) -> int:
        return IPV4_HEADER_LEN + len(self.ip_options)


@dataclass(frozen=True)
class PcapRecord:
    ts_sec: int
    ts_usec: int
    captured_bytes: bytes
    orig_len: Optional[int] = None

    def __post_init__(self):
        if self.orig_len is None:
            object.__setattr__(self, "orig_len", len(self.captured_bytes))
        if len(self.captured_bytes) > self.orig_len:
            raise FieldOverflow("captured length exceeds original length")


@dataclass
class PcapCapture:
    """Decoded RTP records of one capture; ``records`` keeps every frame in file order."""
    packets: List[Tuple[PcapRecord, Ipv4UdpEnvelope, RtpPacket]] = field(default_factory=list)
    records: List[PcapRecord] = field(default_factory=list)
    skipped: int = 0
    byte_order: str = ">"
    snaplen: int = 65535

    def __iter__(self) -> Iterator[Tuple[PcapRecord, Ipv4UdpEnvelope, RtpPacket]]:
        return iter(self.packets)

    def __len__(self) -> int:
        return len(self.packets)


# =============================================================================
# RTP
# =============================================================================

def parse_rtp(data: bytes) -> RtpPacket:
    """Decode one RTP packet per the RFC 3550 layout."""
    data = bytes(data)
    if len(data) < RTP_HEADER_LEN:
        raise TooShort(f"RTP packet of {len(data)} bytes is shorter than the 12-byte header")

    header = dpkt.rtp.RTP(data)
    if header.version != RTP_VERSION:
        raise BadVersion(f"RTP version {header.version}, expected 2")

    csrc_count = header.cc
    offset = RTP_HEADER_LEN + 4 * csrc_count
    if len(data) < offset:
        raise TooShort(f"RTP packet of {len(data)} bytes cannot hold {csrc_count} CSRCs")
    csrc_list = struct.unpack(f"!{csrc_count}I", data[RTP_HEADER_LEN:offset])

    extension = b""
    if header.x:
        if len(data) < offset + 4:
            raise TooShort("RTP header extension truncated")
        words = struct.unpack("!H", data[offset + 2: offset + 4])[0]
        ext_end = offset + 4 + 4 * words
        if len(data) < ext_end:
            raise TooShort("RTP header extension truncated")
        extension = data[offset:ext_end]
        offset = ext_end

    body = data[offset:]
    padding = b""
    if header.p:
        pad_len = body[-1] if body else 0
        if pad_len == 0 or pad_len > len(body):
            raise BadPadding(f"padding length {pad_len} exceeds the {len(body)} payload bytes")
        padding = body[-pad_len:]
        body = body[:-pad_len]

    return RtpPacket(
        version=header.version,
        padding_flag=bool(header.p),
        extension_flag=bool(header.x),
        csrc_count=csrc_count,
        marker=bool(header.m),
        payload_type=header.pt,
        sequence_number=header.seq,
        timestamp=header.ts,
        ssrc=header.ssrc,
        csrc_list=tuple(csrc_list),
        payload=body,
        extension=extension,
        padding=padding,
    )


def _check_range(name: str, value: int, upper: int) -> None:
    if not 0 <= value <= upper:
        raise FieldOverflow(f"{name}={value} outside 0..{upper}")


def serialize_rtp(pkt: RtpPacket) -> bytes:
    """Exact inverse of parse_rtp."""
    if pkt.version != RTP_VERSION:
        raise FieldOverflow(f"version={pkt.version}, only RTP version 2 can be serialized")
    _check_range("csrc_count", pkt.csrc_count, 15)
    _check_range("payload_type", pkt.payload_type, 127)
    _check_range("sequence_number", pkt.sequence_number, 0xFFFF)
    _check_range("timestamp", pkt.timestamp, 0xFFFFFFFF)
    _check_range("ssrc", pkt.ssrc, 0xFFFFFFFF)
    if len(pkt.csrc_list) != pkt.csrc_count:
        raise FieldOverflow(f"csrc_count={pkt.csrc_count} but {len(pkt.csrc_list)} CSRCs given")
    for csrc in pkt.csrc_list:
        _check_range("csrc", csrc, 0xFFFFFFFF)
    if pkt.extension_flag != bool(pkt.extension):
        raise FieldOverflow("extension flag does not match extension bytes")
    if pkt.padding_flag != bool(pkt.padding):
        raise FieldOverflow("padding flag does not match padding bytes")

    header = dpkt.rtp.RTP(seq=pkt.sequence_number, ts=pkt.timestamp, ssrc=pkt.ssrc)
    header.version = pkt.version
    header.p = int(pkt.padding_flag)
    header.x = int(pkt.extension_flag)
    header.cc = pkt.csrc_count
    header.m = int(pkt.marker)
    header.pt = pkt.payload_type
    csrcs = struct.pack(f"!{pkt.csrc_count}I", *pkt.csrc_list)
    return header.pack_hdr() + csrcs + pkt.extension + bytes(pkt.payload) + pkt.padding


# =============================================================================
# CHECKSUMS
# =============================================================================

def ones_complement_sum(data: bytes) -> int:
    """16-bit one's-complement sum (end-around carry folded), not complemented."""
    if len(data) % 2:
        data = bytes(data) + b"\x00"
    total = int(np.frombuffer(data, dtype=">u2").sum(dtype=np.uint64))
    while total > 0xFFFF:
        total = (total & 0xFFFF) + (total >> 16)
    return total


def ones_complement_checksum(data: bytes) -> int:
    return ~ones_complement_sum(data) & 0xFFFF


def _pseudo_header(env: Ipv4UdpEnvelope, udp_length: int) -> bytes:
    return env.src_addr + env.dst_addr + struct.pack("!BBH", 0, env.protocol, udp_length)


def _udp_header(env: Ipv4UdpEnvelope, checksum: int, udp_length: Optional[int] = None) -> bytes:
    _check_range("src_port", env.src_port, 0xFFFF)
    _check_range("dst_port", env.dst_port, 0xFFFF)
    length = env.udp_length if udp_length is None else udp_length
    _check_range("udp_length", length, 0xFFFF)
    udp = dpkt.udp.UDP(sport=env.src_port, dport=env.dst_port, ulen=length, sum=checksum)
    return udp.pack_hdr()


def udp_checksum(env: Ipv4UdpEnvelope, payload: bytes) -> int:
    """RFC 768 checksum over pseudo-header, UDP header (checksum zeroed) and payload."""
    udp_length = UDP_HEADER_LEN + len(payload)
    header = _udp_header(env, 0, udp_length)
    value = ones_complement_checksum(_pseudo_header(env, udp_length) + header + bytes(payload))
    # An all-zero result is sent as all ones; zero means "no checksum"
    return value or 0xFFFF


def verify_udp(env: Ipv4UdpEnvelope, payload: bytes) -> int:
    """One's-complement sum over the whole datagram including the checksum field (0xFFFF when valid)."""
    return ones_complement_sum(_pseudo_header(env, env.udp_length) + _udp_header(env, env.udp_checksum) + bytes(payload))


def ipv4_header_checksum(env: Ipv4UdpEnvelope) -> int:
    return ones_complement_checksum(_ipv4_header(env, checksum=0))


def adjust_checksums(env: Ipv4UdpEnvelope, new_payload: bytes) -> Ipv4UdpEnvelope:
    """Recompute the UDP checksum for a same-length payload; the IP header is left as it is."""
    if UDP_HEADER_LEN + len(new_payload) != env.udp_length:
        raise LengthChanged(
            f"payload of {len(new_payload)} bytes does not match UDP length {env.udp_length}"
        )
    if env.udp_checksum == 0:
        return env
    return replace(env, udp_checksum=udp_checksum(env, new_payload))


def make_envelope(
    src_addr: bytes,
    dst_addr: bytes,
    src_port: int,
    dst_port: int,
    payload: bytes,
    identification: int = 0,
    ttl: int = 64,
    with_checksum: bool = True,
) -> Ipv4UdpEnvelope:
    """Fresh envelope with valid IP header and UDP checksums for ``payload``."""
    env = Ipv4UdpEnvelope(
        src_addr=bytes(src_addr),
        dst_addr=bytes(dst_addr),
        src_port=src_port,
        dst_port=dst_port,
        udp_length=UDP_HEADER_LEN + len(payload),
        identification=identification & 0xFFFF,
        ttl=ttl,
        flags_fragment=0x4000,  # DF
    )
    env = replace(env, ip_header_checksum=ipv4_header_checksum(env))
    if with_checksum:
        env = replace(env, udp_checksum=udp_checksum(env, payload))
    return env


# =============================================================================
# IPv4 / UDP / ETHERNET FRAMING
# =============================================================================

def _ipv4_header(env: Ipv4UdpEnvelope, checksum: int) -> bytes:
    if len(env.ip_options) % 4:
        raise FieldOverflow("IPv4 options must be a multiple of 4 bytes")
    total_length = env.ip_header_len + env.udp_length
    _check_range("total_length", total_length, 0xFFFF)
    _check_range("flags_fragment", env.flags_fragment, 0xFFFF)

    ip = dpkt.ip.IP(
        tos=env.tos, len=total_length, id=env.identification, ttl=env.ttl,
        p=env.protocol, sum=checksum, src=env.src_addr, dst=env.dst_addr,
    )
    ip.hl = env.ip_header_len // 4
    ip.rf = (env.flags_fragment >> 15) & 1
    ip.df = (env.flags_fragment >> 14) & 1
    ip.mf = (env.flags_fragment >> 13) & 1
    ip.offset = env.flags_fragment & 0x1FFF
    # pack_hdr writes the checksum as given; bytes(ip) would fill in a zero one
    try:
        return ip.pack_hdr() + env.ip_options
    except dpkt.PackError as exc:
        raise FieldOverflow(f"IPv4 header field out of range: {exc}") from exc


def build_ipv4_udp(env: Ipv4UdpEnvelope, payload: bytes) -> bytes:
    if UDP_HEADER_LEN + len(payload) != env.udp_length:
        raise LengthChanged("UDP length does not match payload")
    return _ipv4_header(env, env.ip_header_checksum) + _udp_header(env, env.udp_checksum) + bytes(payload)


def parse_ipv4_udp(data: bytes) -> Tuple[Ipv4UdpEnvelope, bytes]:
    """Split an IPv4 datagram carrying UDP into envelope and UDP payload."""
    data = bytes(data)
    try:
        ip = dpkt.ip.IP(data)
    except dpkt.UnpackError as exc:
        raise TooShort(f"IPv4 header truncated: {exc}") from exc
    if ip.v != 4:
        raise RtpError("not IPv4")

    ihl = ip.hl * 4
    if len(data) < ihl + UDP_HEADER_LEN or ip.len > len(data):
        raise TooShort("IPv4 datagram truncated")
    if ip.p != IPPROTO_UDP:
        raise RtpError(f"IP protocol {ip.p} is not UDP")
    if ip.mf or ip.offset:
        raise RtpError("fragmented datagram")

    udp = ip.data
    if not isinstance(udp, dpkt.udp.UDP):
        raise TooShort("UDP header truncated")
    if udp.ulen < UDP_HEADER_LEN or ihl + udp.ulen > ip.len:
        raise TooShort("UDP datagram truncated")

    env = Ipv4UdpEnvelope(
        src_addr=bytes(ip.src), dst_addr=bytes(ip.dst), src_port=udp.sport, dst_port=udp.dport,
        udp_length=udp.ulen, udp_checksum=udp.sum, ip_header_checksum=ip.sum,
        ttl=ip.ttl, protocol=ip.p, identification=ip.id,
        flags_fragment=(ip.rf << 15) | (ip.df << 14) | (ip.mf << 13) | ip.offset,
        tos=ip.tos, ip_options=bytes(ip.opts),
    )
    # Payload sliced from the wire bytes, not re-serialized
    return env, data[ihl + UDP_HEADER_LEN: ihl + udp.ulen]


def frame_rtp(env: Ipv4UdpEnvelope, pkt: RtpPacket) -> bytes:
    """Ethernet II frame (fixed MACs) around one RTP-over-UDP datagram."""
    eth = dpkt.ethernet.Ethernet(dst=CALLEE_MAC, src=CALLER_MAC, type=dpkt.ethernet.ETH_TYPE_IP)
    return eth.pack_hdr() + build_ipv4_udp(env, serialize_rtp(pkt))


def decode_frame(frame: bytes) -> Tuple[Ipv4UdpEnvelope, RtpPacket]:
    """Ethernet II -> IPv4 -> UDP -> RTP; raises RtpError on anything else."""
    try:
        eth = dpkt.ethernet.Ethernet(bytes(frame))
    except dpkt.UnpackError as exc:
        raise TooShort(f"Ethernet header truncated: {exc}") from exc
    if eth.type != dpkt.ethernet.ETH_TYPE_IP or getattr(eth, "vlan_tags", None):
        raise RtpError(f"ethertype 0x{eth.type:04x} is not untagged IPv4")
    env, udp_payload = parse_ipv4_udp(frame[ETH_HEADER_LEN:])
    return env, parse_rtp(udp_payload)


def rewrite_record(record: PcapRecord, env: Ipv4UdpEnvelope, pkt: RtpPacket) -> PcapRecord:
    """Same frame with the RTP packet (and UDP checksum) swapped; link header and trailer kept."""
    frame = record.captured_bytes
    start = ETH_HEADER_LEN
    end = start + env.ip_header_len + env.udp_length
    datagram = build_ipv4_udp(env, serialize_rtp(pkt))
    if len(datagram) != end - start:
        raise LengthChanged("rewritten datagram changes the frame length")
    return replace(record, captured_bytes=frame[:start] + datagram + frame[end:])


# =============================================================================
# PCAP
# =============================================================================

def _read_all(source: Union[str, Path, bytes, BinaryIO]) -> bytes:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source)
    if isinstance(source, (str, Path)):
        return Path(source).read_bytes()
    return source.read()


def _file_header(data: bytes):
    """Global header and the matching record header class, chosen by the magic's byte order."""
    header = dpkt.pcap.FileHdr(data[:PCAP_GLOBAL_HEADER_LEN])
    if header.magic == dpkt.pcap.TCPDUMP_MAGIC:
        return header, dpkt.pcap.PktHdr, ">"
    if header.magic == dpkt.pcap.PMUDPCT_MAGIC:
        return dpkt.pcap.LEFileHdr(data[:PCAP_GLOBAL_HEADER_LEN]), dpkt.pcap.LEPktHdr, "<"
    raise BadMagic(f"unknown pcap magic 0x{header.magic:08x}")


def read_pcap(source: Union[str, Path, bytes, BinaryIO]) -> PcapCapture:
    """Read a classic pcap capture, decoding the Ethernet/IPv4/UDP/RTP records."""
    data = _read_all(source)
    if len(data) < PCAP_GLOBAL_HEADER_LEN:
        raise BadMagic("file too short for a pcap global header")

    file_header, record_header, order = _file_header(data)
    if file_header.linktype != dpkt.pcap.DLT_EN10MB:
        raise BadMagic(f"link type {file_header.linktype} is not Ethernet")

    capture = PcapCapture(byte_order=order, snaplen=file_header.snaplen)
    header_len = record_header.__hdr_len__
    offset = PCAP_GLOBAL_HEADER_LEN
    while offset < len(data):
        if offset + header_len > len(data):
            raise Truncated(f"record header at offset {offset} truncated")
        header = record_header(data[offset: offset + header_len])
        if header.caplen > header.len:
            raise Truncated(
                f"record at offset {offset} captures {header.caplen} bytes of a {header.len}-byte frame"
            )
        offset += header_len
        if offset + header.caplen > len(data):
            raise Truncated(f"record data at offset {offset} truncated")
        frame = data[offset: offset + header.caplen]
        offset += header.caplen

        record = PcapRecord(header.tv_sec, header.tv_usec, frame, header.len)
        capture.records.append(record)
        try:
            env, pkt = decode_frame(frame)
        except RtpError as exc:
            capture.skipped += 1
            logger.debug("skipping pcap record: %s", exc)
            continue
        capture.packets.append((record, env, pkt))

    return capture


def write_pcap(target: Union[str, Path, BinaryIO], records: Iterable[PcapRecord], snaplen: int = 65535) -> int:
    """Write records as a little-endian classic pcap; returns the number of bytes written."""
    buffer = io.BytesIO()
    buffer.write(bytes(dpkt.pcap.LEFileHdr(snaplen=snaplen, linktype=dpkt.pcap.DLT_EN10MB)))
    for record in records:
        header = dpkt.pcap.LEPktHdr(
            tv_sec=record.ts_sec, tv_usec=record.ts_usec,
            caplen=len(record.captured_bytes), len=record.orig_len,
        )
        buffer.write(bytes(header))
        buffer.write(record.captured_bytes)

    blob = buffer.getvalue()
    if isinstance(target, (str, Path)):
        Path(target).write_bytes(blob)
    else:
        target.write(blob)
    return len(blob)
