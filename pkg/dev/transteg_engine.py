"""
TranSteg transforms.

SS side: overt frame -> covert frame, freed payload space filled with
steganogram bytes. SR side: steganogram extracted, covert frame decoded and
(optionally) re-encoded with the overt codec. RTP headers, CSRCs and payload
lengths never change.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple, TypedDict, Union

import numpy as np

from transteg_codecs import (
    Codec, CodecDescriptor, CodecId, EncodedFrame, alaw_decode_bytes, create_codec,
    lossless_decode, lossless_encode, lossless_shift, lookup,
)
from transteg_errors import (
    CorruptCovertFrame, CorruptFrame, EngineError, Infeasible, Overflow, PtMismatch, WrongPayloadLength,
)
from transteg_planner import feasible
from transteg_rtp import RtpPacket

logger = logging.getLogger(__name__)

CodecRef = Union[str, CodecId, CodecDescriptor]
Pair = Tuple[CodecRef, CodecRef]


class StreamRole(str, Enum):
    SS = "SS"
    SR = "SR"


# =============================================================================
# PAYLOAD LAYOUT
# =============================================================================

@dataclass(frozen=True)
class PayloadLayout:
    """[signaling byte?][covert frame][steganogram][reserved partial byte?]"""
    total_len: int
    signaling: bool
    covert_len: int
    steg_offset: int
    steg_capacity: int
    reserved_len: int = 0

    def __post_init__(self):
        if int(self.signaling) + self.covert_len + self.steg_capacity + self.reserved_len != self.total_len:
            raise EngineError(f"inconsistent payload layout {self}")


def _resolve_pair(pair: Pair) -> Tuple[CodecDescriptor, CodecDescriptor]:
    overt, covert = pair
    return lookup(overt), lookup(covert)


def layout_for(overt: CodecRef, covert: CodecRef, covert_frame_len: Optional[int] = None) -> PayloadLayout:
    """Byte layout of one packet; variable-rate covert codecs need the frame's byte length."""
    overt, covert = lookup(overt), lookup(covert)
    if not feasible(overt, covert):
        raise Infeasible(f"{covert.display_name} cannot be carried inside {overt.display_name}")

    total = overt.payload_bytes
    usable = overt.usable_bytes
    if covert.variable_rate:
        if covert_frame_len is None:
            raise EngineError(f"{covert.display_name} capacity depends on the encoded frame")
        covert_len = covert_frame_len
    else:
        covert_len = covert.payload_bytes
    signaling = covert.variable_rate
    capacity = usable - covert_len - int(signaling)
    if capacity < 0:
        raise Overflow(f"covert frame of {covert_len} bytes exceeds the {usable - int(signaling)} usable bytes")
    return PayloadLayout(
        total_len=total,
        signaling=signaling,
        covert_len=covert_len,
        steg_offset=int(signaling) + covert_len,
        steg_capacity=capacity,
        reserved_len=total - usable,
    )


def per_packet_capacity(pair: Pair, covert_frame: Optional[EncodedFrame] = None) -> int:
    overt, covert = _resolve_pair(pair)
    frame_len = covert_frame.byte_length if covert_frame is not None else None
    return layout_for(overt, covert, frame_len).steg_capacity


class TailPlacement:
    """Steganogram written right after the covert frame."""

    name = "tail"

    def pack(self, prefix: bytes, steg: bytes, layout: PayloadLayout) -> bytes:
        return prefix + steg + bytes(layout.reserved_len)

    def unpack(self, payload: bytes, layout: PayloadLayout) -> Tuple[bytes, bytes]:
        start = layout.steg_offset
        return payload[:start], payload[start: start + layout.steg_capacity]


PLACEMENTS: Dict[str, TailPlacement] = {"tail": TailPlacement()}


def _placement(name: str) -> TailPlacement:
    try:
        return PLACEMENTS[name]
    except KeyError:
        raise EngineError(f"unknown steganogram placement '{name}'") from None


def pack_layout(
    covert: EncodedFrame,
    steg_bytes: bytes,
    total_len: int,
    signaling: bool = False,
    reserved_len: int = 0,
    placement: str = "tail",
) -> bytes:
    """Assemble a payload; steganogram shorter than the free space is zero-filled."""
    covert_bytes = covert.to_bytes()
    capacity = total_len - reserved_len - int(signaling) - len(covert_bytes)
    if capacity < 0:
        raise Overflow(f"covert frame of {len(covert_bytes)} bytes does not fit into {total_len} bytes")
    if len(steg_bytes) > capacity:
        raise Overflow(f"{len(steg_bytes)} steganogram bytes exceed the {capacity}-byte free space")
    if signaling and len(covert_bytes) > 0xFF:
        raise Overflow("covert frame length does not fit the signaling byte")

    layout = PayloadLayout(
        total_len=total_len,
        signaling=signaling,
        covert_len=len(covert_bytes),
        steg_offset=int(signaling) + len(covert_bytes),
        steg_capacity=capacity,
        reserved_len=reserved_len,
    )
    prefix = (bytes([len(covert_bytes)]) if signaling else b"") + covert_bytes
    steg = bytes(steg_bytes) + bytes(capacity - len(steg_bytes))
    return _placement(placement).pack(prefix, steg, layout)


def unpack_layout(payload: bytes, pair: Pair, placement: str = "tail") -> Tuple[EncodedFrame, bytes]:
    overt, covert = _resolve_pair(pair)
    payload = bytes(payload)
    if len(payload) != overt.payload_bytes:
        raise WrongPayloadLength(f"{overt.display_name} payload must be {overt.payload_bytes} bytes, got {len(payload)}")

    if covert.variable_rate:
        covert_len = payload[0]
        if covert_len == 0 or covert_len > overt.usable_bytes - 1:
            raise CorruptCovertFrame(f"signaling byte {covert_len} is not a valid covert frame length")
    else:
        covert_len = None
    layout = layout_for(overt, covert, covert_len)
    prefix, steg = _placement(placement).unpack(payload, layout)

    if covert.variable_rate:
        frame = EncodedFrame.from_bytes(covert.id, prefix[1:])
    else:
        frame = EncodedFrame.from_bytes(covert.id, prefix, covert.bits_per_frame)
    return frame, steg


# =============================================================================
# STREAM STATE
# =============================================================================

class StegBitstream:
    """Byte FIFO of steganogram data; underruns are zero-filled and counted."""

    def __init__(self, data: bytes = b""):
        self._buffer = bytearray(data)
        self.underrun_bytes = 0

    def __len__(self) -> int:
        return len(self._buffer)

    def push(self, data: bytes) -> None:
        self._buffer.extend(data)

    def pull(self, count: int) -> Tuple[bytes, int]:
        """``count`` bytes for the wire and how many of them were real steganogram."""
        real = bytes(self._buffer[:count])
        del self._buffer[:count]
        missing = count - len(real)
        self.underrun_bytes += missing
        return real + bytes(missing), len(real)

    def getvalue(self) -> bytes:
        return bytes(self._buffer)


class StreamCounters(TypedDict):
    packets: int
    steg_bits_moved: int
    requantized_frames: int
    covert_bytes: int


class StreamState(TypedDict):
    role: StreamRole
    overt: CodecDescriptor
    covert: CodecDescriptor
    overt_codec: Codec
    covert_codec: Codec
    placement: str
    bitstream: StegBitstream
    counters: StreamCounters


def create_stream_state(role: Union[str, StreamRole], overt: CodecRef, covert: CodecRef, placement: str = "tail") -> StreamState:
    overt, covert = lookup(overt), lookup(covert)
    if not feasible(overt, covert):
        raise Infeasible(f"{covert.display_name} cannot be carried inside {overt.display_name}")
    _placement(placement)
    return StreamState(
        role=StreamRole(role),
        overt=overt,
        covert=covert,
        overt_codec=create_codec(overt),
        covert_codec=create_codec(covert),
        placement=placement,
        bitstream=StegBitstream(),
        counters=StreamCounters(packets=0, steg_bits_moved=0, requantized_frames=0, covert_bytes=0),
    )


def _check_packet(pkt: RtpPacket, state: StreamState) -> None:
    overt = state["overt"]
    if pkt.payload_type != overt.rtp_payload_type:
        raise PtMismatch(f"PT {pkt.payload_type} does not match {overt.display_name} (PT {overt.rtp_payload_type})")
    if len(pkt.payload) != overt.payload_bytes:
        raise WrongPayloadLength(f"{overt.display_name} payload must be {overt.payload_bytes} bytes, got {len(pkt.payload)}")


def _require_role(state: StreamState, role: StreamRole) -> None:
    if state["role"] != role:
        raise EngineError(f"{state['role'].value} stream state used for an {role.value} operation")


# =============================================================================
# STEGANOGRAM SENDER
# =============================================================================

def _encode_covert(state: StreamState, pcm: Optional[np.ndarray], alaw: Optional[bytes]) -> EncodedFrame:
    covert = state["covert"]
    if not covert.variable_rate:
        return state["covert_codec"].encode(pcm)
    if alaw is None:
        alaw = state["overt_codec"].encode(pcm).to_bytes()
    frame = lossless_encode(alaw, max_bytes=state["overt"].usable_bytes - 1)
    if lossless_shift(frame):
        state["counters"]["requantized_frames"] += 1
    return frame


def _embed(pkt: RtpPacket, state: StreamState, steg: StegBitstream, frame: EncodedFrame) -> RtpPacket:
    variable = state["covert"].variable_rate
    layout = layout_for(state["overt"], state["covert"], frame.byte_length if variable else None)
    steg_bytes, real = steg.pull(layout.steg_capacity)
    payload = pack_layout(
        frame, steg_bytes, layout.total_len,
        signaling=layout.signaling, reserved_len=layout.reserved_len, placement=state["placement"],
    )
    counters = state["counters"]
    counters["packets"] += 1
    counters["steg_bits_moved"] += 8 * real
    counters["covert_bytes"] += layout.covert_len
    return pkt.with_payload(payload)


def ss_transform(pkt: RtpPacket, state: StreamState, steg: StegBitstream) -> RtpPacket:
    """Intermediate SS: transcode the overt payload and fill the freed space."""
    _require_role(state, StreamRole.SS)
    _check_packet(pkt, state)
    overt_codec = state["overt_codec"]
    if state["covert"].variable_rate:
        frame = _encode_covert(state, None, bytes(pkt.payload))
    else:
        pcm = overt_codec.decode(overt_codec.frame_from_payload(pkt.payload))
        frame = _encode_covert(state, pcm, None)
    return _embed(pkt, state, steg, frame)


def ss_originate(pcm, pkt: RtpPacket, state: StreamState, steg: StegBitstream) -> RtpPacket:
    """Endpoint SS: encode the caller's audio straight into the covert codec.

    ``pkt`` supplies the header and the overt payload length; its payload bytes are ignored.
    """
    _require_role(state, StreamRole.SS)
    _check_packet(pkt, state)
    frame = _encode_covert(state, np.asarray(pcm), None)
    return _embed(pkt, state, steg, frame)


# =============================================================================
# STEGANOGRAM RECEIVER
# =============================================================================

def _decode_covert(pkt: RtpPacket, state: StreamState) -> Tuple[EncodedFrame, bytes, Optional[bytes]]:
    _require_role(state, StreamRole.SR)
    _check_packet(pkt, state)
    frame, steg = unpack_layout(pkt.payload, (state["overt"], state["covert"]), state["placement"])
    alaw = None
    if state["covert"].variable_rate:
        try:
            alaw = lossless_decode(frame)
        except CorruptFrame as exc:
            raise CorruptCovertFrame(str(exc)) from exc
    state["bitstream"].push(steg)
    counters = state["counters"]
    counters["packets"] += 1
    counters["steg_bits_moved"] += 8 * len(steg)
    return frame, steg, alaw


def sr_transform(pkt: RtpPacket, state: StreamState) -> Tuple[RtpPacket, bytes]:
    """Intermediate SR: extract the steganogram and restore an overt payload."""
    frame, steg, alaw = _decode_covert(pkt, state)
    overt_codec = state["overt_codec"]
    if alaw is not None:
        payload = alaw
    else:
        pcm = state["covert_codec"].decode(frame)
        payload = overt_codec.encode(pcm).to_bytes()
    return pkt.with_payload(payload), steg


def sr_extract(pkt: RtpPacket, state: StreamState) -> Tuple[np.ndarray, bytes]:
    """Endpoint SR: extract the steganogram and decode the covert frame to PCM."""
    frame, steg, alaw = _decode_covert(pkt, state)
    if alaw is not None:
        return alaw_decode_bytes(alaw), steg
    return state["covert_codec"].decode(frame), steg
