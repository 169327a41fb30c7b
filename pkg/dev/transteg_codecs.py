"""
Codec registry and working codecs for TranSteg.

- G.711 A-law: bit-exact table-driven companding.
- G.726-32: ADPCM with adaptive quantizer and 2-pole/6-zero adaptive predictor,
  following the integer arithmetic of the ITU-T reference.
- Lossless stand-in for G.711.0: stateless per-frame prediction + Rice coding of
  A-law frames. Not bitstream compatible with ITU-T G.711.0.
- Transform surrogate for the CELP / RPE-LTP codecs: fixed bit budget DCT coder
  reproducing only frame geometry and an approximate reconstruction.
"""

import logging
import math
from abc import ABC, abstractmethod
from bisect import bisect_right
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from bitarray import bitarray
from bitarray.util import ba2int, int2ba
from pydantic import BaseModel, ConfigDict
from scipy.fft import dct, idct

from transteg_errors import BudgetTooSmall, CorruptFrame, UnknownCodec, WrongLength

logger = logging.getLogger(__name__)

SAMPLE_RATE = 8000
FRAME_MS = 20
FRAME_SAMPLES = SAMPLE_RATE * FRAME_MS // 1000  # 160
FRAMES_PER_SECOND = 1000 // FRAME_MS  # 50


# =============================================================================
# REGISTRY
# =============================================================================

class CodecId(str, Enum):
    G711 = "g711"
    G711_0 = "g711_0"
    G726_32 = "g726"
    SPEEX7 = "speex7"
    ILBC = "ilbc"
    GSM0610 = "gsm0610"
    AMR122 = "amr122"
    SPEEX4 = "speex4"
    G729 = "g729"
    G7231 = "g7231"
    SPEEX2 = "speex2"


class CodecFamily(str, Enum):
    WAVEFORM = "waveform"
    CELP = "celp"
    RPE_LTP = "rpe_ltp"
    LOSSLESS = "lossless"


class CodecDescriptor(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: CodecId
    display_name: str
    nominal_bitrate_bps: int  # 0 for variable rate
    frame_ms: int = FRAME_MS
    bits_per_frame: int
    family: CodecFamily
    variable_rate: bool = False
    rtp_payload_type: int

    @property
    def kbps(self) -> float:
        return self.nominal_bitrate_bps / 1000.0

    @property
    def payload_bytes(self) -> Optional[int]:
        """RTP payload size of one frame; None for the variable-rate codec."""
        if self.variable_rate:
            return None
        return (self.bits_per_frame + 7) // 8

    @property
    def usable_bytes(self) -> Optional[int]:
        """Whole bytes fully covered by the frame's bits."""
        if self.variable_rate:
            return None
        return self.bits_per_frame // 8


def _descriptor(codec_id, name, bps, family, pt, variable_rate=False) -> CodecDescriptor:
    return CodecDescriptor(
        id=codec_id,
        display_name=name,
        nominal_bitrate_bps=bps,
        bits_per_frame=bps * FRAME_MS // 1000,
        family=family,
        variable_rate=variable_rate,
        rtp_payload_type=pt,
    )


# Registry order doubles as dynamic payload type order (96+) for non-G.711 codecs
_REGISTRY: Tuple[CodecDescriptor, ...] = (
    _descriptor(CodecId.G711, "G.711 A-law", 64000, CodecFamily.WAVEFORM, 8),
    _descriptor(CodecId.G711_0, "G.711.0", 0, CodecFamily.LOSSLESS, 96, variable_rate=True),
    _descriptor(CodecId.G726_32, "G.726-32", 32000, CodecFamily.WAVEFORM, 97),
    _descriptor(CodecId.SPEEX7, "Speex(7)", 24600, CodecFamily.CELP, 98),
    _descriptor(CodecId.ILBC, "iLBC", 15200, CodecFamily.CELP, 99),
    _descriptor(CodecId.GSM0610, "GSM 06.10", 13000, CodecFamily.RPE_LTP, 100),
    _descriptor(CodecId.AMR122, "AMR 12.2", 12200, CodecFamily.CELP, 101),
    _descriptor(CodecId.SPEEX4, "Speex(4)", 11000, CodecFamily.CELP, 102),
    _descriptor(CodecId.G729, "G.729", 8000, CodecFamily.CELP, 103),
    _descriptor(CodecId.G7231, "G.723.1", 6300, CodecFamily.CELP, 104),
    _descriptor(CodecId.SPEEX2, "Speex(2)", 5950, CodecFamily.CELP, 105),
)
_BY_ID: Dict[CodecId, CodecDescriptor] = {desc.id: desc for desc in _REGISTRY}


def registry() -> List[CodecDescriptor]:
    return list(_REGISTRY)


def lookup(codec: Union[str, CodecId, CodecDescriptor]) -> CodecDescriptor:
    """Resolve a descriptor from an id, a CLI token ('g726') or an enum name ('G726_32')."""
    if isinstance(codec, CodecDescriptor):
        return codec
    if isinstance(codec, CodecId):
        return _BY_ID[codec]
    token = str(codec).strip()
    try:
        return _BY_ID[CodecId(token.lower())]
    except ValueError:
        pass
    try:
        return _BY_ID[CodecId[token.upper()]]
    except KeyError:
        raise UnknownCodec(f"unknown codec '{codec}'") from None


def lookup_payload_type(payload_type: int) -> Optional[CodecDescriptor]:
    for desc in _REGISTRY:
        if desc.rtp_payload_type == payload_type:
            return desc
    return None


# =============================================================================
# FRAME TYPES
# =============================================================================

@dataclass(frozen=True)
class EncodedFrame:
    codec_id: CodecId
    bits: bitarray

    @property
    def bit_length(self) -> int:
        return len(self.bits)

    @property
    def byte_length(self) -> int:
        return (len(self.bits) + 7) // 8

    def to_bytes(self) -> bytes:
        """Bits MSB-first, zero-padded to a byte boundary."""
        return self.bits.tobytes()

    @classmethod
    def from_bytes(cls, codec_id: CodecId, data: bytes, bit_length: Optional[int] = None) -> "EncodedFrame":
        bits = bitarray(endian="big")
        bits.frombytes(bytes(data))
        if bit_length is not None:
            if bit_length > len(bits):
                raise WrongLength(f"{len(data)} bytes cannot hold {bit_length} bits")
            bits = bits[:bit_length]
        return cls(codec_id, bits)


def as_pcm_frame(samples) -> np.ndarray:
    """Validate and convert one 20-ms frame of 16-bit PCM."""
    frame = np.asarray(samples)
    if frame.shape != (FRAME_SAMPLES,):
        raise WrongLength(f"PCM frame must hold {FRAME_SAMPLES} samples, got {frame.size}")
    return np.clip(frame, -32768, 32767).astype(np.int16)


# =============================================================================
# G.711 A-LAW
# =============================================================================

_SEG_AEND = np.array([0x1F, 0x3F, 0x7F, 0xFF, 0x1FF, 0x3FF, 0x7FF, 0xFFF])


def _linear_to_alaw(pcm: np.ndarray) -> np.ndarray:
    # 13-bit magnitude, segment search, even-bit inversion
    value = pcm.astype(np.int32) >> 3
    positive = value >= 0
    mask = np.where(positive, 0xD5, 0x55)
    magnitude = np.where(positive, value, -value - 1)
    seg = np.searchsorted(_SEG_AEND, magnitude, side="left")
    quant = np.where(seg < 2, (magnitude >> 1) & 0x0F, (magnitude >> np.minimum(seg, 7)) & 0x0F)
    aval = np.where(seg >= 8, 0x7F, (np.minimum(seg, 7) << 4) | quant)
    return (aval ^ mask).astype(np.uint8)


def _alaw_to_linear(code: int) -> int:
    code ^= 0x55
    t = (code & 0x0F) << 4
    seg = (code & 0x70) >> 4
    if seg == 0:
        t += 8
    elif seg == 1:
        t += 0x108
    else:
        t = (t + 0x108) << (seg - 1)
    return t if code & 0x80 else -t


ALAW_ENCODE_TABLE = _linear_to_alaw(np.arange(-32768, 32768, dtype=np.int32))
ALAW_DECODE_TABLE = np.array([_alaw_to_linear(c) for c in range(256)], dtype=np.int16)

# Monotone sign-magnitude index of each A-law code (-128..127) and its inverse
ALAW_TO_INDEX = np.array(
    [((c ^ 0x55) & 0x7F) if (c ^ 0x55) & 0x80 else -((c ^ 0x55) & 0x7F) - 1 for c in range(256)],
    dtype=np.int64,
)
INDEX_TO_ALAW = np.zeros(256, dtype=np.uint8)
INDEX_TO_ALAW[ALAW_TO_INDEX + 128] = np.arange(256, dtype=np.uint8)


def alaw_segment_step(code: int) -> int:
    """Quantizer step (16-bit scale) of the segment containing an A-law code."""
    seg = ((code ^ 0x55) & 0x70) >> 4
    return 16 if seg < 2 else 8 << seg


def alaw_encode_samples(pcm: np.ndarray) -> bytes:
    pcm = np.asarray(pcm, dtype=np.int16)
    return ALAW_ENCODE_TABLE[pcm.astype(np.int32) + 32768].tobytes()


def alaw_decode_bytes(codes: bytes) -> np.ndarray:
    return ALAW_DECODE_TABLE[np.frombuffer(bytes(codes), dtype=np.uint8)]


def alaw_encode(frame) -> EncodedFrame:
    pcm = as_pcm_frame(frame)
    return EncodedFrame.from_bytes(CodecId.G711, alaw_encode_samples(pcm))


def alaw_decode(encoded: Union[EncodedFrame, bytes]) -> np.ndarray:
    data = encoded.to_bytes() if isinstance(encoded, EncodedFrame) else bytes(encoded)
    if len(data) != FRAME_SAMPLES:
        raise WrongLength(f"A-law frame must be {FRAME_SAMPLES} bytes, got {len(data)}")
    return alaw_decode_bytes(data)


# =============================================================================
# G.726 32 kbit/s ADPCM
# =============================================================================

_QTAB_32 = [-124, 80, 178, 246, 300, 349, 400]
_DQLNTAB_32 = [-2048, 4, 135, 213, 273, 323, 373, 425, 425, 373, 323, 273, 213, 135, 4, -2048]
_WITAB_32 = [-12, 18, 41, 64, 112, 198, 355, 1122, 1122, 355, 198, 112, 64, 41, 18, -12]
_FITAB_32 = [0, 0, 0, 0x200, 0x200, 0x200, 0x600, 0xE00, 0xE00, 0x600, 0x200, 0x200, 0x200, 0, 0, 0]


def _short(value: int) -> int:
    return ((value + 0x8000) & 0xFFFF) - 0x8000


def _quan_pow2(value: int) -> int:
    # Index of the first power of two above value, capped at 15
    if value <= 0:
        return 0
    return min(value.bit_length(), 15)


def _fmult(an: int, srn: int) -> int:
    anmag = an if an > 0 else ((-an) & 0x1FFF)
    anexp = _quan_pow2(anmag) - 6
    if anmag == 0:
        anmant = 32
    elif anexp >= 0:
        anmant = anmag >> anexp
    else:
        anmant = anmag << -anexp
    wanexp = anexp + ((srn >> 6) & 0xF) - 13
    wanmant = (anmant * (srn & 0o77) + 0x30) >> 4
    retval = ((wanmant << wanexp) & 0x7FFF) if wanexp >= 0 else (wanmant >> -wanexp)
    return -retval if (an ^ srn) < 0 else retval


def _float_mag(mag: int) -> int:
    exp = _quan_pow2(mag)
    return (exp << 6) + ((mag << 6) >> exp)


class G726State:
    """Encoder or decoder state of one G.726 stream."""

    __slots__ = ("yl", "yu", "dms", "dml", "ap", "a", "b", "pk", "dq", "sr", "td")

    def __init__(self):
        self.yl = 34816
        self.yu = 544
        self.dms = 0
        self.dml = 0
        self.ap = 0
        self.a = [0, 0]
        self.b = [0, 0, 0, 0, 0, 0]
        self.pk = [0, 0]
        self.dq = [32, 32, 32, 32, 32, 32]
        self.sr = [32, 32]
        self.td = 0

    def copy(self) -> "G726State":
        other = G726State()
        for name in ("yl", "yu", "dms", "dml", "ap", "td"):
            setattr(other, name, getattr(self, name))
        for name in ("a", "b", "pk", "dq", "sr"):
            setattr(other, name, list(getattr(self, name)))
        return other

    def __eq__(self, other) -> bool:
        return isinstance(other, G726State) and all(
            getattr(self, name) == getattr(other, name) for name in self.__slots__
        )

    # ----------------------------------------------------------------- predictor
    def predictor_zero(self) -> int:
        b, dq = self.b, self.dq
        return sum(_fmult(b[i] >> 2, dq[i]) for i in range(6))

    def predictor_pole(self) -> int:
        return _fmult(self.a[1] >> 2, self.sr[1]) + _fmult(self.a[0] >> 2, self.sr[0])

    def step_size(self) -> int:
        if self.ap >= 256:
            return self.yu
        y = self.yl >> 6
        dif = self.yu - y
        al = self.ap >> 2
        if dif > 0:
            y += (dif * al) >> 6
        elif dif < 0:
            y += (dif * al + 0x3F) >> 6
        return y

    # -------------------------------------------------------------- adaptation
    def update(self, y: int, wi: int, fi: int, dq: int, sr: int, dqsez: int) -> None:
        pk0 = 1 if dqsez < 0 else 0
        mag = dq & 0x7FFF

        # Transition detector
        ylint = self.yl >> 15
        ylfrac = (self.yl >> 10) & 0x1F
        thr1 = (32 + ylfrac) << ylint
        thr2 = (31 << 10) if ylint > 9 else thr1
        dqthr = (thr2 + (thr2 >> 1)) >> 1
        tr = 1 if (self.td != 0 and mag > dqthr) else 0

        # Quantizer scale factor adaptation
        yu = y + ((wi - y) >> 5)
        self.yu = min(max(yu, 544), 5120)
        self.yl += self.yu + ((-self.yl) >> 6)

        a2p = 0
        if tr == 1:
            self.a = [0, 0]
            self.b = [0, 0, 0, 0, 0, 0]
        else:
            pks1 = pk0 ^ self.pk[0]
            a2p = self.a[1] - (self.a[1] >> 7)
            if dqsez != 0:
                fa1 = self.a[0] if pks1 else -self.a[0]
                if fa1 < -8191:
                    a2p -= 0x100
                elif fa1 > 8191:
                    a2p += 0xFF
                else:
                    a2p += fa1 >> 5
                if pk0 ^ self.pk[1]:
                    if a2p <= -12160:
                        a2p = -12288
                    elif a2p >= 12416:
                        a2p = 12288
                    else:
                        a2p -= 0x80
                elif a2p <= -12416:
                    a2p = -12288
                elif a2p >= 12160:
                    a2p = 12288
                else:
                    a2p += 0x80
            a2p = _short(a2p)
            self.a[1] = a2p

            a1 = self.a[0] - (self.a[0] >> 8)
            if dqsez != 0:
                a1 = a1 + 192 if pks1 == 0 else a1 - 192
            a1ul = 15360 - a2p
            a1 = min(max(a1, -a1ul), a1ul)
            self.a[0] = _short(a1)

            for cnt in range(6):
                bc = self.b[cnt] - (self.b[cnt] >> 8)
                if mag:
                    bc = bc + 128 if (dq ^ self.dq[cnt]) >= 0 else bc - 128
                self.b[cnt] = _short(bc)

        # Delay line of quantized differences, 4-bit exponent / 6-bit mantissa
        self.dq = [0] + self.dq[:5]
        if mag == 0:
            self.dq[0] = 0x20 if dq >= 0 else _short(0xFC20)
        else:
            self.dq[0] = _float_mag(mag) if dq >= 0 else _float_mag(mag) - 0x400

        self.sr[1] = self.sr[0]
        if sr == 0:
            self.sr[0] = 0x20
        elif sr > 0:
            self.sr[0] = _float_mag(sr)
        elif sr > -32768:
            self.sr[0] = _float_mag(-sr) - 0x400
        else:
            self.sr[0] = _short(0xFC20)

        self.pk[1] = self.pk[0]
        self.pk[0] = pk0

        # Tone detector
        if tr == 1:
            self.td = 0
        else:
            self.td = 1 if a2p < -11776 else 0

        # Adaptation speed control
        self.dms += (fi - self.dms) >> 5
        self.dml += ((fi << 2) - self.dml) >> 7
        if tr == 1:
            self.ap = 256
        elif y < 1536 or self.td == 1 or abs((self.dms << 2) - self.dml) >= (self.dml >> 3):
            self.ap += (0x200 - self.ap) >> 4
        else:
            self.ap += (-self.ap) >> 4


def _quantize(d: int, y: int) -> int:
    dqm = abs(d)
    exp = _quan_pow2(dqm >> 1)
    mant = ((dqm << 7) >> exp) & 0x7F
    dln = (exp << 7) + mant - (y >> 2)
    i = bisect_right(_QTAB_32, dln)
    if d < 0:
        return 15 - i
    if i == 0:
        return 15
    return i


def _reconstruct(sign: int, dqln: int, y: int) -> int:
    dql = dqln + (y >> 2)
    if dql < 0:
        return -0x8000 if sign else 0
    dex = (dql >> 7) & 15
    dqt = 128 + (dql & 127)
    dq = (dqt << 7) >> (14 - dex)
    return dq - 0x8000 if sign else dq


def _g726_step(state: G726State, code: Optional[int], sample: int) -> Tuple[int, int]:
    """One encoder (code is None) or decoder step; returns (code, reconstructed 14-bit sample)."""
    sezi = state.predictor_zero()
    sez = sezi >> 1
    se = (sezi + state.predictor_pole()) >> 1
    y = state.step_size()
    if code is None:
        code = _quantize(sample - se, y)
    dq = _reconstruct(code & 8, _DQLNTAB_32[code], y)
    sr = se - (dq & 0x3FFF) if dq < 0 else se + dq
    dqsez = sr + sez - se
    state.update(y, _WITAB_32[code] << 5, _FITAB_32[code], dq, sr, dqsez)
    return code, sr


def g726_32_encode(frame, state: Optional[G726State] = None) -> Tuple[EncodedFrame, G726State]:
    """160 samples -> 80 bytes; two codes per byte, first sample in the low nibble (RFC 3551)."""
    pcm = as_pcm_frame(frame)
    state = state if state is not None else G726State()
    codes = [_g726_step(state, None, int(s) >> 2)[0] for s in pcm]
    packed = bytes(codes[i] | (codes[i + 1] << 4) for i in range(0, FRAME_SAMPLES, 2))
    return EncodedFrame.from_bytes(CodecId.G726_32, packed), state


def g726_32_decode(encoded: Union[EncodedFrame, bytes], state: Optional[G726State] = None) -> Tuple[np.ndarray, G726State]:
    data = encoded.to_bytes() if isinstance(encoded, EncodedFrame) else bytes(encoded)
    if len(data) != FRAME_SAMPLES // 2:
        raise WrongLength(f"G.726-32 frame must be {FRAME_SAMPLES // 2} bytes, got {len(data)}")
    state = state if state is not None else G726State()
    out = np.empty(FRAME_SAMPLES, dtype=np.int32)
    for i, byte in enumerate(data):
        out[2 * i] = _g726_step(state, byte & 0x0F, 0)[1] << 2
        out[2 * i + 1] = _g726_step(state, byte >> 4, 0)[1] << 2
    return np.clip(out, -32768, 32767).astype(np.int16), state


# =============================================================================
# LOSSLESS STAND-IN (G.711.0 role)
# =============================================================================

ESCAPE_HEADER = 0xFF
MAX_RICE_K = 15
MAX_SHIFT = 3
MAX_ORDER = 2
LOSSLESS_MAX_BYTES = FRAME_SAMPLES + 1


def _rice_cost(values: np.ndarray) -> Tuple[int, int]:
    """Best Rice parameter and the bit count it yields."""
    ks = np.arange(MAX_RICE_K + 1)
    costs = ((values[None, :] >> ks[:, None]) + 1 + ks[:, None]).sum(axis=1)
    k = int(np.argmin(costs))
    return k, int(costs[k])


def _residuals(values: np.ndarray, order: int) -> np.ndarray:
    # Fixed polynomial predictors, history reset to zero at every frame
    padded = np.concatenate([np.zeros(2, dtype=np.int64), values])
    if order == 0:
        return values
    if order == 1:
        return values - padded[1:-1]
    return values - 2 * padded[1:-1] + padded[:-2]


def _zigzag(residuals: np.ndarray) -> np.ndarray:
    return np.where(residuals >= 0, residuals << 1, (-residuals << 1) - 1)


def _encode_indices(indices: np.ndarray, shift: int) -> bytes:
    values = indices >> shift
    best = None
    for order in range(MAX_ORDER + 1):
        zigzag = _zigzag(_residuals(values, order))
        k, cost = _rice_cost(zigzag)
        if best is None or cost < best[0]:
            best = (cost, order, k, zigzag)
    _, order, k, zigzag = best

    mask = (1 << k) - 1
    words = [
        "1" * (u >> k) + "0" + (format(u & mask, f"0{k}b") if k else "")
        for u in zigzag.tolist()
    ]
    bits = bitarray("".join(words), endian="big")
    return bytes([(order << 6) | (shift << 4) | k]) + bits.tobytes()


def lossless_encode(alaw_frame: bytes, max_bytes: Optional[int] = None) -> EncodedFrame:
    """
    Stateless compression of one 160-byte A-law frame.

    Header byte: predictor order (2 bits), index shift (2 bits), Rice parameter
    (4 bits); 0xFF marks an escape frame carrying the 160 raw bytes.

    Without ``max_bytes`` the result is lossless: a Rice-coded frame, or the escape
    form when coding would not beat 160 bytes. With ``max_bytes`` the smallest index
    shift needed to fit is applied instead of escaping, which drops low-order code bits.
    """
    data = bytes(alaw_frame)
    if len(data) != FRAME_SAMPLES:
        raise WrongLength(f"A-law frame must be {FRAME_SAMPLES} bytes, got {len(data)}")
    indices = ALAW_TO_INDEX[np.frombuffer(data, dtype=np.uint8)]

    coded = _encode_indices(indices, 0)
    if max_bytes is None:
        if len(coded) > FRAME_SAMPLES:
            coded = bytes([ESCAPE_HEADER]) + data
        return EncodedFrame.from_bytes(CodecId.G711_0, coded)

    shift = 0
    while len(coded) > max_bytes and shift < MAX_SHIFT:
        shift += 1
        coded = _encode_indices(indices, shift)
    if len(coded) > max_bytes:
        raise CorruptFrame(f"frame cannot be coded within {max_bytes} bytes")
    if shift:
        logger.warning("lossless frame requantized with shift %d to fit %d bytes", shift, max_bytes)
    return EncodedFrame.from_bytes(CodecId.G711_0, coded)


def lossless_shift(encoded: EncodedFrame) -> int:
    header = encoded.to_bytes()[:1]
    if not header or header[0] == ESCAPE_HEADER:
        return 0
    return (header[0] >> 4) & 0x03


def lossless_decode(encoded: Union[EncodedFrame, bytes]) -> bytes:
    data = encoded.to_bytes() if isinstance(encoded, EncodedFrame) else bytes(encoded)
    if not data:
        raise CorruptFrame("empty lossless frame")
    header = data[0]
    if header == ESCAPE_HEADER:
        if len(data) != LOSSLESS_MAX_BYTES:
            raise CorruptFrame(f"escape frame must be {LOSSLESS_MAX_BYTES} bytes, got {len(data)}")
        return data[1:]

    order, shift, k = header >> 6, (header >> 4) & 0x03, header & 0x0F
    if order > MAX_ORDER:
        raise CorruptFrame(f"invalid lossless header 0x{header:02x}")

    bits = bitarray(endian="big")
    bits.frombytes(data[1:])
    stream = bits.to01()
    pos = 0
    residuals = []
    for _ in range(FRAME_SAMPLES):
        stop = stream.find("0", pos)
        if stop < 0 or stop + 1 + k > len(stream):
            raise CorruptFrame("lossless bitstream exhausted early")
        quotient = stop - pos
        low = int(stream[stop + 1: stop + 1 + k], 2) if k else 0
        pos = stop + 1 + k
        u = (quotient << k) | low
        residuals.append(u >> 1 if u % 2 == 0 else -((u + 1) >> 1))

    values = []
    prev1 = prev2 = 0
    for r in residuals:
        if order == 0:
            v = r
        elif order == 1:
            v = r + prev1
        else:
            v = r + 2 * prev1 - prev2
        values.append(v)
        prev1, prev2 = v, prev1

    indices = np.clip(np.array(values, dtype=np.int64) << shift, -128, 127)
    return INDEX_TO_ALAW[indices + 128].tobytes()


# =============================================================================
# TRANSFORM SURROGATE (CELP / RPE-LTP bit budgets)
# =============================================================================

_GAIN_BITS = 8
_COUNT_BITS = 8
_INDEX_BITS = 8
_MAG_BITS = 5
_MAG_LEVELS = 1 << _MAG_BITS
_COEF_BITS = _INDEX_BITS + 1 + _MAG_BITS
MIN_SURROGATE_BITS = _GAIN_BITS + _COUNT_BITS


def _surrogate_budget(desc: CodecDescriptor) -> int:
    if desc.family not in (CodecFamily.CELP, CodecFamily.RPE_LTP):
        raise UnknownCodec(f"{desc.display_name} is not a surrogate-coded codec")
    if desc.bits_per_frame < MIN_SURROGATE_BITS:
        raise BudgetTooSmall(f"{desc.bits_per_frame} bits cannot hold the {MIN_SURROGATE_BITS}-bit frame header")
    return desc.bits_per_frame


def surrogate_encode(frame, desc: CodecDescriptor) -> EncodedFrame:
    """Greedy largest-coefficient DCT coding into exactly ``desc.bits_per_frame`` bits."""
    budget = _surrogate_budget(desc)
    pcm = as_pcm_frame(frame).astype(np.float64)
    coefs = dct(pcm, type=2, norm="ortho")
    magnitudes = np.abs(coefs)
    peak = float(magnitudes.max())

    bits = bitarray(endian="big")
    if peak < 1.0:
        gain_index, chosen = 0, []
    else:
        gain_index = min(int(math.ceil(8 * math.log2(peak))), (1 << _GAIN_BITS) - 1)
        gain = 2.0 ** (gain_index / 8)
        step = gain / _MAG_LEVELS
        capacity = (budget - MIN_SURROGATE_BITS) // _COEF_BITS
        order = np.argsort(-magnitudes, kind="stable")[:capacity]
        chosen = []
        for idx in order.tolist():
            level = min(int(round(magnitudes[idx] / step)), _MAG_LEVELS)
            if level == 0:
                break
            chosen.append((idx, coefs[idx] < 0, level))

    bits.extend(int2ba(gain_index, _GAIN_BITS, endian="big"))
    bits.extend(int2ba(len(chosen), _COUNT_BITS, endian="big"))
    for idx, negative, level in chosen:
        bits.extend(int2ba(idx, _INDEX_BITS, endian="big"))
        bits.append(bool(negative))
        bits.extend(int2ba(level - 1, _MAG_BITS, endian="big"))
    bits.extend(bitarray(budget - len(bits), endian="big"))
    bits[MIN_SURROGATE_BITS + len(chosen) * _COEF_BITS:] = 0
    return EncodedFrame(desc.id, bits)


def surrogate_decode(encoded: EncodedFrame, desc: CodecDescriptor) -> np.ndarray:
    budget = _surrogate_budget(desc)
    bits = encoded.bits
    if len(bits) != budget:
        raise WrongLength(f"{desc.display_name} frame must be {budget} bits, got {len(bits)}")

    gain_index = ba2int(bits[:_GAIN_BITS])
    count = ba2int(bits[_GAIN_BITS:MIN_SURROGATE_BITS])
    if MIN_SURROGATE_BITS + count * _COEF_BITS > budget:
        raise CorruptFrame(f"coefficient count {count} exceeds the bit budget")

    coefs = np.zeros(FRAME_SAMPLES, dtype=np.float64)
    step = 2.0 ** (gain_index / 8) / _MAG_LEVELS
    pos = MIN_SURROGATE_BITS
    for _ in range(count):
        idx = ba2int(bits[pos: pos + _INDEX_BITS])
        negative = bits[pos + _INDEX_BITS]
        level = ba2int(bits[pos + _INDEX_BITS + 1: pos + _COEF_BITS]) + 1
        pos += _COEF_BITS
        if idx >= FRAME_SAMPLES:
            raise CorruptFrame(f"coefficient index {idx} out of range")
        coefs[idx] = -level * step if negative else level * step

    pcm = idct(coefs, type=2, norm="ortho")
    return np.clip(np.rint(pcm), -32768, 32767).astype(np.int16)


# =============================================================================
# PER-STREAM CODEC OBJECTS
# =============================================================================

class Codec(ABC):
    """One direction of one stream; stateful codecs keep their state here."""

    def __init__(self, descriptor: CodecDescriptor):
        self.descriptor = descriptor

    @abstractmethod
    def encode(self, pcm) -> EncodedFrame:
        ...

    @abstractmethod
    def decode(self, frame: EncodedFrame) -> np.ndarray:
        ...

    def reset(self) -> None:
        pass

    def frame_from_payload(self, payload: bytes) -> EncodedFrame:
        """Fixed-rate frame carried in the leading bytes of a payload."""
        desc = self.descriptor
        if len(payload) < desc.payload_bytes:
            raise WrongLength(f"{desc.display_name} needs {desc.payload_bytes} payload bytes, got {len(payload)}")
        return EncodedFrame.from_bytes(desc.id, payload[: desc.payload_bytes], desc.bits_per_frame)


class AlawCodec(Codec):
    def encode(self, pcm) -> EncodedFrame:
        return alaw_encode(pcm)

    def decode(self, frame: EncodedFrame) -> np.ndarray:
        return alaw_decode(frame)


class G726Codec(Codec):
    def __init__(self, descriptor: CodecDescriptor):
        super().__init__(descriptor)
        self.state = G726State()

    def encode(self, pcm) -> EncodedFrame:
        frame, self.state = g726_32_encode(pcm, self.state)
        return frame

    def decode(self, frame: EncodedFrame) -> np.ndarray:
        pcm, self.state = g726_32_decode(frame, self.state)
        return pcm

    def reset(self) -> None:
        self.state = G726State()


class LosslessCodec(Codec):
    """A-law followed by the lossless stand-in; carries A-law frames bit-exactly."""

    def encode(self, pcm) -> EncodedFrame:
        return lossless_encode(alaw_encode(pcm).to_bytes())

    def decode(self, frame: EncodedFrame) -> np.ndarray:
        return alaw_decode_bytes(lossless_decode(frame))

    def frame_from_payload(self, payload: bytes) -> EncodedFrame:
        return EncodedFrame.from_bytes(CodecId.G711_0, payload)


class SurrogateCodec(Codec):
    def encode(self, pcm) -> EncodedFrame:
        return surrogate_encode(pcm, self.descriptor)

    def decode(self, frame: EncodedFrame) -> np.ndarray:
        return surrogate_decode(frame, self.descriptor)


def create_codec(codec: Union[str, CodecId, CodecDescriptor]) -> Codec:
    """Fresh per-stream codec instance."""
    desc = lookup(codec)
    if desc.id == CodecId.G711:
        return AlawCodec(desc)
    if desc.id == CodecId.G726_32:
        return G726Codec(desc)
    if desc.family == CodecFamily.LOSSLESS:
        return LosslessCodec(desc)
    return SurrogateCodec(desc)
