#!/usr/bin/env python3
"""
Tests for the codec registry and the codec implementations
"""

import os
import sys

import numpy as np
import pytest
from dotenv import load_dotenv

# Load environment variables
load_dotenv(override=True)

# Add current directory to path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from transteg_codecs import (
    ALAW_DECODE_TABLE, ALAW_ENCODE_TABLE, ESCAPE_HEADER, FRAME_SAMPLES, CodecDescriptor, CodecFamily, CodecId,
    EncodedFrame, alaw_decode, alaw_encode, alaw_encode_samples, alaw_segment_step, as_pcm_frame, create_codec,
    g726_32_decode, g726_32_encode, lookup, lookup_payload_type, lossless_decode, lossless_encode,
    lossless_shift, registry, surrogate_decode, surrogate_encode,
)
from transteg_errors import BudgetTooSmall, CorruptFrame, UnknownCodec, WrongLength

SURROGATE_IDS = [
    CodecId.SPEEX7, CodecId.ILBC, CodecId.GSM0610, CodecId.AMR122,
    CodecId.SPEEX4, CodecId.G729, CodecId.G7231, CodecId.SPEEX2,
]


def sine(frames: int, freq: float = 1000.0, amplitude: float = 16384.0) -> np.ndarray:
    t = np.arange(frames * FRAME_SAMPLES) / 8000.0
    return np.rint(amplitude * np.sin(2 * np.pi * freq * t + 0.3)).astype(np.int16)


def snr_db(reference: np.ndarray, degraded: np.ndarray) -> float:
    ref = reference.astype(np.float64)
    err = ref - degraded.astype(np.float64)
    return float(10 * np.log10(np.sum(ref ** 2) / max(np.sum(err ** 2), 1e-9)))


# =============================================================================
# REGISTRY
# =============================================================================

def test_registry_frame_sizes():
    print("🧪 Testing codec registry...")
    for desc in registry():
        if desc.variable_rate:
            assert desc.payload_bytes is None
            continue
        assert desc.bits_per_frame == desc.nominal_bitrate_bps * 20 // 1000
        assert desc.bits_per_frame * 50 == desc.nominal_bitrate_bps
    assert lookup(CodecId.G711).payload_bytes == 160
    assert lookup(CodecId.G726_32).payload_bytes == 80
    assert lookup(CodecId.AMR122).payload_bytes == 31
    assert lookup(CodecId.AMR122).usable_bytes == 30
    assert lookup(CodecId.SPEEX2).payload_bytes == 15
    assert lookup(CodecId.G7231).bits_per_frame == 126
    print("✅ Registry frame sizes passed")


def test_lookup_tokens_and_payload_types():
    assert lookup("g726").id == CodecId.G726_32
    assert lookup("G726_32").id == CodecId.G726_32
    assert lookup("amr122").display_name == "AMR 12.2"
    assert lookup_payload_type(8).id == CodecId.G711
    assert lookup_payload_type(0) is None
    payload_types = [desc.rtp_payload_type for desc in registry()]
    assert len(set(payload_types)) == len(payload_types)
    with pytest.raises(UnknownCodec):
        lookup("opus")


def test_pcm_frame_validation():
    with pytest.raises(WrongLength):
        as_pcm_frame(np.zeros(100))
    with pytest.raises(WrongLength):
        EncodedFrame.from_bytes(CodecId.AMR122, bytes(30), 244)


# =============================================================================
# G.711 A-LAW
# =============================================================================

def test_alaw_exhaustive_error_bound():
    print("🧪 Testing A-law over all 2^16 inputs...")
    pcm = np.arange(-32768, 32768, dtype=np.int32)
    codes = ALAW_ENCODE_TABLE[pcm + 32768]
    decoded = ALAW_DECODE_TABLE[codes].astype(np.int32)
    steps = np.array([alaw_segment_step(c) for c in range(256)])[codes]
    assert np.all(np.abs(decoded - pcm) <= steps // 2)
    print("✅ A-law error bound holds")


def test_alaw_code_idempotence():
    for code in range(256):
        value = int(ALAW_DECODE_TABLE[code])
        assert ALAW_ENCODE_TABLE[value + 32768] == code


def test_alaw_zero_sample():
    assert alaw_encode_samples(np.zeros(1, dtype=np.int16)) == b"\xd5"
    assert alaw_decode(b"\xd5" * FRAME_SAMPLES)[0] == 8
    frame = alaw_encode(np.zeros(FRAME_SAMPLES, dtype=np.int16))
    assert frame.byte_length == 160
    with pytest.raises(WrongLength):
        alaw_decode(bytes(80))


# =============================================================================
# G.726-32
# =============================================================================

def test_g726_frame_size_and_snr():
    print("🧪 Testing G.726-32 on a 1 kHz sine...")
    pcm = sine(25)
    codec = create_codec(CodecId.G726_32)
    frames = [codec.encode(frame) for frame in pcm.reshape(-1, FRAME_SAMPLES)]
    assert all(f.byte_length == 80 and f.bit_length == 640 for f in frames)

    decoder = create_codec(CodecId.G726_32)
    out = np.concatenate([decoder.decode(f) for f in frames])
    # skip the adaptation transient of the first frames
    assert snr_db(pcm[5 * FRAME_SAMPLES:], out[5 * FRAME_SAMPLES:]) >= 20.0
    print("✅ G.726-32 SNR above 20 dB")


def test_g726_silence_settles():
    frame, state = g726_32_encode(np.zeros(FRAME_SAMPLES, dtype=np.int16))
    decoded, dstate = g726_32_decode(frame)
    for _ in range(2):
        frame, state = g726_32_encode(np.zeros(FRAME_SAMPLES, dtype=np.int16), state)
        decoded, dstate = g726_32_decode(frame, dstate)
    assert np.max(np.abs(decoded.astype(np.int32))) <= 16


def test_g726_deterministic_and_stateful():
    pcm = sine(3, freq=440.0, amplitude=8000.0).reshape(-1, FRAME_SAMPLES)
    a_codec = create_codec("g726")
    a = [a_codec.encode(f).to_bytes() for f in pcm]
    b_codec = create_codec("g726")
    b = [b_codec.encode(f).to_bytes() for f in pcm]
    assert a == b

    b_codec.reset()
    assert b_codec.encode(pcm[0]).to_bytes() == a[0]
    with pytest.raises(WrongLength):
        g726_32_decode(bytes(79))


# =============================================================================
# LOSSLESS STAND-IN
# =============================================================================

def _test_frames(count: int, seed: int = 7):
    rng = np.random.default_rng(seed)
    for i in range(count):
        if i % 2:
            yield rng.integers(0, 256, size=FRAME_SAMPLES, dtype=np.uint8).tobytes()
        else:
            level = 10 ** rng.uniform(1, 4)
            walk = np.cumsum(rng.standard_normal(FRAME_SAMPLES)) * level / 8
            pcm = np.clip(walk, -32768, 32767).astype(np.int16)
            yield alaw_encode_samples(pcm)


def test_lossless_round_trip_random_frames():
    print("🧪 Testing lossless stand-in over 10^4 frames...")
    for data in _test_frames(10_000):
        frame = lossless_encode(data)
        assert frame.byte_length <= 161
        assert lossless_decode(frame) == data
    print("✅ Lossless round trip is byte-exact")


def test_lossless_escape_and_silence():
    noise = np.random.default_rng(3).integers(0, 256, size=FRAME_SAMPLES, dtype=np.uint8).tobytes()
    escaped = lossless_encode(noise).to_bytes()
    assert len(escaped) == 161
    assert escaped[0] == ESCAPE_HEADER

    silence = b"\xd5" * FRAME_SAMPLES
    coded = lossless_encode(silence)
    assert coded.byte_length == 21  # header + one bit per sample
    assert lossless_decode(coded) == silence


def test_lossless_size_cap_requantizes():
    noise = np.random.default_rng(4).integers(0, 256, size=FRAME_SAMPLES, dtype=np.uint8).tobytes()
    frame = lossless_encode(noise, max_bytes=159)
    assert frame.byte_length <= 159
    assert lossless_shift(frame) >= 1
    assert len(lossless_decode(frame)) == FRAME_SAMPLES

    speechy = alaw_encode_samples(sine(1, freq=200.0, amplitude=3000.0))
    assert lossless_shift(lossless_encode(speechy, max_bytes=159)) == 0


def test_lossless_corrupt_frames():
    with pytest.raises(CorruptFrame):
        lossless_decode(b"")
    with pytest.raises(CorruptFrame):
        lossless_decode(b"\xff" + bytes(10))
    with pytest.raises(CorruptFrame):
        lossless_decode(b"\xc0" + bytes(40))
    with pytest.raises(CorruptFrame):
        lossless_decode(b"\x00")
    with pytest.raises(WrongLength):
        lossless_encode(bytes(100))


# =============================================================================
# TRANSFORM SURROGATE
# =============================================================================

def test_surrogate_exact_bit_budget():
    print("🧪 Testing surrogate bit budgets...")
    rng = np.random.default_rng(11)
    inputs = [np.zeros(FRAME_SAMPLES, dtype=np.int16), sine(1)[:FRAME_SAMPLES],
              rng.integers(-32768, 32767, size=FRAME_SAMPLES).astype(np.int16)]
    for codec_id in SURROGATE_IDS:
        desc = lookup(codec_id)
        for pcm in inputs:
            frame = surrogate_encode(pcm, desc)
            assert frame.bit_length == desc.bits_per_frame
            assert frame.byte_length == desc.payload_bytes
            assert surrogate_decode(frame, desc).shape == (FRAME_SAMPLES,)
    print("✅ Every surrogate frame fills its budget exactly")


def test_surrogate_zero_frame_and_determinism():
    desc = lookup(CodecId.G729)
    zero = surrogate_encode(np.zeros(FRAME_SAMPLES, dtype=np.int16), desc)
    assert not zero.bits.any()
    assert np.all(surrogate_decode(zero, desc) == 0)

    pcm = sine(1, freq=300.0)[:FRAME_SAMPLES]
    assert surrogate_encode(pcm, desc).bits == surrogate_encode(pcm, desc).bits


def test_surrogate_quality_and_monotonicity():
    pcm = sine(1)[:FRAME_SAMPLES]
    speex7 = lookup(CodecId.SPEEX7)
    assert snr_db(pcm, surrogate_decode(surrogate_encode(pcm, speex7), speex7)) >= 10.0

    rng = np.random.default_rng(5)
    voiced = np.rint(np.cumsum(rng.standard_normal(FRAME_SAMPLES)) * 300).astype(np.int16)
    budgets = sorted((lookup(c) for c in SURROGATE_IDS), key=lambda d: d.bits_per_frame)
    snrs = [snr_db(voiced, surrogate_decode(surrogate_encode(voiced, d), d)) for d in budgets]
    for lower, higher in zip(snrs, snrs[1:]):
        assert higher >= lower - 0.05


def test_surrogate_rejects_other_families():
    with pytest.raises(UnknownCodec):
        surrogate_encode(np.zeros(FRAME_SAMPLES, dtype=np.int16), lookup(CodecId.G711))
    tiny = CodecDescriptor(
        id=CodecId.SPEEX2, display_name="tiny", nominal_bitrate_bps=600, bits_per_frame=12,
        family=CodecFamily.CELP, rtp_payload_type=120,
    )
    with pytest.raises(BudgetTooSmall):
        surrogate_encode(np.zeros(FRAME_SAMPLES, dtype=np.int16), tiny)
