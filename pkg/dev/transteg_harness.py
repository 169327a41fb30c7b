"""
Call simulation harness for TranSteg.

Audio sources (synthetic speech-shaped corpus or 8 kHz WAV), RTP packetization,
scenario runs S1-S4 through the call graph, configuration A/B baselines,
segmental SNR, pcap export and metrics tables.
"""

import asyncio
import logging
import math
import time
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.io import wavfile
from scipy.signal import lfilter

from transteg_codecs import (
    FRAME_MS, FRAME_SAMPLES, FRAMES_PER_SECOND, SAMPLE_RATE, CodecDescriptor, create_codec,
    lossless_encode, alaw_encode_samples, lookup,
)
from transteg_errors import AudioLoadError, BadRatio, BadSampleRate, Infeasible, IoError, LengthMismatch
from transteg_planner import feasible
from transteg_rtp import (
    Ipv4UdpEnvelope, PcapRecord, RtpPacket, frame_rtp, make_envelope, serialize_rtp, write_pcap,
)
from transteg_state import CallMetrics, CallState, ScenarioConfig, create_call_state

logger = logging.getLogger(__name__)

CALLER_ADDR = bytes([192, 0, 2, 1])
CALLEE_ADDR = bytes([192, 0, 2, 2])
CALLER_PORT = 16384
CALLEE_PORT = 16386

FRAME_SECONDS = FRAME_MS / 1000.0
FULL_SCALE = 32768.0
ACTIVE_LEVEL_DBFS = -26.0
NOISE_FLOOR_DBFS = -55.0
SNR_GATE_DBFS = -60.0
SNR_CLAMP_DB = (-10.0, 60.0)
MEAN_TALK_SPURT_FRAMES = 60  # 1.2 s

# Fixed 2-pole low-pass giving the speech-like spectral tilt
SPEECH_FILTER_B = [1.0]
SPEECH_FILTER_A = [1.0, -1.6, 0.7]


# =============================================================================
# AUDIO
# =============================================================================

def _dbfs_to_rms(dbfs: float) -> float:
    return FULL_SCALE * 10 ** (dbfs / 20.0)


def synth_activity(duration_s: float, activity_ratio: float, seed: int) -> np.ndarray:
    """Talk-spurt / silence pattern at 20-ms resolution (True = talking)."""
    if not 0 < activity_ratio <= 1:
        raise BadRatio(f"activity ratio {activity_ratio} outside (0, 1]")
    frames = max(1, int(round(duration_s * FRAMES_PER_SECOND)))
    if activity_ratio == 1:
        return np.ones(frames, dtype=bool)

    rng = np.random.default_rng(seed)
    mean_on = float(MEAN_TALK_SPURT_FRAMES)
    mean_off = mean_on * (1 - activity_ratio) / activity_ratio
    lengths: List[float] = []
    while sum(lengths) < frames or len(lengths) < 2:
        mean = mean_on if len(lengths) % 2 == 0 else mean_off
        lengths.append(max(1.0, rng.exponential(mean)))

    # Rescale talk and silence lengths so the on-fraction matches the ratio
    on = np.array(lengths[0::2])
    off = np.array(lengths[1::2])
    target_on = int(round(activity_ratio * frames))
    on *= target_on / on.sum()
    off *= (frames - target_on) / off.sum()
    scaled = np.empty(len(lengths))
    scaled[0::2], scaled[1::2] = on, off

    bounds = np.rint(np.cumsum(scaled)).astype(int)
    counts = np.diff(np.concatenate([[0], bounds]))
    states = np.arange(len(counts)) % 2 == 0
    return np.repeat(states, counts)[:frames]


def synth_speech(duration_s: float, activity_ratio: float, seed: int) -> np.ndarray:
    """Seeded speech-shaped noise at -26 dBFS gated by synth_activity over a -55 dBFS floor."""
    activity = synth_activity(duration_s, activity_ratio, seed)
    samples = activity.size * FRAME_SAMPLES
    rng = np.random.default_rng([seed, 1])

    def shaped(level_dbfs: float) -> np.ndarray:
        noise = lfilter(SPEECH_FILTER_B, SPEECH_FILTER_A, rng.standard_normal(samples))
        return noise * (_dbfs_to_rms(level_dbfs) / np.sqrt(np.mean(noise ** 2)))

    speech, floor = shaped(ACTIVE_LEVEL_DBFS), shaped(NOISE_FLOOR_DBFS)
    gate = np.repeat(activity, FRAME_SAMPLES)
    return np.clip(np.rint(np.where(gate, speech, floor)), -32768, 32767).astype(np.int16)


def load_wav(path: Union[str, Path], duration_s: Optional[float] = None) -> np.ndarray:
    """8 kHz mono 16-bit PCM WAV, optionally truncated to ``duration_s``."""
    try:
        rate, data = wavfile.read(str(path))
    except (OSError, ValueError) as exc:
        raise AudioLoadError(f"cannot read {path}: {exc}") from exc
    if rate != SAMPLE_RATE:
        raise BadSampleRate(f"{path}: {rate} Hz, expected {SAMPLE_RATE} Hz")
    if data.ndim != 1:
        raise AudioLoadError(f"{path}: {data.shape[1]} channels, expected mono")
    if data.dtype != np.int16:
        raise AudioLoadError(f"{path}: {data.dtype} samples, expected 16-bit PCM")
    if duration_s is not None:
        data = data[: int(round(duration_s * SAMPLE_RATE))]
    return data


def write_wav(path: Union[str, Path], pcm: np.ndarray) -> None:
    try:
        wavfile.write(str(path), SAMPLE_RATE, np.asarray(pcm, dtype=np.int16))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def pad_frames(pcm: np.ndarray) -> np.ndarray:
    """Zero-pad to a whole number of 20-ms frames (at least one)."""
    pcm = np.asarray(pcm, dtype=np.int16)
    frames = max(1, math.ceil(pcm.size / FRAME_SAMPLES))
    out = np.zeros(frames * FRAME_SAMPLES, dtype=np.int16)
    out[: pcm.size] = pcm
    return out


def segmental_snr(reference: np.ndarray, degraded: np.ndarray) -> Optional[float]:
    """Mean per-20-ms SNR over segments above -60 dBFS, each clamped to [-10, 60] dB.

    None when no segment passes the energy gate.
    """
    reference = np.asarray(reference, dtype=np.float64)
    degraded = np.asarray(degraded, dtype=np.float64)
    if reference.shape != degraded.shape:
        raise LengthMismatch(f"reference has {reference.size} samples, degraded {degraded.size}")
    usable = (reference.size // FRAME_SAMPLES) * FRAME_SAMPLES
    ref = reference[:usable].reshape(-1, FRAME_SAMPLES)
    err = ref - degraded[:usable].reshape(-1, FRAME_SAMPLES)

    signal = np.sum(ref ** 2, axis=1)
    noise = np.sum(err ** 2, axis=1)
    active = signal / FRAME_SAMPLES >= _dbfs_to_rms(SNR_GATE_DBFS) ** 2
    if not active.any():
        return None
    low, high = SNR_CLAMP_DB
    with np.errstate(divide="ignore"):
        snr = 10 * np.log10(signal[active] / noise[active])
    return float(np.mean(np.clip(snr, low, high)))


# =============================================================================
# RTP STREAMS
# =============================================================================

def stream_identity(seed: int) -> Tuple[int, int, int]:
    """Seeded (ssrc, base_seq, base_ts) of the caller's RTP flow."""
    rng = np.random.default_rng([seed, 3])
    return int(rng.integers(0, 2 ** 32)), int(rng.integers(0, 2 ** 16)), int(rng.integers(0, 2 ** 32))


def packet_header(overt: CodecDescriptor, ssrc: int, seq: int, ts: int, marker: bool = False) -> RtpPacket:
    """Packet carrying a zeroed overt-size payload."""
    return RtpPacket(
        marker=marker,
        payload_type=overt.rtp_payload_type,
        sequence_number=seq & 0xFFFF,
        timestamp=ts & 0xFFFFFFFF,
        ssrc=ssrc,
        payload=bytes(overt.payload_bytes or 0),
    )


def packet_headers(frames: int, overt: CodecDescriptor, ssrc: int, base_seq: int, base_ts: int) -> List[RtpPacket]:
    return [
        packet_header(overt, ssrc, base_seq + i, base_ts + i * FRAME_SAMPLES, marker=(i == 0))
        for i in range(frames)
    ]


def packetize(
    pcm: np.ndarray,
    overt: Union[str, CodecDescriptor],
    ssrc: int,
    base_seq: int,
    base_ts: int,
    sample_rate: int = SAMPLE_RATE,
) -> List[RtpPacket]:
    """One RTP packet per 20-ms frame encoded with the overt codec."""
    if sample_rate != SAMPLE_RATE:
        raise BadSampleRate(f"{sample_rate} Hz input, expected {SAMPLE_RATE} Hz")
    overt = lookup(overt)
    frames = pad_frames(pcm).reshape(-1, FRAME_SAMPLES)
    codec = create_codec(overt)
    headers = packet_headers(len(frames), overt, ssrc, base_seq, base_ts)
    return [hdr.with_payload(codec.encode(frame).to_bytes()) for hdr, frame in zip(headers, frames)]


def envelope_for(pkt: RtpPacket, index: int) -> Ipv4UdpEnvelope:
    return make_envelope(CALLER_ADDR, CALLEE_ADDR, CALLER_PORT, CALLEE_PORT, serialize_rtp(pkt), identification=index)


def export_pcap(stream: Iterable[Tuple[Ipv4UdpEnvelope, RtpPacket]], path: Union[str, Path]) -> int:
    """Classic pcap, one Ethernet frame per packet at 20-ms spacing; returns the file size."""
    records = []
    for i, (env, pkt) in enumerate(stream):
        usec = i * FRAME_MS * 1000
        records.append(PcapRecord(usec // 1_000_000, usec % 1_000_000, frame_rtp(env, pkt)))
    try:
        return write_pcap(path, records)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def hamming_bits(a: bytes, b: bytes) -> int:
    """Differing bits over the common prefix."""
    n = min(len(a), len(b))
    x = np.frombuffer(a[:n], dtype=np.uint8) ^ np.frombuffer(b[:n], dtype=np.uint8)
    return int(np.unpackbits(x).sum())


# =============================================================================
# CALLS
# =============================================================================

def load_audio(cfg: ScenarioConfig) -> np.ndarray:
    if cfg.wav_path is not None:
        return pad_frames(load_wav(cfg.wav_path, cfg.duration_s))
    return synth_speech(cfg.duration_s, cfg.activity_ratio, cfg.seed)


def capacity_bound(cfg: ScenarioConfig, frames: int) -> int:
    """Total steganogram bytes a call can carry (upper bound under the variable-rate codec)."""
    from transteg_engine import layout_for

    overt, covert = lookup(cfg.overt), lookup(cfg.covert)
    if covert.variable_rate:
        return (overt.usable_bytes - 1) * frames
    return layout_for(overt, covert).steg_capacity * frames


def make_steganogram(cfg: ScenarioConfig, frames: int) -> bytes:
    if cfg.steg_path is not None:
        try:
            data = Path(cfg.steg_path).read_bytes()
        except OSError as exc:
            raise IoError(f"cannot read {cfg.steg_path}: {exc}") from exc
        return data if cfg.steg_length is None else data[: cfg.steg_length]
    length = cfg.steg_length if cfg.steg_length is not None else capacity_bound(cfg, frames)
    return np.random.default_rng([cfg.seed, 2]).integers(0, 256, size=length, dtype=np.uint8).tobytes()


def simulate_call(cfg: ScenarioConfig) -> CallState:
    """Run one call through the graph and return its final state."""
    from transteg_graph import build_call_graph

    if not feasible(cfg.overt, cfg.covert):
        raise Infeasible(f"{lookup(cfg.covert).display_name} cannot be carried inside {lookup(cfg.overt).display_name}")
    started = time.perf_counter()
    pcm = load_audio(cfg)
    steganogram = make_steganogram(cfg, pcm.size // FRAME_SAMPLES)
    state = create_call_state(cfg, pcm, steganogram)

    logger.info("call starting", extra={"scenario": cfg.scenario.value, "pair": f"{cfg.overt.value}/{cfg.covert.value}"})
    result = build_call_graph().invoke(state)
    metrics = result["metrics"].model_copy(update={"elapsed": time.perf_counter() - started})
    result["metrics"] = metrics
    logger.info(
        "call finished",
        extra={"scenario": cfg.scenario.value, "kbps": metrics.achieved_steg_kbps, "bit_errors": metrics.bit_errors},
    )
    return result


def run_scenario(cfg: ScenarioConfig) -> CallMetrics:
    return simulate_call(cfg)["metrics"]


def simulate_baseline(cfg: ScenarioConfig, passes: int) -> Tuple[CallMetrics, np.ndarray]:
    """Overt codec alone, ``passes`` times in tandem, no TranSteg (configurations A and B)."""
    if passes not in (1, 2):
        raise ValueError(f"baseline passes must be 1 or 2, got {passes}")
    started = time.perf_counter()
    pcm = load_audio(cfg)
    overt = lookup(cfg.overt)
    ssrc, base_seq, base_ts = stream_identity(cfg.seed)

    audio = pcm
    packets: List[RtpPacket] = []
    for _ in range(passes):
        packets = packetize(audio, overt, ssrc, base_seq, base_ts)
        decoder = create_codec(overt)
        audio = np.concatenate([decoder.decode(decoder.frame_from_payload(p.payload)) for p in packets])

    metrics = CallMetrics(
        scenario=cfg.scenario,
        overt=overt.id,
        covert=overt.id,
        seed=cfg.seed,
        packets=len(packets),
        steg_bytes_embedded=0,
        steg_bytes_recovered=0,
        bit_errors=0,
        achieved_steg_kbps=0.0,
        transcode_count=passes,
        segmental_snr_db=segmental_snr(pcm, audio),
        elapsed=time.perf_counter() - started,
    )
    return metrics, audio


def run_baseline(cfg: ScenarioConfig, passes: int) -> CallMetrics:
    return simulate_baseline(cfg, passes)[0]


async def run_sweep(configs: Sequence[ScenarioConfig], workers: int = 4) -> List[CallMetrics]:
    """Run calls concurrently (at most ``workers`` at once); results keep input order."""
    gate = asyncio.Semaphore(max(1, workers))

    async def one(cfg: ScenarioConfig) -> CallMetrics:
        async with gate:
            return await asyncio.to_thread(run_scenario, cfg)

    return list(await asyncio.gather(*(one(cfg) for cfg in configs)))


def lossless_kbps(pcm: np.ndarray) -> float:
    """Mean bitrate of the lossless stand-in over an audio signal (frame headers included)."""
    frames = pad_frames(pcm).reshape(-1, FRAME_SAMPLES)
    total = sum(lossless_encode(alaw_encode_samples(frame)).byte_length for frame in frames)
    return total * 8 / (len(frames) * FRAME_SECONDS) / 1000.0


# =============================================================================
# METRICS EXPORT
# =============================================================================

def metrics_frame(metrics: Sequence[CallMetrics]) -> pd.DataFrame:
    rows = [
        {
            "scenario": m.scenario.value,
            "overt": m.overt.value,
            "covert": m.covert.value,
            "seed": m.seed,
            "packets": m.packets,
            "kbps": round(m.achieved_steg_kbps, 6),
            "bit_errors": m.bit_errors,
            "snr_db": None if m.segmental_snr_db is None else round(m.segmental_snr_db, 4),
            "transcode_count": m.transcode_count,
            "steg_bytes_embedded": m.steg_bytes_embedded,
            "steg_bytes_recovered": m.steg_bytes_recovered,
            "covert_kbps": None if m.covert_kbps is None else round(m.covert_kbps, 4),
            "requantized_frames": m.requantized_frames,
        }
        for m in metrics
    ]
    return pd.DataFrame(rows)


def write_metrics_csv(metrics: Sequence[CallMetrics], path: Union[str, Path]) -> None:
    try:
        metrics_frame(metrics).to_csv(path, index=False, lineterminator="\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
