import logging
from typing import Any, Dict, List, Tuple

import numpy as np

from transteg_codecs import FRAME_SAMPLES, create_codec, lookup
from transteg_engine import sr_extract, sr_transform, ss_originate, ss_transform
from transteg_errors import PtMismatch
from transteg_harness import (
    FRAME_SECONDS, envelope_for, hamming_bits, packet_headers, packetize, segmental_snr, stream_identity,
)
from transteg_rtp import Ipv4UdpEnvelope, RtpPacket, adjust_checksums, serialize_rtp
from transteg_state import CallMetrics, CallState, mark_node

logger = logging.getLogger(__name__)

Wire = List[Tuple[Ipv4UdpEnvelope, RtpPacket]]

# =============================================================================
# CALLER
# =============================================================================

def caller_overt(state: CallState) -> Dict[str, Any]:
    """Caller endpoint without TranSteg: plain overt-codec RTP stream."""
    cfg = state["config"]
    ssrc, base_seq, base_ts = stream_identity(cfg.seed)
    packets = packetize(state["pcm"], lookup(cfg.overt), ssrc, base_seq, base_ts)
    return {
        "wire": [(envelope_for(pkt, i), pkt) for i, pkt in enumerate(packets)],
        "transcode_count": state["transcode_count"] + 1,
        "trace": mark_node(state, "caller_overt"),
    }

def caller_ss(state: CallState) -> Dict[str, Any]:
    """Caller endpoint acting as SS: audio goes straight into the covert codec."""
    cfg = state["config"]
    overt = lookup(cfg.overt)
    frames = state["pcm"].reshape(-1, FRAME_SAMPLES)
    ssrc, base_seq, base_ts = stream_identity(cfg.seed)
    headers = packet_headers(len(frames), overt, ssrc, base_seq, base_ts)

    wire = []
    for i, (frame, header) in enumerate(zip(frames, headers)):
        pkt = ss_originate(frame, header, state["ss_state"], state["steg_queue"])
        wire.append((envelope_for(pkt, i), pkt))
    return {
        "wire": wire,
        "transcode_count": state["transcode_count"] + 1,
        "trace": mark_node(state, "caller_ss"),
    }

# =============================================================================
# INTERMEDIATE NODES
# =============================================================================

def ss_gateway(state: CallState) -> Dict[str, Any]:
    """Intermediate SS: overt -> covert transcoding plus steganogram injection."""
    wire: Wire = []
    for env, pkt in state["wire"]:
        try:
            shaped = ss_transform(pkt, state["ss_state"], state["steg_queue"])
        except PtMismatch as exc:
            logger.debug("forwarding untouched: %s", exc, extra={"ssrc": pkt.ssrc})
            wire.append((env, pkt))
            continue
        wire.append((adjust_checksums(env, serialize_rtp(shaped)), shaped))
    return {
        "wire": wire,
        "transcode_count": state["transcode_count"] + 1,
        "trace": mark_node(state, "ss_gateway"),
    }

def network(state: CallState) -> Dict[str, Any]:
    """Ideal network: no loss, jitter or reordering."""
    captured = list(state["wire"]) if state["config"].capture_wire else []
    return {"captured": captured, "trace": mark_node(state, "network")}

def sr_gateway(state: CallState) -> Dict[str, Any]:
    """Intermediate SR: steganogram extraction plus covert -> overt re-encoding."""
    wire: Wire = []
    for env, pkt in state["wire"]:
        try:
            restored, _ = sr_transform(pkt, state["sr_state"])
        except PtMismatch as exc:
            logger.debug("forwarding untouched: %s", exc, extra={"ssrc": pkt.ssrc})
            wire.append((env, pkt))
            continue
        wire.append((adjust_checksums(env, serialize_rtp(restored)), restored))
    return {
        "wire": wire,
        "transcode_count": state["transcode_count"] + 1,
        "trace": mark_node(state, "sr_gateway"),
    }

# =============================================================================
# CALLEE
# =============================================================================

def callee_overt(state: CallState) -> Dict[str, Any]:
    """Callee endpoint without TranSteg: decode the overt codec."""
    decoder = create_codec(lookup(state["config"].overt))
    frames = [decoder.decode(decoder.frame_from_payload(pkt.payload)) for _, pkt in state["wire"]]
    return {
        "output_pcm": np.concatenate(frames) if frames else np.zeros(0, dtype=np.int16),
        "trace": mark_node(state, "callee_overt"),
    }

def callee_sr(state: CallState) -> Dict[str, Any]:
    """Callee endpoint acting as SR: extract and decode the covert codec directly."""
    frames = [sr_extract(pkt, state["sr_state"])[0] for _, pkt in state["wire"]]
    return {
        "output_pcm": np.concatenate(frames) if frames else np.zeros(0, dtype=np.int16),
        "trace": mark_node(state, "callee_sr"),
    }

# =============================================================================
# METRICS
# =============================================================================

def metrics(state: CallState) -> Dict[str, Any]:
    """Compare recovered and embedded steganogram, measure throughput and audio quality."""
    cfg = state["config"]
    ss_counters = state["ss_state"]["counters"]
    packets = len(state["wire"])
    duration = packets * FRAME_SECONDS

    embedded = ss_counters["steg_bits_moved"] // 8
    sent = state["steganogram"][:embedded]
    recovered = state["sr_state"]["bitstream"].getvalue()[:embedded]
    bit_errors = hamming_bits(sent, recovered) + 8 * (embedded - len(recovered))

    kbps = len(recovered) * 8 / duration / 1000 if duration else 0.0
    covert_kbps = ss_counters["covert_bytes"] * 8 / duration / 1000 if duration else None
    result = CallMetrics(
        scenario=cfg.scenario,
        overt=cfg.overt,
        covert=cfg.covert,
        seed=cfg.seed,
        packets=packets,
        steg_bytes_embedded=embedded,
        steg_bytes_recovered=len(recovered),
        bit_errors=bit_errors,
        achieved_steg_kbps=kbps,
        transcode_count=state["transcode_count"],
        segmental_snr_db=segmental_snr(state["pcm"], state["output_pcm"]),
        covert_kbps=covert_kbps,
        requantized_frames=ss_counters["requantized_frames"],
    )
    if bit_errors:
        logger.warning("steganogram corrupted", extra={"bit_errors": bit_errors, "scenario": cfg.scenario.value})
    return {"metrics": result, "recovered": recovered, "trace": mark_node(state, "metrics")}
