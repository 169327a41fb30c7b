#!/usr/bin/env python3
"""
TranSteg command line.

    python transteg_cli.py plan [--ledger PATH] [--lossless-kbps X] [--format table|csv]
    python transteg_cli.py simulate --scenario S4 --overt g711 --covert g726 [--duration 60] [--seed 1]
    python transteg_cli.py embed --in call.pcap --out stego.pcap --overt g711 --covert g726 --steg secret.bin
    python transteg_cli.py extract --in stego.pcap --out secret.bin --overt g711 --covert g726
    python transteg_cli.py inspect --in call.pcap

Exit codes: 0 ok, 2 usage/configuration, 3 data quality, 4 I/O.
"""

import argparse
import asyncio
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd
from dotenv import load_dotenv
from pydantic import ValidationError

# Load environment variables
load_dotenv(override=True)

# Add current directory to path for imports
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from transteg_codecs import CodecId, lookup, lookup_payload_type, registry
from transteg_config import load_settings
from transteg_engine import StegBitstream, StreamRole, create_stream_state, sr_transform, ss_transform
from transteg_errors import (
    AudioLoadError, BadSampleRate, EngineError, IoError, PlannerError, RtpError, TranStegError, UnknownCodec,
)
from transteg_harness import (
    export_pcap, lossless_kbps, metrics_frame, run_sweep, simulate_baseline, simulate_call, synth_speech,
    write_metrics_csv,
)
from transteg_logging import setup_logging
from transteg_planner import (
    OVERT_CODECS, build_matrix, feasible, load_ledger, measure_lossless_kbps, recommend,
    recommendation_findings, render_csv, render_table,
)
from transteg_rtp import PcapCapture, adjust_checksums, read_pcap, rewrite_record, serialize_rtp, write_pcap
from transteg_state import Scenario, ScenarioConfig

logger = logging.getLogger("transteg_cli")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_IO = 4

CODEC_CHOICES = [c.value for c in CodecId]


# =============================================================================
# PLAN
# =============================================================================

def cmd_plan(args) -> int:
    ledger = load_ledger(args.settings.ledger_path)
    measured = args.lossless_kbps
    if args.measure_seeds:
        calls = [lossless_kbps(synth_speech(args.duration, args.activity, seed)) for seed in range(1, args.measure_seeds + 1)]
        measurement = measure_lossless_kbps(calls)
        print(
            f"📊 Lossless stand-in over {measurement.samples} calls: mean {measurement.mean:.2f} kbps "
            f"(sd {measurement.stdev:.2f}, {measurement.minimum:.2f}-{measurement.maximum:.2f}, "
            f"±{measurement.ci95:.2f} at 95%)",
            file=sys.stderr,
        )
        if measured is None:
            measured = measurement.mean

    matrix = build_matrix(measured, ledger)
    if args.format == "csv":
        sys.stdout.write(render_csv(matrix))
    else:
        print(render_table(matrix))
        print("\n** top steganographic bandwidth   + recommended   C0/C1/C2 class   U unacceptable   - unfeasible")

    out = sys.stderr if args.format == "csv" else sys.stdout
    for finding in recommendation_findings(recommend(matrix)):
        print(f"⚠️  {finding}", file=out)
    return EXIT_OK


# =============================================================================
# SIMULATE
# =============================================================================

def _scenario_config(args, overt: str, covert: str) -> ScenarioConfig:
    return ScenarioConfig(
        scenario=Scenario(args.scenario),
        overt=CodecId(overt),
        covert=CodecId(covert),
        wav_path=args.wav,
        steg_path=args.steg,
        seed=args.seed,
        duration_s=args.duration,
        activity_ratio=args.activity,
        capture_wire=args.out_pcap is not None,
    )


def _print_metrics(m) -> None:
    snr = "n/a" if m.segmental_snr_db is None else f"{m.segmental_snr_db:.2f} dB"
    print(f"📊 {m.scenario.value} {m.overt.value} -> {m.covert.value}: {m.packets} packets, "
          f"{m.achieved_steg_kbps:.3f} kbps, {m.steg_bytes_recovered}/{m.steg_bytes_embedded} bytes, "
          f"{m.bit_errors} bit errors, {m.transcode_count} transcodings, SNR {snr}")


def cmd_simulate(args) -> int:
    if args.sweep:
        configs = [
            _scenario_config(args, overt.value, covert.id.value)
            for overt in OVERT_CODECS for covert in registry() if feasible(overt, covert)
        ]
        print(f"🚀 Sweeping {len(configs)} feasible pairs in {args.scenario} "
              f"({args.settings.sweep_workers} workers)")
        results = asyncio.run(run_sweep(configs, args.settings.sweep_workers))
    elif args.baseline:
        cfg = _scenario_config(args, args.overt, args.overt)
        print(f"🚀 Baseline: {args.overt} x{args.baseline}, no TranSteg")
        results = [simulate_baseline(cfg, args.baseline)[0]]
    else:
        if not feasible(args.overt, args.covert):
            print(f"❌ {lookup(args.covert).display_name} cannot be carried inside "
                  f"{lookup(args.overt).display_name}: covert bitrate must be below the overt bitrate")
            return EXIT_USAGE
        cfg = _scenario_config(args, args.overt, args.covert)
        print(f"🚀 Simulating {cfg.scenario.value} call {cfg.overt.value} -> {cfg.covert.value}")
        state = simulate_call(cfg)
        results = [state["metrics"]]
        if args.out_pcap is not None:
            size = export_pcap(state["captured"], args.out_pcap)
            print(f"✅ Wrote {len(state['captured'])} packets ({size} bytes) to {args.out_pcap}")

    for m in results:
        _print_metrics(m)
    if args.out_csv is not None:
        write_metrics_csv(results, args.out_csv)
        print(f"✅ Metrics written to {args.out_csv}")

    if any(m.bit_errors for m in results):
        print("❌ Steganogram corrupted in transit")
        return EXIT_DATA
    return EXIT_OK


# =============================================================================
# EMBED / EXTRACT
# =============================================================================

def _select_flow(capture: PcapCapture, payload_type: int) -> Optional[int]:
    for _, _, pkt in capture:
        if pkt.payload_type == payload_type:
            return pkt.ssrc
    return None


def _read_capture(path: Path) -> PcapCapture:
    try:
        return read_pcap(path)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def _write_capture(path: Path, records, snaplen: int) -> None:
    try:
        write_pcap(path, records, snaplen)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _rewrite_flow(args, role: StreamRole, steg: Optional[StegBitstream] = None):
    """Apply SS or SR to the first matching flow; returns (records, stream state, packets touched)."""
    overt = lookup(args.overt)
    capture = _read_capture(args.input)
    ssrc = _select_flow(capture, overt.rtp_payload_type)
    if ssrc is None:
        raise EngineError(f"no RTP flow with PT {overt.rtp_payload_type} ({overt.display_name}) in {args.input}")

    state = create_stream_state(role, overt, args.covert)
    rewritten = {}
    for record, env, pkt in capture:
        if pkt.ssrc != ssrc or pkt.payload_type != overt.rtp_payload_type:
            continue
        if role == StreamRole.SS:
            new_pkt = ss_transform(pkt, state, steg)
        else:
            new_pkt, _ = sr_transform(pkt, state)
        new_env = adjust_checksums(env, serialize_rtp(new_pkt))
        rewritten[id(record)] = rewrite_record(record, new_env, new_pkt)

    records = [rewritten.get(id(record), record) for record in capture.records]
    logger.info("flow rewritten", extra={"ssrc": ssrc, "packets": len(rewritten), "role": role.value})
    return records, state, len(rewritten), capture.snaplen


def cmd_embed(args) -> int:
    try:
        data = Path(args.steg).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {args.steg}: {exc}") from exc
    steg = StegBitstream(data)
    records, state, packets, snaplen = _rewrite_flow(args, StreamRole.SS, steg)
    _write_capture(args.output, records, snaplen)

    moved = state["counters"]["steg_bits_moved"] // 8
    print(f"✅ Embedded {moved} of {len(data)} bytes into {packets} packets -> {args.output}")
    if len(steg):
        print(f"⚠️  Capacity exceeded: {len(steg)} steganogram bytes were not embedded")
        return EXIT_DATA
    return EXIT_OK


def cmd_extract(args) -> int:
    records, state, packets, snaplen = _rewrite_flow(args, StreamRole.SR)
    data = state["bitstream"].getvalue()
    if args.length is not None:
        data = data[: args.length]
    try:
        Path(args.output).write_bytes(data)
    except OSError as exc:
        raise IoError(f"cannot write {args.output}: {exc}") from exc
    if args.restored is not None:
        _write_capture(args.restored, records, snaplen)
    print(f"✅ Extracted {len(data)} bytes from {packets} packets -> {args.output}")
    return EXIT_OK


# =============================================================================
# INSPECT
# =============================================================================

def _infer_codec(payload_type: int, size: int) -> str:
    desc = lookup_payload_type(payload_type)
    if desc is not None and (desc.variable_rate or desc.payload_bytes == size):
        return desc.display_name
    matches = [d.display_name for d in registry() if d.payload_bytes == size]
    return matches[0] + " (by size)" if len(matches) == 1 else "unknown"


def cmd_inspect(args) -> int:
    capture = _read_capture(args.input)
    rows = [
        {
            "ssrc": pkt.ssrc,
            "pt": pkt.payload_type,
            "size": len(pkt.payload),
            "time_ms": record.ts_sec * 1000.0 + record.ts_usec / 1000.0,
        }
        for record, _, pkt in capture
    ]
    if not rows:
        print(f"0 flows ({capture.skipped} non-RTP frames)")
        return EXIT_OK

    frame = pd.DataFrame(rows)
    flows = frame.groupby("ssrc", sort=False)
    print(f"{flows.ngroups} flows ({capture.skipped} non-RTP frames)")
    for ssrc, flow in flows:
        pt = int(flow["pt"].mode().iloc[0])
        size = int(flow["size"].mode().iloc[0])
        gaps = flow["time_ms"].diff().dropna()
        timing = (f"inter-arrival {gaps.mean():.2f} ms (sd {gaps.std(ddof=0):.2f})" if len(gaps) else "single packet")
        print(f"SSRC=0x{ssrc:08x} PT={pt}, {size} B payload, {_infer_codec(pt, size)}, "
              f"{len(flow)} packets, {timing}")
    return EXIT_OK


# =============================================================================
# ENTRY POINT
# =============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="TranSteg: transcoding-based VoIP steganography toolkit")
    parser.add_argument("--log-level", help="Override TRANSTEG_LOG_LEVEL")
    parser.add_argument("--ledger", help="Quality/cost ledger (overrides TRANSTEG_LEDGER)")
    sub = parser.add_subparsers(dest="command", required=True)

    plan = sub.add_parser("plan", help="Feasibility, bandwidth, cost and class matrix")
    plan.add_argument("--lossless-kbps", type=float, help="Measured mean bitrate of the lossless codec")
    plan.add_argument("--measure-seeds", type=int, default=0,
                      help="Measure the lossless stand-in over this many synthetic calls")
    plan.add_argument("--duration", type=float, default=60.0, help="Seconds per measured call")
    plan.add_argument("--activity", type=float, default=0.465, help="Voice activity of measured calls")
    plan.add_argument("--format", choices=["table", "csv"], default="table")
    plan.set_defaults(handler=cmd_plan)

    sim = sub.add_parser("simulate", help="Emulate a call in scenario S1-S4")
    sim.add_argument("--scenario", choices=[s.value for s in Scenario], default="S4")
    sim.add_argument("--overt", choices=CODEC_CHOICES, default="g711")
    sim.add_argument("--covert", choices=CODEC_CHOICES, default="g726")
    sim.add_argument("--wav", type=Path, help="8 kHz mono 16-bit WAV (synthetic speech otherwise)")
    sim.add_argument("--steg", type=Path, help="Steganogram file (seeded random otherwise)")
    sim.add_argument("--seed", type=int, default=1)
    sim.add_argument("--duration", type=float, default=60.0)
    sim.add_argument("--activity", type=float, default=0.465)
    sim.add_argument("--out-csv", type=Path)
    sim.add_argument("--out-pcap", type=Path, help="Capture of the packets between SS and SR")
    mode = sim.add_mutually_exclusive_group()
    mode.add_argument("--baseline", type=int, choices=[1, 2], help="Overt codec alone, once or twice")
    mode.add_argument("--sweep", action="store_true", help="Every feasible pair")
    sim.set_defaults(handler=cmd_simulate)

    embed = sub.add_parser("embed", help="Apply the SS transform to a captured flow")
    embed.add_argument("--in", dest="input", type=Path, required=True)
    embed.add_argument("--out", dest="output", type=Path, required=True)
    embed.add_argument("--overt", choices=CODEC_CHOICES, required=True)
    embed.add_argument("--covert", choices=CODEC_CHOICES, required=True)
    embed.add_argument("--steg", type=Path, required=True)
    embed.set_defaults(handler=cmd_embed)

    extract = sub.add_parser("extract", help="Apply the SR transform to a captured flow")
    extract.add_argument("--in", dest="input", type=Path, required=True)
    extract.add_argument("--out", dest="output", type=Path, required=True)
    extract.add_argument("--overt", choices=CODEC_CHOICES, required=True)
    extract.add_argument("--covert", choices=CODEC_CHOICES, required=True)
    extract.add_argument("--length", type=int, help="Keep only the first LENGTH extracted bytes")
    extract.add_argument("--restored", type=Path, help="Also write the capture with overt payloads restored")
    extract.set_defaults(handler=cmd_extract)

    inspect = sub.add_parser("inspect", help="List RTP flows in a capture")
    inspect.add_argument("--in", dest="input", type=Path, required=True)
    inspect.set_defaults(handler=cmd_inspect)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        args.settings = load_settings(args.ledger)
    except (ValidationError, ValueError) as exc:
        print(f"❌ Invalid configuration: {exc}")
        return EXIT_USAGE
    setup_logging(args.log_level or args.settings.log_level, args.settings.log_json)

    try:
        return args.handler(args)
    except (IoError, AudioLoadError, BadSampleRate) as exc:
        print(f"❌ {exc}")
        return EXIT_IO
    except (ValidationError, PlannerError, UnknownCodec, EngineError, RtpError) as exc:
        print(f"❌ {exc}")
        return EXIT_USAGE
    except TranStegError as exc:
        print(f"❌ {exc}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
