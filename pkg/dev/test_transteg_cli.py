#!/usr/bin/env python3
"""
End-to-end tests for the transteg command line
"""

import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from dotenv import load_dotenv

# Load environment variables
load_dotenv(override=True)

# Add current directory to path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from transteg_cli import EXIT_DATA, EXIT_IO, EXIT_OK, EXIT_USAGE, main
from transteg_config import load_settings
from transteg_harness import envelope_for, export_pcap, packetize, synth_speech
from transteg_logging import setup_logging
from transteg_rtp import read_pcap, serialize_rtp, verify_udp, write_pcap


@pytest.fixture
def call_pcap(tmp_path):
    packets = packetize(synth_speech(0.2, 1.0, 8), "g711", ssrc=0x11223344, base_seq=10, base_ts=0)
    path = tmp_path / "call.pcap"
    export_pcap([(envelope_for(p, i), p) for i, p in enumerate(packets)], path)
    return path


def test_plan_csv(capsys):
    assert main(["plan", "--format", "csv"]) == EXIT_OK
    out = capsys.readouterr()
    print("🧪 Testing plan --format csv...")
    frame = pd.read_csv(io.StringIO(out.out))
    assert len(frame) == 66
    assert int(frame["feasible"].sum()) == 27
    assert "Class2" in out.err  # recommendation count finding
    print("✅ 27 feasible rows")


def test_plan_table_with_measured_lossless(capsys):
    assert main(["plan", "--lossless-kbps", "25"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "38.60" in out
    assert "58.05**" in out


def test_plan_bad_ledger(tmp_path, capsys):
    assert main(["--ledger", str(tmp_path / "missing.tsv"), "plan"]) == EXIT_USAGE
    assert "ledger" in capsys.readouterr().out


def test_simulate_infeasible(capsys):
    assert main(["simulate", "--overt", "speex2", "--covert", "amr122"]) == EXIT_USAGE
    assert "cannot be carried" in capsys.readouterr().out


def test_simulate_with_outputs(tmp_path, capsys):
    csv_path = tmp_path / "metrics.csv"
    pcap_path = tmp_path / "wire.pcap"
    code = main([
        "simulate", "--scenario", "S4", "--overt", "g711", "--covert", "speex7", "--duration", "0.4",
        "--out-csv", str(csv_path), "--out-pcap", str(pcap_path),
    ])
    assert code == EXIT_OK
    frame = pd.read_csv(csv_path)
    assert frame.loc[0, "bit_errors"] == 0
    assert frame.loc[0, "packets"] == 20
    assert len(read_pcap(pcap_path)) == 20
    assert "0 bit errors" in capsys.readouterr().out


def test_simulate_baseline_and_missing_wav(tmp_path):
    assert main(["simulate", "--overt", "speex7", "--baseline", "2", "--duration", "0.2"]) == EXIT_OK
    assert main(["simulate", "--wav", str(tmp_path / "missing.wav"), "--duration", "0.2"]) == EXIT_IO


def test_embed_extract_round_trip(tmp_path, call_pcap, capsys):
    print("🧪 Testing embed/extract on a capture...")
    secret = np.random.default_rng(500).integers(0, 256, size=500, dtype=np.uint8).tobytes()
    steg_path = tmp_path / "secret.bin"
    steg_path.write_bytes(secret)
    stego = tmp_path / "stego.pcap"
    recovered = tmp_path / "recovered.bin"
    restored = tmp_path / "restored.pcap"

    assert main([
        "embed", "--in", str(call_pcap), "--out", str(stego), "--overt", "g711", "--covert", "g726",
        "--steg", str(steg_path),
    ]) == EXIT_OK
    original, shaped = read_pcap(call_pcap), read_pcap(stego)
    assert len(shaped) == len(original) == 10
    for (_, _, before), (_, env, after) in zip(original, shaped):
        assert after.header_bytes() == before.header_bytes()
        assert len(after.payload) == len(before.payload)
        assert verify_udp(env, serialize_rtp(after)) == 0xFFFF

    assert main([
        "extract", "--in", str(stego), "--out", str(recovered), "--overt", "g711", "--covert", "g726",
        "--length", "500", "--restored", str(restored),
    ]) == EXIT_OK
    assert recovered.read_bytes() == secret
    assert len(read_pcap(restored)) == 10
    print("✅ Steganogram recovered from the capture")


def test_embed_capacity_exceeded(tmp_path, call_pcap, capsys):
    steg_path = tmp_path / "big.bin"
    steg_path.write_bytes(bytes(1000))  # 10 packets x 80 bytes available
    code = main([
        "embed", "--in", str(call_pcap), "--out", str(tmp_path / "out.pcap"), "--overt", "g711",
        "--covert", "g726", "--steg", str(steg_path),
    ])
    assert code == EXIT_DATA
    assert "200 steganogram bytes were not embedded" in capsys.readouterr().out


def test_embed_without_matching_flow(tmp_path, call_pcap):
    steg_path = tmp_path / "s.bin"
    steg_path.write_bytes(b"x")
    code = main([
        "embed", "--in", str(call_pcap), "--out", str(tmp_path / "out.pcap"), "--overt", "speex7",
        "--covert", "amr122", "--steg", str(steg_path),
    ])
    assert code == EXIT_USAGE


def test_inspect(tmp_path, call_pcap, capsys):
    assert main(["inspect", "--in", str(call_pcap)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "1 flows" in out
    assert "SSRC=0x11223344 PT=8, 160 B payload, G.711 A-law, 10 packets" in out
    assert "inter-arrival 20.00 ms" in out

    empty = tmp_path / "empty.pcap"
    write_pcap(empty, [])
    assert main(["inspect", "--in", str(empty)]) == EXIT_OK
    assert "0 flows" in capsys.readouterr().out

    garbage = tmp_path / "garbage.pcap"
    garbage.write_bytes(b"not a capture at all....")
    assert main(["inspect", "--in", str(garbage)]) == EXIT_USAGE
    assert main(["inspect", "--in", str(tmp_path / "missing.pcap")]) == EXIT_IO


def test_settings_from_environment(monkeypatch, tmp_path):
    print("🧪 Testing environment settings...")
    monkeypatch.setenv("TRANSTEG_LEDGER", str(tmp_path / "ledger.tsv"))
    monkeypatch.setenv("TRANSTEG_LOG_LEVEL", "info")
    monkeypatch.setenv("TRANSTEG_LOG_JSON", "true")
    monkeypatch.setenv("TRANSTEG_SWEEP_WORKERS", "2")
    settings = load_settings()
    assert settings.ledger_path == tmp_path / "ledger.tsv"
    assert settings.log_level == "INFO"
    assert settings.log_json
    assert settings.sweep_workers == 2
    assert load_settings("other.tsv").ledger_path == Path("other.tsv")
    print("✅ Settings follow the environment")


def test_json_log_lines(capsys):
    root = setup_logging("INFO", json_output=True)
    try:
        logging.getLogger("transteg_cli").info("flow rewritten", extra={"ssrc": 0x1234})
        record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert record["message"] == "flow rewritten"
        assert record["levelname"] == "INFO"
        assert record["ssrc"] == 0x1234
    finally:
        for handler in [h for h in root.handlers if getattr(h, "_transteg", False)]:
            root.removeHandler(handler)
