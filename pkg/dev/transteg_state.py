from typing import TypedDict, List, Dict, Any, Optional, Tuple
from enum import Enum
from pathlib import Path
from datetime import datetime
import uuid

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from transteg_codecs import CodecId, lookup
from transteg_engine import StreamRole, StreamState, StegBitstream, create_stream_state
from transteg_rtp import Ipv4UdpEnvelope, RtpPacket

DEFAULT_ACTIVITY_RATIO = 0.465

class Scenario(str, Enum):
    S1 = "S1"  # SS and SR at the endpoints
    S2 = "S2"  # SS at the caller, SR intermediate
    S3 = "S3"  # SS intermediate, SR at the callee
    S4 = "S4"  # SS and SR intermediate

    @property
    def ss_at_endpoint(self) -> bool:
        return self in (Scenario.S1, Scenario.S2)

    @property
    def sr_at_endpoint(self) -> bool:
        return self in (Scenario.S1, Scenario.S3)

    @property
    def transcode_count(self) -> int:
        return 1 + int(not self.ss_at_endpoint) + int(not self.sr_at_endpoint)

class ScenarioConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    scenario: Scenario = Scenario.S4
    overt: CodecId = CodecId.G711
    covert: CodecId = CodecId.G726_32
    wav_path: Optional[Path] = None  # synthetic speech-shaped corpus when absent
    steg_path: Optional[Path] = None  # seeded random steganogram when absent
    steg_length: Optional[int] = Field(default=None, ge=0)
    seed: int = 1
    duration_s: float = Field(default=60.0, gt=0)
    activity_ratio: float = DEFAULT_ACTIVITY_RATIO
    capture_wire: bool = False  # keep the SS->SR packets for pcap export

    @property
    def key(self) -> Tuple[str, str, str, int]:
        return self.scenario.value, self.overt.value, self.covert.value, self.seed

class CallMetrics(BaseModel):
    scenario: Scenario
    overt: CodecId
    covert: CodecId
    seed: int
    packets: int
    steg_bytes_embedded: int
    steg_bytes_recovered: int
    bit_errors: int
    achieved_steg_kbps: float
    transcode_count: int
    segmental_snr_db: Optional[float] = None
    covert_kbps: Optional[float] = None  # mean covert codec bitrate actually carried
    requantized_frames: int = 0
    elapsed: float = 0.0

class CallState(TypedDict):
    # Inputs
    config: ScenarioConfig
    pcm: np.ndarray  # caller audio, whole frames
    steganogram: bytes

    # Per-flow TranSteg state
    ss_state: StreamState
    sr_state: StreamState
    steg_queue: StegBitstream

    # Packets currently on the wire and the copy seen between SS and SR
    wire: List[Tuple[Ipv4UdpEnvelope, RtpPacket]]
    captured: List[Tuple[Ipv4UdpEnvelope, RtpPacket]]

    # Outputs
    output_pcm: Optional[np.ndarray]
    recovered: bytes
    transcode_count: int
    metrics: Optional[CallMetrics]

    # Metadata
    trace: List[str]
    started: str
    session_id: str

def create_call_state(config: ScenarioConfig, pcm: np.ndarray, steganogram: bytes) -> CallState:
    """Create the initial state of one simulated call."""
    overt, covert = lookup(config.overt), lookup(config.covert)
    return CallState(
        config=config,
        pcm=pcm,
        steganogram=steganogram,
        ss_state=create_stream_state(StreamRole.SS, overt, covert),
        sr_state=create_stream_state(StreamRole.SR, overt, covert),
        steg_queue=StegBitstream(steganogram),
        wire=[],
        captured=[],
        output_pcm=None,
        recovered=b"",
        transcode_count=0,
        metrics=None,
        trace=[],
        started=datetime.now().isoformat(),
        session_id=str(uuid.uuid4()),
    )

def mark_node(state: CallState, node: str) -> List[str]:
    """Trace list with ``node`` appended."""
    return state["trace"] + [node]
