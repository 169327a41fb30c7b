from typing import List
from transteg_state import CallState, Scenario

def caller_router(state: CallState) -> str:
    """
    Routes the caller's audio: an endpoint SS (S1, S2) encodes straight into the covert
    codec, otherwise the caller sends plain overt RTP towards the intermediate SS.
    """
    if state["config"].scenario.ss_at_endpoint:
        return "caller_ss"
    return "caller_overt"

def receiver_router(state: CallState) -> str:
    """
    Routes packets leaving the network: an endpoint SR (S1, S3) decodes the covert codec
    itself, otherwise an intermediate SR restores overt RTP for a plain callee.
    """
    if state["config"].scenario.sr_at_endpoint:
        return "callee_sr"
    return "sr_gateway"

def scenario_path(scenario: Scenario) -> List[str]:
    """Node sequence a call takes for ``scenario``."""
    path = ["caller_ss"] if scenario.ss_at_endpoint else ["caller_overt", "ss_gateway"]
    path.append("network")
    path += ["callee_sr"] if scenario.sr_at_endpoint else ["sr_gateway", "callee_overt"]
    path.append("metrics")
    return path
