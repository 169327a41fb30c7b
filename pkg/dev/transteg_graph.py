from langgraph.graph import StateGraph, START, END
from transteg_state import CallState, ScenarioConfig
from transteg_nodes import (
    caller_overt, caller_ss, ss_gateway, network, sr_gateway, callee_overt, callee_sr, metrics
)
from transteg_routing import caller_router, receiver_router

def build_call_graph():
    """Build the call pipeline: caller -> [SS] -> network -> [SR] -> callee -> metrics."""

    graph_builder = StateGraph(CallState)

    # =============================================================================
    # ADD ALL NODES
    # =============================================================================

    # Caller side
    graph_builder.add_node("caller_overt", caller_overt)
    graph_builder.add_node("caller_ss", caller_ss)
    graph_builder.add_node("ss_gateway", ss_gateway)

    # Transport
    graph_builder.add_node("network", network)

    # Callee side
    graph_builder.add_node("sr_gateway", sr_gateway)
    graph_builder.add_node("callee_overt", callee_overt)
    graph_builder.add_node("callee_sr", callee_sr)

    graph_builder.add_node("metrics", metrics)

    # =============================================================================
    # ADD EDGES
    # =============================================================================

    # SS placement
    graph_builder.add_conditional_edges(
        START,
        caller_router,
        {
            "caller_ss": "caller_ss",
            "caller_overt": "caller_overt"
        }
    )
    graph_builder.add_edge("caller_overt", "ss_gateway")
    graph_builder.add_edge("caller_ss", "network")
    graph_builder.add_edge("ss_gateway", "network")

    # SR placement
    graph_builder.add_conditional_edges(
        "network",
        receiver_router,
        {
            "sr_gateway": "sr_gateway",
            "callee_sr": "callee_sr"
        }
    )
    graph_builder.add_edge("sr_gateway", "callee_overt")
    graph_builder.add_edge("callee_overt", "metrics")
    graph_builder.add_edge("callee_sr", "metrics")

    graph_builder.add_edge("metrics", END)

    # =============================================================================
    # COMPILE GRAPH
    # =============================================================================

    # No checkpointer: call state holds numpy buffers and live codec objects
    return graph_builder.compile()

def describe_call_graph() -> str:
    """Mermaid rendering of the compiled graph."""
    return build_call_graph().get_graph().draw_mermaid()

# Example usage
if __name__ == "__main__":
    from transteg_harness import run_scenario

    config = ScenarioConfig(duration_s=10.0)
    print(f"🚀 Simulating {config.scenario.value} call {config.overt.value} -> {config.covert.value}")

    result = run_scenario(config)

    print("\n=== CALL METRICS ===")
    print(f"Packets: {result.packets}")
    print(f"Steganographic throughput: {result.achieved_steg_kbps:.2f} kbps")
    print(f"Bit errors: {result.bit_errors}")
    print(f"Segmental SNR: {result.segmental_snr_db}")
