from .scenarios import (ScenarioResult, TmaTranscript, measure_hook_overhead,
                        scenario_network_overhead, scenario_proxy_overhead,
                        scenario_session_scaling, scenario_tma_no_bug_control,
                        scenario_tma_walkthrough)

__all__ = [
    "ScenarioResult", "TmaTranscript", "measure_hook_overhead",
    "scenario_network_overhead", "scenario_proxy_overhead",
    "scenario_session_scaling", "scenario_tma_no_bug_control",
    "scenario_tma_walkthrough",
]
