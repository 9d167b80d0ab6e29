"""Proactive control scheme over a simulated multi-slice radio access network."""

from .config import (
    BUNDLED_SCRIPTS,
    CQI_EFFICIENCY,
    FIELD_SETS,
    EnvConfig,
    GnbSpec,
    LoopConfig,
    ScenarioScript,
    ScriptEvent,
    SlaSpec,
    SliceSpec,
    load_script,
)
from .control import DeployedModel, UEView, allocate, decide_action, predict_step, slice_order
from .env import ActionEvent, EnvState, env_init, env_step, monitor_collect
from .loop import RunResult, run_loop, with_script_overrides
from .sla import PenaltyLedger, SlaVerdict, sla_audit

__all__ = [
    "BUNDLED_SCRIPTS",
    "CQI_EFFICIENCY",
    "FIELD_SETS",
    "ActionEvent",
    "DeployedModel",
    "EnvConfig",
    "EnvState",
    "GnbSpec",
    "LoopConfig",
    "PenaltyLedger",
    "RunResult",
    "ScenarioScript",
    "ScriptEvent",
    "SlaSpec",
    "SlaVerdict",
    "SliceSpec",
    "UEView",
    "allocate",
    "decide_action",
    "env_init",
    "env_step",
    "load_script",
    "monitor_collect",
    "predict_step",
    "run_loop",
    "sla_audit",
    "slice_order",
    "with_script_overrides",
]
