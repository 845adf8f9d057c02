"""
Run state management: stage statuses, per-stage results and assertions, plus the
in-memory artifacts (potential, maps, solutions) that later stages consume.
"""

import json
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
from loguru import logger

from src.models import RunState, StageStatus


class StateManager:
    """Centralized state for one pipeline run; persisted as run_state.json"""

    def __init__(self, out_dir: Optional[str] = None):
        self.state = RunState()
        self.artifacts: Dict[str, Any] = {}
        self.path = Path(out_dir) / "run_state.json" if out_dir else None

    def get_run_state(self) -> RunState:
        return self.state

    def update_stage_state(self, stage: str, status: StageStatus):
        self.state.stage_states[stage] = status
        self.state.update_timestamp()
        logger.debug(f"Stage {stage} -> {status.value}")

    def get_stage_state(self, stage: str) -> Optional[StageStatus]:
        return self.state.stage_states.get(stage)

    def record_result(self, stage: str, result: Dict[str, Any]):
        self.state.results[stage] = result
        self.state.update_timestamp()

    def record_assertion(self, name: str, passed: bool):
        self.state.assertions[name] = bool(passed)
        if not passed:
            logger.warning(f"Assertion failed: {name}")

    def failed_assertions(self) -> Dict[str, bool]:
        return {k: v for k, v in self.state.assertions.items() if not v}

    def set_artifact(self, name: str, value: Any):
        self.artifacts[name] = value

    def get_artifact(self, name: str, default: Any = None) -> Any:
        return self.artifacts.get(name, default)

    def save(self):
        """Write run_state.json (statuses, results and assertions; artifacts stay in memory)"""
        if self.path is None:
            return
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text(json.dumps(self.state.model_dump(mode="python"), indent=2, sort_keys=True,
                                             default=_plain))
            logger.debug(f"Run state saved to {self.path}")
        except (OSError, TypeError, ValueError) as e:
            logger.error(f"Error saving run state: {e}")


def _plain(value: Any) -> Any:
    """JSON fallback for numpy scalars, arrays, enums and timestamps inside stage results"""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if hasattr(value, "value"):
        return value.value
    return str(value)
