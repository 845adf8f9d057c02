"""
Base pipeline stage and the orchestrator that runs stages in order.
"""

import time
from abc import ABC, abstractmethod
from typing import Any, Dict, Optional, Sequence, Set

from loguru import logger

from src.config import ExperimentConfig
from src.field_store import FieldStore
from src.models import StageStatus
from src.report_writer import ReportWriter
from src.run_ledger import RunLedger
from src.state_manager import StateManager


class BaseStage(ABC):
    """Base class for all pipeline stages"""

    requires: Sequence[str] = ()
    operations: Sequence[str] = ()

    def __init__(self, name: str, config: ExperimentConfig, state_manager: StateManager, writer: ReportWriter,
                 store: FieldStore, ledger: RunLedger):
        self.name = name
        self.config = config
        self.state_manager = state_manager
        self.writer = writer
        self.store = store
        self.ledger = ledger
        self.only: Optional[Set[str]] = None
        self.state_manager.update_stage_state(self.name, StageStatus.PENDING)

    @abstractmethod
    def process(self, input_data: Dict[str, Any]) -> Dict[str, Any]:
        """Main processing method - must be implemented by each stage"""

    def wants(self, operation: str) -> bool:
        """False when the run singled out other operations; the stage core always runs"""
        return self.only is None or operation in self.only

    def update_state(self, status: StageStatus):
        self.state_manager.update_stage_state(self.name, status)

    def check(self, name: str, passed: bool, **values) -> bool:
        """Record a named assertion for this stage"""
        key = f"{self.name}.{name}"
        self.state_manager.record_assertion(key, passed)
        self.ledger.assertion(self.name, key, bool(passed), **values)
        return bool(passed)

    def table(self, file: str, frame) -> None:
        self.writer.table(f"{self.name}/{file}", frame)
        self.ledger.file_written(self.name, f"{self.name}/{file}")

    def summary(self, values: Dict[str, Any]) -> None:
        self.writer.summary(f"{self.name}/summary.txt", values)
        self.ledger.file_written(self.name, f"{self.name}/summary.txt")

    def run(self, input_data: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """Run process() with status bookkeeping; failures come back as error dicts"""
        self.update_state(StageStatus.RUNNING)
        self.ledger.stage_started(self.name)
        logger.info(f"Stage {self.name} started")
        start = time.perf_counter()
        try:
            result = self.process(input_data or {})
            failed = [k for k, v in self.state_manager.failed_assertions().items() if k.startswith(f"{self.name}.")]
            status = StageStatus.FAILED if failed else StageStatus.PASSED
            result.update({"stage": self.name, "status": status.value, "failed_assertions": failed})
        except Exception as e:
            logger.error(f"Stage {self.name} failed: {type(e).__name__}: {e}")
            status = StageStatus.FAILED
            details = e.to_dict() if hasattr(e, "to_dict") else {"error": type(e).__name__, "message": str(e)}
            result = {"stage": self.name, "status": status.value, "error": str(e), "error_details": details}
        self.update_state(status)
        self.state_manager.record_result(self.name, result)
        self.ledger.stage_finished(self.name, status == StageStatus.PASSED,
                                   {"seconds": round(time.perf_counter() - start, 3)})
        logger.info(f"Stage {self.name} {status.value} in {time.perf_counter() - start:.2f}s")
        return result


class StageOrchestrator:
    """Runs registered stages in order, skipping those whose prerequisites did not pass"""

    def __init__(self, state_manager: StateManager, ledger: RunLedger):
        self.state_manager = state_manager
        self.ledger = ledger
        self.stages: Dict[str, BaseStage] = {}

    def register_stage(self, stage: BaseStage):
        self.stages[stage.name] = stage
        logger.debug(f"Registered stage: {stage.name}")

    def run(self, order: Sequence[str]) -> Dict[str, Dict[str, Any]]:
        results: Dict[str, Dict[str, Any]] = {}
        for name in order:
            stage = self.stages[name]
            blocked = [r for r in stage.requires
                       if self.state_manager.get_stage_state(r) not in (StageStatus.PASSED, StageStatus.FAILED)
                       or "error" in results.get(r, {"error": "not run"})]
            if blocked:
                reason = f"prerequisite {', '.join(blocked)} unavailable"
                logger.warning(f"Skipping stage {name}: {reason}")
                self.state_manager.update_stage_state(name, StageStatus.SKIPPED)
                self.ledger.stage_skipped(name, reason)
                results[name] = {"stage": name, "status": StageStatus.SKIPPED.value, "reason": reason}
                continue
            results[name] = stage.run()
        return results

    def get_stage_status(self) -> Dict[str, str]:
        return {name: (self.state_manager.get_stage_state(name) or StageStatus.PENDING).value
                for name in self.stages}
