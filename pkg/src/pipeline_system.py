"""
Pipeline system that wires configuration, stages and report output together for one run.
"""

from typing import Any, Dict, Iterable, List, Optional

from loguru import logger

from src.base_stage import BaseStage, StageOrchestrator
from src.config import STAGE_ORDER, ExperimentConfig
from src.field_store import FieldStore
from src.models import StageStatus
from src.report_writer import ReportWriter
from src.run_ledger import RunLedger
from src.stages import (EstimatesStage, InequalityStage, RegularityStage, SolveStage, TransformStage,
                        ValidationStage)
from src.state_manager import StateManager

STAGE_CLASSES = [ValidationStage, TransformStage, SolveStage, InequalityStage, EstimatesStage, RegularityStage]


class PipelineSystem:
    """
    One experiment run: builds the stages for a config, runs the requested ones (plus
    their prerequisites) and writes summary.txt, plot.gp and run_state.json under cfg.out.
    """

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.state_manager = StateManager(config.out)
        self.writer = ReportWriter(config.out)
        self.store = FieldStore(config.out)
        self.ledger = RunLedger(config.out)
        self.orchestrator = StageOrchestrator(self.state_manager, self.ledger)

        self.stages: Dict[str, BaseStage] = {}
        self._initialize_stages()
        self.ledger.config_loaded(config.model_dump(mode="json"))
        logger.info(f"Pipeline initialized: potential={config.potential.value}, grid={config.grid}, "
                    f"out={config.out}")

    def _initialize_stages(self):
        for stage_class in STAGE_CLASSES:
            stage = stage_class(self.config, self.state_manager, self.writer, self.store, self.ledger)
            self.stages[stage.name] = stage
            self.orchestrator.register_stage(stage)

    def stage_closure(self, requested: Iterable[str]) -> List[str]:
        """Requested stages plus everything they transitively require, in pipeline order"""
        needed = set()
        pending = list(requested)
        while pending:
            name = pending.pop()
            if name not in self.stages:
                raise KeyError(f"unknown stage {name!r}")
            if name not in needed:
                needed.add(name)
                pending.extend(self.stages[name].requires)
        return [name for name in STAGE_ORDER if name in needed]

    def operations(self) -> List[str]:
        return [op for stage in self.stages.values() for op in stage.operations]

    def run(self, stages: Optional[Iterable[str]] = None, only: Optional[Iterable[str]] = None) -> Dict[str, Any]:
        """
        Run the requested stages and their prerequisites. `only` singles out operations;
        every other optional operation is skipped while stage cores still run.
        """
        order = self.stage_closure(stages if stages is not None else self.config.stages)
        selected = set(only) if only is not None else None
        unknown = sorted((selected or set()) - set(self.operations()))
        if unknown:
            raise KeyError(f"unknown operations {unknown}")
        for stage in self.stages.values():
            stage.only = selected
        logger.info(f"Running stages: {', '.join(order)}" + (f" (only {sorted(selected)})" if selected else ""))
        self.ledger.run_started(order)
        results = self.orchestrator.run(order)

        failed_stages = [name for name, r in results.items() if "error" in r]
        skipped_stages = [name for name, r in results.items() if r.get("status") == StageStatus.SKIPPED.value]
        failed_assertions = sorted(self.state_manager.failed_assertions())
        passed = sum(1 for v in self.state_manager.get_run_state().assertions.values() if v)
        exit_code = 0 if not failed_stages and not skipped_stages and not failed_assertions else 1

        overview: Dict[str, Any] = {"potential": self.config.potential.value, "grid": self.config.grid,
                                    "seed": self.config.seed}
        overview.update({f"stage_{name}": results[name]["status"] for name in order})
        overview.update({"assertions_passed": passed, "assertions_failed": len(failed_assertions),
                         "failed": failed_assertions, "exit_code": exit_code})
        self.writer.summary("summary.txt", overview)
        plot = self.writer.plot_script()
        if plot is not None:
            self.ledger.file_written(None, plot.name)

        self.state_manager.save()
        self.ledger.run_finished(exit_code, failed_stages + skipped_stages + failed_assertions)
        self.ledger.flush_buffer()

        if exit_code == 0:
            logger.info(f"Pipeline finished: {passed} assertions passed")
        else:
            logger.error(f"Pipeline finished with failures: stages {failed_stages + skipped_stages}, "
                         f"assertions {failed_assertions}")
        return {
            "out": self.config.out,
            "stages": results,
            "stage_status": self.orchestrator.get_stage_status(),
            "failed_stages": failed_stages,
            "skipped_stages": skipped_stages,
            "failed_assertions": failed_assertions,
            "files": list(self.writer.written),
            "ledger": self.ledger.statistics(),
            "exit_code": exit_code,
        }
