"""
Run ledger: the structured audit trail of one pipeline run, written as JSON lines
to events.jsonl in the output directory.
"""

import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

from loguru import logger


class RunEventType(Enum):
    """Categories of run events"""
    RUN_START = "run_start"
    RUN_FINISH = "run_finish"

    STAGE_STARTED = "stage_started"
    STAGE_PASSED = "stage_passed"
    STAGE_FAILED = "stage_failed"
    STAGE_SKIPPED = "stage_skipped"

    ASSERTION = "assertion"
    FILE_WRITTEN = "file_written"
    CONFIG_LOADED = "config_loaded"


class RunSeverity(Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    CRITICAL = "critical"


@dataclass
class RunEvent:
    """Single ledger record"""
    timestamp: datetime
    event_type: RunEventType
    severity: RunSeverity
    stage: Optional[str]
    action: str
    details: Dict[str, Any] = field(default_factory=dict)
    run_id: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for JSON serialization"""
        data = asdict(self)
        data["timestamp"] = self.timestamp.isoformat()
        data["event_type"] = self.event_type.value
        data["severity"] = self.severity.value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunEvent":
        data = dict(data)
        data["timestamp"] = datetime.fromisoformat(data["timestamp"])
        data["event_type"] = RunEventType(data["event_type"])
        data["severity"] = RunSeverity(data["severity"])
        return cls(**data)


class RunLedger:
    """Buffered JSON-lines event log for one run"""

    def __init__(self, out_dir: Optional[str] = None, buffer_size: int = 50):
        """
        Args:
            out_dir: directory receiving events.jsonl; None keeps events in memory only
            buffer_size: number of events buffered before a flush
        """
        self.path = Path(out_dir) / "events.jsonl" if out_dir else None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
        self.buffer_size = buffer_size
        self.events_buffer: List[RunEvent] = []
        self.history: List[RunEvent] = []
        self.run_id = f"run_{datetime.now(timezone.utc).strftime('%Y%m%d_%H%M%S')}_{id(self) % 10000}"

    def log_event(self, event_type: RunEventType, action: str, severity: RunSeverity = RunSeverity.MEDIUM,
                  stage: Optional[str] = None, details: Optional[Dict[str, Any]] = None, **kwargs) -> RunEvent:
        details = dict(details or {})
        details.update(kwargs)
        event = RunEvent(timestamp=datetime.now(timezone.utc), event_type=event_type, severity=severity,
                         stage=stage, action=action, details=details, run_id=self.run_id)
        self.events_buffer.append(event)
        self.history.append(event)

        # failures reach disk immediately
        if severity in (RunSeverity.HIGH, RunSeverity.CRITICAL) or len(self.events_buffer) >= self.buffer_size:
            self.flush_buffer()
        return event

    def flush_buffer(self):
        """Append all buffered events to events.jsonl"""
        if self.path is not None and self.events_buffer:
            with self.path.open("a", encoding="utf-8") as fh:
                for event in self.events_buffer:
                    fh.write(json.dumps(event.to_dict(), default=str, sort_keys=True) + "\n")
        self.events_buffer.clear()

    def config_loaded(self, values: Dict[str, Any]):
        return self.log_event(RunEventType.CONFIG_LOADED, "Configuration loaded", RunSeverity.LOW, details=values)

    def run_started(self, stages: List[str]):
        return self.log_event(RunEventType.RUN_START, "Run started", RunSeverity.LOW, stages=list(stages))

    def run_finished(self, exit_code: int, failed: List[str]):
        severity = RunSeverity.MEDIUM if exit_code == 0 else RunSeverity.HIGH
        return self.log_event(RunEventType.RUN_FINISH, f"Run finished with exit code {exit_code}", severity,
                              exit_code=exit_code, failed=list(failed))

    def stage_started(self, stage: str):
        return self.log_event(RunEventType.STAGE_STARTED, f"Stage {stage} started", RunSeverity.LOW, stage=stage)

    def stage_finished(self, stage: str, passed: bool, details: Optional[Dict[str, Any]] = None):
        if passed:
            return self.log_event(RunEventType.STAGE_PASSED, f"Stage {stage} passed", RunSeverity.MEDIUM,
                                  stage=stage, details=details)
        return self.log_event(RunEventType.STAGE_FAILED, f"Stage {stage} failed", RunSeverity.HIGH,
                              stage=stage, details=details)

    def stage_skipped(self, stage: str, reason: str):
        return self.log_event(RunEventType.STAGE_SKIPPED, f"Stage {stage} skipped", RunSeverity.MEDIUM,
                              stage=stage, reason=reason)

    def assertion(self, stage: str, name: str, passed: bool, **values):
        severity = RunSeverity.MEDIUM if passed else RunSeverity.HIGH
        return self.log_event(RunEventType.ASSERTION, name, severity, stage=stage, passed=passed, **values)

    def file_written(self, stage: Optional[str], path: str):
        return self.log_event(RunEventType.FILE_WRITTEN, f"Wrote {path}", RunSeverity.LOW, stage=stage, path=path)

    def read_events(self) -> List[RunEvent]:
        """All events of this run that reached events.jsonl"""
        self.flush_buffer()
        if self.path is None or not self.path.exists():
            return list(self.history)
        events = []
        with self.path.open(encoding="utf-8") as fh:
            for line in fh:
                try:
                    events.append(RunEvent.from_dict(json.loads(line)))
                except (ValueError, KeyError) as e:
                    logger.warning(f"Skipping malformed ledger line: {e}")
        return [e for e in events if e.run_id == self.run_id]

    def statistics(self) -> Dict[str, Any]:
        """Counts by event type and severity for the run summary"""
        by_type: Dict[str, int] = {}
        by_severity: Dict[str, int] = {}
        for event in self.history:
            by_type[event.event_type.value] = by_type.get(event.event_type.value, 0) + 1
            by_severity[event.severity.value] = by_severity.get(event.severity.value, 0) + 1
        return {"total_events": len(self.history), "events_by_type": by_type, "events_by_severity": by_severity}
