import json

from src.run_ledger import RunEventType, RunLedger, RunSeverity


def test_failures_reach_disk_immediately(out_dir):
    ledger = RunLedger(str(out_dir))
    ledger.stage_started("solve")
    assert not (out_dir / "events.jsonl").exists()
    ledger.stage_finished("solve", passed=False, details={"error": "NoConvergence"})
    lines = (out_dir / "events.jsonl").read_text().splitlines()
    assert len(lines) == 2
    record = json.loads(lines[1])
    assert record["event_type"] == "stage_failed"
    assert record["severity"] == "high"
    assert record["details"] == {"error": "NoConvergence"}


def test_buffer_flushes_when_full(out_dir):
    ledger = RunLedger(str(out_dir), buffer_size=3)
    for name in ("a", "b", "c"):
        ledger.file_written("transform", f"{name}.csv")
    assert len((out_dir / "events.jsonl").read_text().splitlines()) == 3
    assert ledger.events_buffer == []


def test_read_events_filters_by_run(out_dir):
    first = RunLedger(str(out_dir))
    first.assertion("transform", "area_identity", True, lhs=1.0, rhs=1.0)
    first.flush_buffer()
    second = RunLedger(str(out_dir))
    second.run_id = first.run_id + "_next"
    second.stage_skipped("regularity", "validate failed")
    events = second.read_events()
    assert [e.event_type for e in events] == [RunEventType.STAGE_SKIPPED]
    assert events[0].details["reason"] == "validate failed"


def test_malformed_lines_are_skipped(out_dir):
    ledger = RunLedger(str(out_dir))
    ledger.stage_started("validate")
    ledger.flush_buffer()
    with (out_dir / "events.jsonl").open("a") as fh:
        fh.write("not json\n")
    ledger.stage_finished("validate", passed=True)
    assert len(ledger.read_events()) == 2


def test_memory_only_ledger():
    ledger = RunLedger()
    ledger.log_event(RunEventType.RUN_START, "Run started", RunSeverity.LOW)
    ledger.assertion("solve", "residual", False, residual=1e-3)
    assert [e.action for e in ledger.read_events()] == ["Run started", "residual"]
    stats = ledger.statistics()
    assert stats["total_events"] == 2
    assert stats["events_by_type"] == {"run_start": 1, "assertion": 1}
    assert stats["events_by_severity"] == {"low": 1, "high": 1}


def test_run_bracketing_events(out_dir):
    ledger = RunLedger(str(out_dir))
    ledger.config_loaded({"grid": 65, "seed": 0})
    ledger.run_started(["validate", "solve"])
    assert not (out_dir / "events.jsonl").exists()
    ledger.run_finished(1, ["solve.energy_minimal"])
    events = ledger.read_events()
    assert [e.event_type for e in events] == [RunEventType.CONFIG_LOADED, RunEventType.RUN_START,
                                              RunEventType.RUN_FINISH]
    assert events[0].details == {"grid": 65, "seed": 0}
    assert events[1].details["stages"] == ["validate", "solve"]
    assert events[2].severity == RunSeverity.HIGH
    assert events[2].details == {"exit_code": 1, "failed": ["solve.energy_minimal"]}
