import pytest

from main import COMMAND_OPERATIONS, COMMAND_STAGES, build_parser, main


@pytest.mark.parametrize("argv", [
    ["--grid", "33", "--seed", "4", "holder"],
    ["holder", "--grid", "33", "--seed", "4"],
])
def test_flags_either_side_of_command(argv):
    args = build_parser().parse_args(argv)
    assert args.command == "holder"
    assert args.grid == 33 and args.seed == 4
    assert args.out is None


def test_unknown_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["plot"])


def test_every_command_maps_to_stages():
    assert COMMAND_STAGES["compare-paths"] == ["solve"]
    assert COMMAND_STAGES["degiorgi"] == COMMAND_STAGES["maxprinciple"] == ["estimates"]
    assert all(COMMAND_STAGES.values())


def test_validate_command(tmp_path):
    out = tmp_path / "run"
    assert main(["validate", "--grid", "33", "--out", str(out), "--log-level", "WARNING"]) == 0
    assert (out / "validate" / "summary.txt").exists()
    assert (out / "run.log").exists()


def test_rejected_config_exits_with_two(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = red\n")
    assert main(["--config", str(bad), "validate", "--out", str(tmp_path / "run")]) == 2


def test_paired_commands_select_their_own_operation():
    assert COMMAND_OPERATIONS["validate"] is None and COMMAND_OPERATIONS["pipeline"] is None
    for command in ("solve", "compare-paths", "maxprinciple", "degiorgi", "sobolev", "moser", "holder", "harnack"):
        assert COMMAND_OPERATIONS[command] == [command]


@pytest.mark.parametrize("command, own, sibling", [
    ("solve", "solve/solver_stats.csv", "solve/paths.csv"),
    ("compare-paths", "solve/paths.csv", "solve/solver_stats.csv"),
    ("maxprinciple", "estimates/weak_max_family.csv", "estimates/level_profile.csv"),
    ("degiorgi", "estimates/level_profile.csv", "estimates/weak_max.csv"),
    ("sobolev", "inequalities/sobolev.csv", "inequalities/moser.csv"),
    ("moser", "inequalities/moser.csv", "inequalities/sobolev.csv"),
    ("holder", "regularity/holder.csv", "regularity/harnack_family.csv"),
    ("harnack", "regularity/harnack.csv", "regularity/holder.csv"),
])
def test_paired_commands_write_their_own_tables(tmp_path, command, own, sibling):
    cfg = tmp_path / "small.cfg"
    cfg.write_text("grid = 65\nsobolev_trials = 3\nfamily_size = 2\n")
    out = tmp_path / "run"
    assert main(["--config", str(cfg), command, "--out", str(out), "--log-level", "WARNING"]) == 0
    assert (out / own).exists()
    assert not (out / sibling).exists()
