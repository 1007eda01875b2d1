"""
Tests the weakmeas command line: exit codes, stdout records and output files
"""

import json

import numpy as np
import pytest

import helpers
from cli import main, parse_observable, parse_state
from error import RejectedInputError
from report import read_csv

AMPLIFICATION_ALPHA = 178.854


def run(capsys, *argv):
    """Runs main and returns (exit code, stdout text)."""
    code = main(list(argv))
    return code, capsys.readouterr().out


def aav_config(tmp_path, scenario: dict, **extra) -> str:
    """Writes an aav config whose output goes to tmp_path/out."""
    document = {"scenario": scenario, "output_dir": str(tmp_path / "out")}
    document.update(extra)
    return helpers.write_config(tmp_path, document)


def flowlines_config(tmp_path, options: dict, beams=None) -> str:
    """Writes a flowlines config whose output goes to tmp_path/out."""
    document = {"output_dir": str(tmp_path / "out"), "subcommand_options": options}
    if beams is not None:
        document["beams"] = beams
    return helpers.write_config(tmp_path, document)


def test_parse_state():
    """Named states and comma-separated amplitudes with i or j"""
    assert parse_state("1,1").normalize().isclose(parse_state("x+"))
    assert parse_state("1, i").amplitudes[1] == 1j
    assert parse_state("0.5,-2j").amplitudes[1] == -2j

    with pytest.raises(RejectedInputError):
        parse_state("1,banana")


def test_parse_observable():
    """Axis labels and unit vectors"""
    assert parse_observable("z").eigenvalues == (1.0, -1.0)
    assert np.allclose(parse_observable("0,0,1").matrix, parse_observable("z").matrix)

    with pytest.raises(RejectedInputError):
        parse_observable("1,1,0")


def test_weakvalue_from_alpha(capsys):
    """--alpha-deg 120 postselected on x reads tan(60 degrees)"""
    code, out = run(capsys, "weakvalue", "--alpha-deg", "120", "--post", "x", "--obs", "z")
    record = json.loads(out)

    assert code == 0
    assert record["re"] == pytest.approx(1.7320508, abs=1e-6)
    assert record["im"] == 0.0
    assert record["overlap_abs"] == pytest.approx(0.5, abs=1e-12)


def test_weakvalue_imaginary(capsys):
    """Explicit states x+ and y+ give a weak value of i"""
    code, out = run(capsys, "weakvalue", "--pre", "x+", "--post", "1,i", "--obs", "z")
    record = json.loads(out)

    assert code == 0
    assert record["re"] == pytest.approx(0.0, abs=1e-12)
    assert record["im"] == pytest.approx(1.0, abs=1e-12)


def test_weakvalue_orthogonal_exits_three(capsys):
    """Orthogonal pre/post pairs exit 3 with an error record"""
    code, out = run(capsys, "weakvalue", "--pre", "1,0", "--post", "0,1", "--obs", "z")
    record = json.loads(out)

    assert code == 3
    assert record["error"] == "orthogonal postselection"
    assert record["type"] == "OrthogonalPostselectionError"


@pytest.mark.parametrize(
    "argv",
    [
        ("weakvalue", "--alpha-deg", "abc"),
        ("weakvalue", "--alpha-deg", "10", "--pre", "z"),
        ("weakvalue", "--pre", "q+"),
        ("weakvalue", "--alpha-deg", "10", "--obs", "1,1,1"),
        ("abl", "--pre", "x"),
        ("aav", "bogus", "--config", "c.json"),
        ("nonsense",),
    ],
)
def test_malformed_arguments_exit_two(capsys, argv):
    """Parse and validation failures exit 2"""
    code, _ = run(capsys, *argv)

    assert code == 2


@pytest.mark.parametrize(
    "pre, post, obs, expected",
    [
        ("x+", "y+", "z", ["1.0,0.5", "-1.0,0.5"]),
        ("z+", "x+", "z", ["1.0,1", "-1.0,0"]),
        ("z+", "z-", "x", ["1.0,0.5", "-1.0,0.5"]),
    ],
)
def test_abl_rows(capsys, pre, post, obs, expected):
    """ABL CSV rows sorted by eigenvalue, descending"""
    code, out = run(capsys, "abl", "--pre", pre, "--post", post, "--obs", obs)

    assert code == 0
    assert out.splitlines() == ["eigenvalue,probability"] + expected


def test_abl_impossible_sequence_exits_three(capsys):
    """z+ to z- through sigma_z has no channel"""
    code, out = run(capsys, "abl", "--pre", "z+", "--post", "z-", "--obs", "z")

    assert code == 3
    assert json.loads(out)["error"] == "impossible sequence"


def test_aav_exact(capsys, tmp_path):
    """exact writes stats.json with the readout and analytic weak value"""
    config = aav_config(tmp_path, {"alpha_deg": 120, "g": 0.005})

    code, _ = run(capsys, "aav", "exact", "--config", config)
    stats = json.loads((tmp_path / "out" / "stats.json").read_text(encoding="utf-8"))

    assert code == 0
    assert stats["shift_over_g"] == pytest.approx(1.732, abs=0.02)
    assert stats["analytic_weak_value"]["re"] == pytest.approx(1.7320508, abs=1e-6)
    assert stats["manifest"]["command"] == "aav exact"
    assert stats["manifest"]["seed"] == 0
    assert len(stats["manifest"]["config_digest"]) == 16


def test_aav_decompose(capsys, tmp_path):
    """decompose at the amplification angle is dominated by interference"""
    config = aav_config(tmp_path, {"alpha_deg": AMPLIFICATION_ALPHA, "g": 0.001})

    code, _ = run(capsys, "aav", "decompose", "--config", config)
    stats = json.loads((tmp_path / "out" / "stats.json").read_text(encoding="utf-8"))

    assert code == 0
    assert 98.0 <= stats["interference_term"] / stats["g"] <= 102.0
    assert abs(stats["branch_term"]) <= stats["g"]
    assert stats["bound_check"] is True


def test_aav_ensemble_reruns_are_identical(capsys, tmp_path):
    """Two ensemble runs with seed 42 differ only in the timestamp"""
    config = aav_config(
        tmp_path, {"alpha_deg": 120, "g": 0.01, "n_trials": 20_000, "seed": 42}
    )
    out = tmp_path / "out"

    assert run(capsys, "aav", "ensemble", "--config", config)[0] == 0
    first_stats = (out / "stats.json").read_text(encoding="utf-8")
    first_screen = (out / "screen.csv").read_text(encoding="utf-8")

    assert run(capsys, "aav", "ensemble", "--config", config)[0] == 0
    second_stats = (out / "stats.json").read_text(encoding="utf-8")
    second_screen = (out / "screen.csv").read_text(encoding="utf-8")

    assert helpers.without_timestamp(first_stats) == helpers.without_timestamp(second_stats)
    assert helpers.without_timestamp(first_screen) == helpers.without_timestamp(
        second_screen
    )
    assert "\r" not in first_screen


def test_aav_ensemble_outputs(capsys, tmp_path):
    """The screen histogram accounts for every postselected trial"""
    config = aav_config(
        tmp_path, {"alpha_deg": 90, "g": 0.01, "n_trials": 20_000, "seed": 7}
    )

    assert run(capsys, "aav", "ensemble", "--config", config)[0] == 0

    stats = json.loads((tmp_path / "out" / "stats.json").read_text(encoding="utf-8"))
    manifest, rows = read_csv(tmp_path / "out" / "screen.csv")
    binned = sum(int(row["count"]) for row in rows)

    assert len(rows) == 60
    assert manifest.seed == 7
    assert manifest.command == "aav ensemble"
    assert binned + stats["histogram_underflow"] + stats["histogram_overflow"] == (
        stats["n_postselected"]
    )
    assert abs(stats["wv_estimate"]["re"] - 1.0) <= 3 * stats["wv_stderr"]


def test_aav_sweep(capsys, tmp_path):
    """sweep writes one CSV row per alpha and the monotonicity diagnostics"""
    alphas = [90, 120, 150, 170, AMPLIFICATION_ALPHA]
    config = aav_config(
        tmp_path,
        {"alpha_deg": 90, "g": 0.001},
        subcommand_options={"alphas": alphas},
    )

    code, _ = run(capsys, "aav", "sweep", "--config", config)
    _, rows = read_csv(tmp_path / "out" / "sweep.csv")
    stats = json.loads((tmp_path / "out" / "stats.json").read_text(encoding="utf-8"))

    assert code == 0
    assert list(rows[0]) == [
        "alpha_deg",
        "overlap_abs",
        "aw_analytic",
        "shift_over_g",
        "post_prob",
        "weak_flag",
    ]
    assert [float(row["aw_analytic"]) for row in rows] == pytest.approx(
        [1.0, 1.732, 3.732, 11.43, 100.0], rel=0.005
    )
    assert rows[0]["weak_flag"] == "1"
    assert stats["monotonicity"]["shift_increasing"] is True
    assert stats["monotonicity"]["probability_decreasing"] is True
    assert stats["monotonicity"]["n_rows"] == 5


def test_aav_sweep_marks_failed_rows(capsys, tmp_path):
    """An orthogonal alpha is a failure row, not a failed run"""
    config = aav_config(
        tmp_path, {"alpha_deg": 90, "g": 0.001}, subcommand_options={"alphas": [120, 180]}
    )

    code, _ = run(capsys, "aav", "sweep", "--config", config)
    _, rows = read_csv(tmp_path / "out" / "sweep.csv")

    assert code == 0
    assert rows[1]["weak_flag"] == "failed"
    assert rows[1]["aw_analytic"] == ""


def test_aav_sweep_non_finite_alpha_is_a_failed_row(capsys, tmp_path):
    """A NaN alpha in the config fails one row; the sweep still exits 0"""
    config = aav_config(
        tmp_path,
        {"alpha_deg": 90, "g": 0.001},
        subcommand_options={"alphas": [120, float("nan")]},
    )

    code, _ = run(capsys, "aav", "sweep", "--config", config)
    _, rows = read_csv(tmp_path / "out" / "sweep.csv")

    assert code == 0
    assert len(rows) == 2
    assert rows[1]["weak_flag"] == "failed"
    assert rows[1]["alpha_deg"] == ""


def test_aav_sweep_needs_alphas(capsys, tmp_path):
    """sweep without alphas is a configuration error"""
    config = aav_config(tmp_path, {"alpha_deg": 90, "g": 0.001})

    code, out = run(capsys, "aav", "sweep", "--config", config)

    assert code == 2
    assert json.loads(out)["offending_keys"] == ["subcommand_options.alphas"]


@pytest.mark.parametrize(
    "scenario, extra, offending",
    [
        ({"alpha_deg": 120, "g": 0.01, "gg": 1}, {}, ["gg"]),
        ({"alpha_deg": 120, "g": 0.01}, {"extra": 1, "another": 2}, ["another", "extra"]),
        (
            {"alpha_deg": 120, "g": 0.01},
            {"subcommand_options": {"alphas": [1]}},
            ["subcommand_options.alphas"],
        ),
        ({"alpha_deg": 120}, {}, ["g"]),
    ],
)
def test_aav_schema_violations_exit_two(capsys, tmp_path, scenario, extra, offending):
    """Unknown or missing keys exit 2 and are listed"""
    config = aav_config(tmp_path, scenario, **extra)

    code, out = run(capsys, "aav", "exact", "--config", config)
    record = json.loads(out)

    assert code == 2
    assert record["error"] == "invalid configuration"
    assert record["offending_keys"] == offending


def test_aav_missing_config_file_exits_two(capsys, tmp_path):
    """A config path that does not exist is a usage error"""
    code, _ = run(capsys, "aav", "exact", "--config", str(tmp_path / "missing.json"))

    assert code == 2


def test_aav_unusable_output_dir_exits_two(capsys, tmp_path):
    """An output_dir that cannot be created is a configuration error"""
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory", encoding="utf-8")
    config = aav_config(
        tmp_path, {"alpha_deg": 120, "g": 0.01}, output_dir=str(blocker / "out")
    )

    code, out = run(capsys, "aav", "exact", "--config", config)
    record = json.loads(out)

    assert code == 2
    assert record["offending_keys"] == ["output_dir"]


def test_aav_unwritable_output_file_exits_two(capsys, tmp_path):
    """A stats.json path occupied by a directory is a configuration error"""
    (tmp_path / "out" / "stats.json").mkdir(parents=True)
    config = aav_config(tmp_path, {"alpha_deg": 120, "g": 0.01})

    code, out = run(capsys, "aav", "decompose", "--config", config)

    assert code == 2
    assert json.loads(out)["offending_keys"] == ["output_dir"]


def test_flowlines_unwritable_output_file_exits_two(capsys, tmp_path):
    """lines.csv occupied by a directory is reported instead of raised"""
    (tmp_path / "out" / "lines.csv").mkdir(parents=True)
    config = flowlines_config(tmp_path, {"start_xs": [1.0], "z1": 1.0, "n_stations": 3})

    code, out = run(capsys, "flowlines", "--config", config)

    assert code == 2
    assert json.loads(out)["offending_keys"] == ["output_dir"]


def test_aav_failed_postselection_exits_three(capsys, tmp_path):
    """Postselecting x+ after x- with a vanishing kick is impossible"""
    config = aav_config(tmp_path, {"alpha_deg": 180, "g": 1e-9})

    code, out = run(capsys, "aav", "exact", "--config", config)

    assert code == 3
    assert json.loads(out)["error"] == "postselection failed"


def test_aav_invalid_thread_setting_exits_two(capsys, tmp_path, monkeypatch):
    """A malformed WEAKMEAS_THREADS is rejected, not ignored"""
    monkeypatch.setenv("WEAKMEAS_THREADS", "many")
    config = aav_config(tmp_path, {"alpha_deg": 120, "g": 0.01, "n_trials": 100})

    code, out = run(capsys, "aav", "ensemble", "--config", config)

    assert code == 2
    assert json.loads(out)["offending_keys"] == ["WEAKMEAS_THREADS"]


def test_flowlines_default_starts(capsys, tmp_path):
    """Default starts give 21 lines and the axis line stays put"""
    config = flowlines_config(tmp_path, {"z1": 5.0, "n_stations": 11})

    code, _ = run(capsys, "flowlines", "--config", config)
    manifest, rows = read_csv(tmp_path / "out" / "lines.csv")
    _, errors = read_csv(tmp_path / "out" / "errors.csv")

    assert code == 0
    assert manifest.seed is None
    assert errors == []
    assert {row["line_id"] for row in rows} == {str(i) for i in range(21)}

    axis = [float(row["x"]) for row in rows if row["line_id"] == "10"]
    assert len(axis) == 11
    assert max(abs(x) for x in axis) <= 1e-8


def test_flowlines_rows_are_grouped_and_ordered(capsys, tmp_path):
    """Rows come grouped by line with z ascending, and lines never cross"""
    config = flowlines_config(tmp_path, {"start_xs": [3, -3, 1], "z1": 5.0, "n_stations": 6})

    assert run(capsys, "flowlines", "--config", config)[0] == 0
    _, rows = read_csv(tmp_path / "out" / "lines.csv")

    by_line = {}
    for row in rows:
        by_line.setdefault(int(row["line_id"]), []).append(row)

    assert [float(by_line[i][0]["start_x"]) for i in range(3)] == [-3.0, 1.0, 3.0]

    for line in by_line.values():
        zs = [float(row["z"]) for row in line]
        assert zs == sorted(zs)

    for station in range(6):
        xs = [float(by_line[i][station]["x"]) for i in range(3)]
        assert xs == sorted(xs)


def test_flowlines_empty_start_list_exits_two(capsys, tmp_path):
    """At least one start is required"""
    config = flowlines_config(tmp_path, {"start_xs": []})

    code, _ = run(capsys, "flowlines", "--config", config)

    assert code == 2


def test_flowlines_unknown_option_exits_two(capsys, tmp_path):
    """Unknown subcommand options are listed"""
    config = flowlines_config(tmp_path, {"z_end": 5.0})

    code, out = run(capsys, "flowlines", "--config", config)

    assert code == 2
    assert json.loads(out)["offending_keys"] == ["subcommand_options.z_end"]


def test_flowlines_all_lines_failing_exits_four(capsys, tmp_path):
    """A single line started on a node fails and the run exits 4"""
    config = flowlines_config(
        tmp_path,
        {"start_xs": [0.0], "z1": 2.0, "n_stations": 3},
        beams={"relative_phase": 3.141592653589793},
    )

    code, _ = run(capsys, "flowlines", "--config", config)
    _, errors = read_csv(tmp_path / "out" / "errors.csv")

    assert code == 4
    assert len(errors) == 1
    assert errors[0]["failed"] == "1"
    assert "step halvings" in errors[0]["reason"]
