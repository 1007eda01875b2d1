"""
  Command-line entrypoint for weakmeas.

  Subcommands: weakvalue, abl, aav {exact, ensemble, sweep, decompose} and
  flowlines. Run with --help for the flags of each.

  Exit codes: 0 success, 2 usage or validation error, 3 physically impossible
  request, 4 numerical failure. Results go to stdout or to files; errors are
  printed to stdout as one JSON object and logged to stderr.
"""

import argparse
import contextlib
import json
import logging
import re
import sys
from pathlib import Path
from typing import Optional, Sequence

import aav
import flowlines
from config import DEFAULT_FLOW_STATIONS, DEFAULT_FLOW_TOLERANCE, LOG_LEVEL
from error import (
    ConfigurationError,
    ImpossibleSequenceError,
    NodeError,
    NumericalFailureError,
    OrthogonalPostselectionError,
    PhysicallyImpossibleError,
    PostselectionFailedError,
    RejectedInputError,
)
from hilbert import HermitianOperator, StateVector, inner, named_state, pauli, spin_state
from protocol import abl_probability, weak_value
from report import RunManifest, dumps_json, write_csv, write_csv_stream, write_json

AAV_CONFIG_KEYS = ("scenario", "output_dir", "subcommand_options")
FLOWLINES_CONFIG_KEYS = ("beams", "output_dir", "subcommand_options")
AAV_OPTIONS = {"exact": (), "ensemble": (), "decompose": (), "sweep": ("alphas",)}
FLOWLINES_OPTIONS = ("start_xs", "z0", "z1", "tolerance", "n_stations")

SWEEP_HEADER = (
    "alpha_deg",
    "overlap_abs",
    "aw_analytic",
    "shift_over_g",
    "post_prob",
    "weak_flag",
)

ERROR_LABELS = (
    (OrthogonalPostselectionError, "orthogonal postselection"),
    (ImpossibleSequenceError, "impossible sequence"),
    (PostselectionFailedError, "postselection failed"),
    (ConfigurationError, "invalid configuration"),
    (RejectedInputError, "rejected input"),
    (NodeError, "node"),
    (NumericalFailureError, "numerical failure"),
)


def parse_state(text: str) -> StateVector:
    """
    A named state ("x+", "z-", "y", ...) or comma-separated complex amplitudes
    such as "1,0" or "1,1i". Either "i" or "j" marks the imaginary unit.
    """
    stripped = text.strip()

    if "," not in stripped:
        return named_state(stripped)

    amplitudes = []
    for part in stripped.split(","):
        token = part.strip().replace(" ", "").replace("i", "j")
        token = re.sub(r"(^|[+-])j", r"\g<1>1j", token)

        try:
            amplitudes.append(complex(token))
        except ValueError as exc:
            raise RejectedInputError(f"Cannot parse amplitude {part!r}") from exc

    return StateVector(amplitudes)


def parse_observable(text: str) -> HermitianOperator:
    """An axis label ("x", "y", "z") or a unit 3-vector "nx,ny,nz" for n.sigma."""
    stripped = text.strip()

    if "," not in stripped:
        return pauli(stripped)

    try:
        vector = [float(part) for part in stripped.split(",")]
    except ValueError as exc:
        raise RejectedInputError(f"Cannot parse observable axis {text!r}") from exc

    return pauli(vector)


def load_config(path: str, allowed_keys: Sequence[str]) -> dict:
    """Reads a UTF-8 JSON config file, rejecting unknown top-level keys."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"Cannot read config {path}: {exc}", ["--config"]) from exc

    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"Config {path} is not valid JSON: {exc}") from exc

    if not isinstance(document, dict):
        raise ConfigurationError("Config must be a JSON object")

    unknown = sorted(set(document) - set(allowed_keys))
    if unknown:
        raise ConfigurationError(f"Unknown config keys: {', '.join(unknown)}", unknown)

    return document


def read_options(document: dict, allowed: Sequence[str]) -> dict:
    """The subcommand_options object, fail-closed on unknown keys."""
    options = document.get("subcommand_options", {})

    if options is None:
        return {}

    if not isinstance(options, dict):
        raise ConfigurationError(
            "subcommand_options must be a JSON object", ["subcommand_options"]
        )

    unknown = sorted(set(options) - set(allowed))
    if unknown:
        keys = [f"subcommand_options.{key}" for key in unknown]
        raise ConfigurationError(f"Unknown subcommand options: {', '.join(keys)}", keys)

    return options


@contextlib.contextmanager
def output_errors(directory: Path):
    """Reports filesystem failures under output_dir as configuration errors."""
    try:
        yield
    except OSError as exc:
        raise ConfigurationError(
            f"Cannot write to output_dir {directory}: {exc}", ["output_dir"]
        ) from exc


def output_directory(document: dict) -> Path:
    """Creates and returns output_dir (default: the working directory)."""
    raw = document.get("output_dir", ".")

    if not isinstance(raw, str) or not raw:
        raise ConfigurationError("output_dir must be a non-empty string", ["output_dir"])

    directory = Path(raw)

    with output_errors(directory):
        directory.mkdir(parents=True, exist_ok=True)

    return directory


def _number_list(values, key: str) -> list[float]:
    if not isinstance(values, list) or any(
        isinstance(v, bool) or not isinstance(v, (int, float)) for v in values
    ):
        raise ConfigurationError(f"{key} must be a list of numbers", [key])

    return [float(v) for v in values]


def _number(value, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{key} must be a number", [key])

    return float(value)


def _plain(value: float) -> float:
    """Folds -0.0 into 0.0 so printed records stay stable."""
    return value + 0.0


def cmd_weakvalue(args) -> int:
    """Prints the weak value of --obs for the given pre/post pair."""
    pre = spin_state(args.alpha_deg) if args.alpha_deg is not None else parse_state(args.pre)
    post = parse_state(args.post)
    value = weak_value(pre, post, parse_observable(args.obs))

    record = {
        "re": _plain(value.re),
        "im": _plain(value.im),
        "overlap_abs": abs(inner(post.normalize(), pre.normalize())),
    }
    print(json.dumps(record, sort_keys=True))

    return 0


def cmd_abl(args) -> int:
    """Writes the ABL distribution of --obs to stdout as CSV."""
    outcomes = abl_probability(
        parse_state(args.pre), parse_state(args.post), parse_observable(args.obs)
    )
    rows = [
        (repr(_plain(outcome.eigenvalue)), f"{outcome.probability:.12g}")
        for outcome in sorted(outcomes, key=lambda o: -o.eigenvalue)
    ]
    write_csv_stream(sys.stdout, ("eigenvalue", "probability"), rows)

    return 0


def _exact_record(scenario: aav.Scenario) -> dict:
    exact = aav.run_exact(scenario)
    config = scenario.config

    return {
        "conditional": {
            "mean_x": exact.conditional.mean_x,
            "var_x": exact.conditional.var_x,
            "mean_p": exact.conditional.mean_p,
            "var_p": exact.conditional.var_p,
        },
        "estimate": exact.estimate.to_record(),
        "analytic_weak_value": scenario.analytic_weak_value().to_record(),
        "post_prob": exact.post_prob,
        "post_rate_analytic": scenario.post_rate_analytic,
        "shift_over_g": exact.shift_over_g,
        "weakness_ratio": config.weakness_ratio,
        "outside_weak_regime": config.outside_weak_regime,
    }


def _sweep_rows(rows: Sequence[aav.SweepRow]) -> list[tuple]:
    return [
        (
            row.alpha_deg,
            row.overlap_abs,
            row.aw_analytic,
            row.shift_over_g,
            row.post_prob,
            "failed" if row.failed else row.weak_flag,
        )
        for row in rows
    ]


def cmd_aav(args) -> int:
    """Runs one aav analysis from a config file and writes its output files."""
    document = load_config(args.config, AAV_CONFIG_KEYS)

    if "scenario" not in document:
        raise ConfigurationError("Missing config key: scenario", ["scenario"])

    config = aav.ScenarioConfig.from_config_json(document["scenario"])
    options = read_options(document, AAV_OPTIONS[args.analysis])
    directory = output_directory(document)

    manifest = RunManifest.create(
        command=f"aav {args.analysis}",
        config_record={"scenario": config.to_record(), "subcommand_options": options},
        seed=config.seed,
    )

    if args.analysis == "sweep":
        if "alphas" not in options:
            raise ConfigurationError(
                "sweep needs subcommand_options.alphas", ["subcommand_options.alphas"]
            )
        alphas = _number_list(options["alphas"], "subcommand_options.alphas")
        if not alphas:
            raise ConfigurationError(
                "subcommand_options.alphas must not be empty",
                ["subcommand_options.alphas"],
            )

        rows = aav.sweep_overlap(config, alphas)
        with output_errors(directory):
            write_csv(directory / "sweep.csv", SWEEP_HEADER, _sweep_rows(rows), manifest)
            write_json(
                directory / "stats.json",
                {"monotonicity": aav.sweep_monotonicity(rows).to_record()},
                manifest,
            )
        return 0

    scenario = aav.build_scenario(config)

    if args.analysis == "exact":
        payload = _exact_record(scenario)
    elif args.analysis == "ensemble":
        stats = aav.run_ensemble(scenario)
        payload = stats.to_record()
        with output_errors(directory):
            write_csv(
                directory / "screen.csv",
                ("bin_left", "bin_right", "count"),
                stats.histogram.rows(),
                manifest,
            )
    else:
        decomposition = aav.decompose_shift(scenario)
        payload = decomposition.to_record()
        payload["g"] = config.g

    with output_errors(directory):
        write_json(directory / "stats.json", payload, manifest)

    return 0


def cmd_flowlines(args) -> int:
    """Integrates flow lines from a config file into lines.csv and errors.csv."""
    document = load_config(args.config, FLOWLINES_CONFIG_KEYS)
    system = flowlines.BeamSystem.from_config_json(document.get("beams", {}))
    options = read_options(document, FLOWLINES_OPTIONS)
    directory = output_directory(document)

    if "start_xs" in options:
        starts = _number_list(options["start_xs"], "subcommand_options.start_xs")
    else:
        starts = flowlines.default_starts(system)

    z0 = _number(options.get("z0", 0.0), "subcommand_options.z0")
    z1 = _number(options.get("z1", 50.0 * system.waist), "subcommand_options.z1")
    tolerance = _number(
        options.get("tolerance", DEFAULT_FLOW_TOLERANCE),
        "subcommand_options.tolerance",
    )
    n_stations = options.get("n_stations", DEFAULT_FLOW_STATIONS)
    if isinstance(n_stations, bool) or not isinstance(n_stations, int):
        raise ConfigurationError(
            "n_stations must be an integer", ["subcommand_options.n_stations"]
        )

    lines = flowlines.integrate_flowlines(
        system, starts, z0, z1, tolerance=tolerance, n_stations=n_stations
    )

    manifest = RunManifest.create(
        command="flowlines",
        config_record={
            "beams": system.to_record(),
            "subcommand_options": {
                "start_xs": starts,
                "z0": z0,
                "z1": z1,
                "tolerance": tolerance,
                "n_stations": n_stations,
            },
        },
    )

    with output_errors(directory):
        write_csv(
            directory / "lines.csv",
            ("line_id", "start_x", "z", "x"),
            [
                (line_id, line.start_x, z, x)
                for line_id, line in enumerate(lines)
                if line.succeeded
                for x, z in line.points
            ],
            manifest,
        )
        write_csv(
            directory / "errors.csv",
            ("line_id", "start_x", "failed", "reason"),
            [
                (line_id, line.start_x, 1, line.failure)
                for line_id, line in enumerate(lines)
                if not line.succeeded
            ],
            manifest,
        )

    if not any(line.succeeded for line in lines):
        logging.error("Every flow line failed")
        return 4

    return 0


def build_parser() -> argparse.ArgumentParser:
    """The argument parser with one subparser per command."""
    parser = argparse.ArgumentParser(
        prog="weakmeas",
        description="Weak measurement, ABL and flow-line numerics",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    weakvalue = commands.add_parser("weakvalue", help="weak value of an observable")
    source = weakvalue.add_mutually_exclusive_group(required=True)
    source.add_argument("--alpha-deg", type=float, help="preselect spin_state(alpha)")
    source.add_argument("--pre", help="preselected state")
    weakvalue.add_argument("--post", default="x", help="postselected state")
    weakvalue.add_argument("--obs", default="z", help="axis label or unit 3-vector")
    weakvalue.set_defaults(handler=cmd_weakvalue)

    abl = commands.add_parser("abl", help="ABL probabilities as CSV")
    abl.add_argument("--pre", required=True, help="preselected state")
    abl.add_argument("--post", required=True, help="postselected state")
    abl.add_argument("--obs", default="z", help="axis label or unit 3-vector")
    abl.set_defaults(handler=cmd_abl)

    aav_parser = commands.add_parser("aav", help="amplification scenario runs")
    aav_parser.add_argument("analysis", choices=sorted(AAV_OPTIONS))
    aav_parser.add_argument("--config", required=True, help="JSON config file")
    aav_parser.set_defaults(handler=cmd_aav)

    lines = commands.add_parser("flowlines", help="two-slit flow lines as CSV")
    lines.add_argument("--config", required=True, help="JSON config file")
    lines.set_defaults(handler=cmd_flowlines)

    return parser


def _fail(exc: Exception, code: int) -> int:
    label = next(text for kind, text in ERROR_LABELS if isinstance(exc, kind))
    record = {"error": label, "type": type(exc).__name__, "message": str(exc)}

    if isinstance(exc, ConfigurationError):
        record["offending_keys"] = list(exc.offending_keys)

    logging.error("%s: %s", label, exc)
    print(dumps_json(record), end="")

    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parses argv, runs the command and maps errors onto exit codes."""
    logging.basicConfig(
        level=LOG_LEVEL, stream=sys.stderr, format="%(levelname)s: %(message)s"
    )

    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2

    try:
        return args.handler(args)
    except PhysicallyImpossibleError as exc:
        return _fail(exc, 3)
    except RejectedInputError as exc:
        return _fail(exc, 2)
    except (NumericalFailureError, NodeError) as exc:
        return _fail(exc, 4)


if __name__ == "__main__":
    sys.exit(main())
