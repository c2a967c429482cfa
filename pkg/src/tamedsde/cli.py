"""Experiment harness: JSON-configured runs with reproducible file outputs.

One experiment is one JSON document. The schema is strict: the ``kind`` key
selects the experiment (converge, stability, simulate, threshold, check),
each kind has a fixed set of required and optional keys, and any unknown
key is rejected with a message anchored to its line in the file.

Outputs land in the configured (or ``--out``) directory:

converge
    ``convergence.csv`` (scheme, h, rms_error, stderr, excluded_paths) and
    ``fit.txt`` with one power-law fit line per scheme.
stability
    ``stability.csv`` (scheme, h, t, mean_square, blown_up_count). Moments
    average surviving paths only; gridpoints where no path survives are
    omitted rather than averaged.
simulate
    One ``trajectory_<scheme>_h<h>_p<k>.csv`` per requested path with
    columns t, x_1..x_d, truncated at the last finite state if the path
    blew up (a warning goes to stderr).
threshold
    ``threshold.txt`` with h1, h2, h_star and a gamma_h table at the
    requested stepsizes.
check
    ``check.txt`` with the commutativity and dissipativity reports.

Identical (config, seed) produce byte-identical CSV files on every run and
for every ``--threads`` value: floats are written in shortest round-trip
form, Monte Carlo reductions are fixed-order, and NaN never appears in a
numeric column (blow-ups are reported in count columns).

Exit codes: 0 on success, 2 for configuration errors, 3 for runtime or
model-evaluation failures.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .analysis import (
    StabilityParams,
    check_dissipativity,
    decay_rate,
    stability_study,
    stability_threshold,
    strong_error_table,
)
from .model import (
    EvaluationError,
    builtin_problem,
    builtin_problem_names,
    check_commutativity,
)
from .paths import generate_paths
from .schemes import SchemeKind, integrate

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "run", "main"]

KINDS = ("converge", "stability", "simulate", "threshold", "check")

_KIND_KEYS = {
    "converge": (
        {"model", "schemes", "stepsizes", "paths", "seed"},
        {"horizon", "output_dir", "reference_steps", "reference_scheme", "gnuplot"},
    ),
    "stability": (
        {"model", "schemes", "stepsizes", "paths", "seed"},
        {"horizon", "output_dir", "stability_params", "gnuplot"},
    ),
    "simulate": (
        {"model", "schemes", "stepsizes", "paths", "seed"},
        {"horizon", "output_dir"},
    ),
    "threshold": (
        {"stability_params"},
        {"stepsizes", "output_dir"},
    ),
    "check": (
        {"model"},
        {
            "horizon",
            "output_dir",
            "gamma",
            "tolerance",
            "sample_low",
            "sample_high",
            "sample_count",
        },
    ),
}

_PARAM_KEYS = {"rho", "theta", "lip_K", "beta", "v", "v_bar", "alpha", "m"}


class ConfigError(Exception):
    """Invalid experiment configuration (exit code 2)."""


@dataclass
class ExperimentConfig:
    """Parsed and validated experiment description."""

    kind: str
    model: Optional[str] = None
    schemes: list[str] = field(default_factory=list)
    stepsizes: list[float] = field(default_factory=list)
    paths: int = 0
    seed: int = 0
    horizon: Optional[float] = None
    output_dir: Optional[str] = None
    reference_steps: Optional[int] = None
    reference_scheme: str = SchemeKind.SEMI_TAMED_MILSTEIN.value
    stability_params: Optional[StabilityParams] = None
    gamma: float = 1.0
    tolerance: Optional[float] = None
    sample_low: float = -2.0
    sample_high: float = 2.0
    sample_count: int = 101
    gnuplot: bool = False
    source_path: str = "<config>"
    source_text: str = field(default="", repr=False)

    def anchor(self, key: str) -> str:
        """``path:line`` locator of a key in the source document."""
        needle = f'"{key}"'
        for lineno, line in enumerate(self.source_text.splitlines(), 1):
            if needle in line:
                return f"{self.source_path}:{lineno}"
        return self.source_path


def _fail(cfg: ExperimentConfig, key: str, message: str) -> ConfigError:
    return ConfigError(f"{cfg.anchor(key)}: {message}")


def _require_number(cfg, raw, key, *, integral=False, minimum=None, positive=False):
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise _fail(cfg, key, f"{key} must be a number, got {raw!r}")
    if integral and not float(raw).is_integer():
        raise _fail(cfg, key, f"{key} must be an integer, got {raw!r}")
    value = int(raw) if integral else float(raw)
    if positive and not value > 0:
        raise _fail(cfg, key, f"{key} must be positive, got {raw!r}")
    if minimum is not None and value < minimum:
        raise _fail(cfg, key, f"{key} must be >= {minimum}, got {raw!r}")
    return value


_RANGE_RE = re.compile(r"2\^(-?\d+)\s*\.\.\s*2\^(-?\d+)")


def _parse_stepsizes(cfg: ExperimentConfig, raw) -> list[float]:
    if isinstance(raw, str):
        match = _RANGE_RE.fullmatch(raw.strip())
        if match is None:
            raise _fail(
                cfg,
                "stepsizes",
                f'cannot parse stepsize range {raw!r}; expected e.g. "2^-6..2^-11"',
            )
        first, last = int(match.group(1)), int(match.group(2))
        direction = 1 if last >= first else -1
        return [2.0**k for k in range(first, last + direction, direction)]
    if isinstance(raw, list) and raw:
        values = []
        for item in raw:
            if isinstance(item, bool) or not isinstance(item, (int, float)) or item <= 0:
                raise _fail(
                    cfg, "stepsizes", f"stepsizes entries must be positive reals, got {item!r}"
                )
            values.append(float(item))
        return values
    raise _fail(
        cfg,
        "stepsizes",
        "stepsizes must be a nonempty list of positive reals or an exponent range string",
    )


def _parse_stability_params(cfg: ExperimentConfig, raw) -> StabilityParams:
    if not isinstance(raw, dict):
        raise _fail(cfg, "stability_params", "stability_params must be an object")
    unknown = set(raw) - _PARAM_KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise _fail(cfg, key, f"unknown stability_params key {key!r}")
    missing = _PARAM_KEYS - set(raw)
    if missing:
        raise _fail(
            cfg,
            "stability_params",
            f"stability_params missing keys: {', '.join(sorted(missing))}",
        )
    for name in _PARAM_KEYS:
        if isinstance(raw[name], bool) or not isinstance(raw[name], (int, float)):
            raise _fail(cfg, name, f"stability_params.{name} must be a number")
    try:
        return StabilityParams(
            rho=float(raw["rho"]),
            theta=float(raw["theta"]),
            lip_K=float(raw["lip_K"]),
            beta=float(raw["beta"]),
            v=float(raw["v"]),
            v_bar=float(raw["v_bar"]),
            alpha=float(raw["alpha"]),
            m=int(raw["m"]),
        )
    except ValueError as exc:
        raise _fail(cfg, "stability_params", f"invalid stability_params: {exc}") from None


def load_config(path: str) -> ExperimentConfig:
    """Parse and validate one experiment JSON document.

    Raises :class:`ConfigError` with a ``path:line`` anchored message on
    any syntactic or semantic problem.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from None
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(document, dict):
        raise ConfigError(f"{path}:1: config must be a JSON object")

    cfg = ExperimentConfig(kind="", source_path=path, source_text=text)

    kind = document.get("kind")
    if kind is None:
        raise ConfigError(f"{path}:1: missing required key \"kind\"")
    if kind not in KINDS:
        cfg.kind = "?"
        raise _fail(cfg, "kind", f"unknown kind {kind!r}; valid kinds: {', '.join(KINDS)}")
    cfg.kind = kind

    required, optional = _KIND_KEYS[kind]
    allowed = required | optional | {"kind"}
    for key in document:
        if key not in allowed:
            raise _fail(cfg, key, f"unknown key {key!r} for kind {kind!r}")
    for key in sorted(required):
        if key not in document:
            raise _fail(cfg, "kind", f"kind {kind!r} requires key {key!r}")

    if "model" in document:
        model = document["model"]
        if not isinstance(model, str):
            raise _fail(cfg, "model", f"model must be a string, got {model!r}")
        if model not in builtin_problem_names():
            raise _fail(
                cfg,
                "model",
                f"unknown model {model!r}; valid names: {', '.join(builtin_problem_names())}",
            )
        cfg.model = model
    if "schemes" in document:
        raw = document["schemes"]
        if not isinstance(raw, list) or not raw:
            raise _fail(cfg, "schemes", "schemes must be a nonempty list of scheme names")
        for name in raw:
            try:
                SchemeKind.from_name(name)
            except ValueError as exc:
                raise _fail(cfg, "schemes", str(exc)) from None
        cfg.schemes = list(raw)
    if "stepsizes" in document:
        cfg.stepsizes = _parse_stepsizes(cfg, document["stepsizes"])
    if "paths" in document:
        cfg.paths = _require_number(cfg, document["paths"], "paths", integral=True, minimum=1)
    if "seed" in document:
        cfg.seed = _require_number(cfg, document["seed"], "seed", integral=True, minimum=0)
    if "horizon" in document:
        cfg.horizon = _require_number(cfg, document["horizon"], "horizon", positive=True)
    if "output_dir" in document:
        if not isinstance(document["output_dir"], str) or not document["output_dir"]:
            raise _fail(cfg, "output_dir", "output_dir must be a nonempty string")
        cfg.output_dir = document["output_dir"]
    if "reference_steps" in document:
        cfg.reference_steps = _require_number(
            cfg, document["reference_steps"], "reference_steps", integral=True, minimum=1
        )
    if "reference_scheme" in document:
        try:
            cfg.reference_scheme = SchemeKind.from_name(document["reference_scheme"]).value
        except ValueError as exc:
            raise _fail(cfg, "reference_scheme", str(exc)) from None
    if "stability_params" in document:
        cfg.stability_params = _parse_stability_params(cfg, document["stability_params"])
    if "gamma" in document:
        cfg.gamma = _require_number(cfg, document["gamma"], "gamma", positive=True)
    if "tolerance" in document:
        cfg.tolerance = _require_number(cfg, document["tolerance"], "tolerance", positive=True)
    if "sample_low" in document:
        cfg.sample_low = _require_number(cfg, document["sample_low"], "sample_low")
    if "sample_high" in document:
        cfg.sample_high = _require_number(cfg, document["sample_high"], "sample_high")
    if "sample_count" in document:
        cfg.sample_count = _require_number(
            cfg, document["sample_count"], "sample_count", integral=True, minimum=1
        )
    if cfg.sample_high <= cfg.sample_low:
        raise _fail(cfg, "sample_high", "sample_high must exceed sample_low")
    if "gnuplot" in document:
        if not isinstance(document["gnuplot"], bool):
            raise _fail(cfg, "gnuplot", "gnuplot must be a boolean")
        cfg.gnuplot = document["gnuplot"]
    return cfg


def _fmt(value) -> str:
    """Shortest round-trip decimal form; refuses NaN in numeric output."""
    number = float(value)
    if math.isnan(number):
        raise EvaluationError("refusing to write NaN into a numeric column")
    return repr(number)


def _write_lines(path: str, lines: list[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _sample_points(problem, cfg: ExperimentConfig):
    if problem.dim_state == 1:
        return np.linspace(cfg.sample_low, cfg.sample_high, cfg.sample_count).reshape(-1, 1)
    rng = np.random.default_rng(0)
    return rng.uniform(
        cfg.sample_low, cfg.sample_high, size=(cfg.sample_count, problem.dim_state)
    )


def _grid_steps(cfg: ExperimentConfig, problem, h: float) -> int:
    ratio = problem.horizon / h
    steps = int(round(ratio))
    if steps < 1 or abs(ratio - steps) > 1e-9 * max(1.0, ratio):
        raise ConfigError(
            f"{cfg.anchor('stepsizes')}: stepsize {h} does not divide "
            f"the horizon {problem.horizon} evenly"
        )
    return steps


def _validate_grid(cfg: ExperimentConfig, problem) -> None:
    steps = [_grid_steps(cfg, problem, h) for h in cfg.stepsizes]
    if cfg.kind == "converge":
        reference = cfg.reference_steps or 8 * max(steps)
        for h, n in zip(cfg.stepsizes, steps):
            if reference % n != 0:
                raise ConfigError(
                    f"{cfg.anchor('stepsizes')}: stepsize {h} ({n} steps) does "
                    f"not nest in the reference grid of {reference} steps"
                )


def _run_converge(cfg: ExperimentConfig, out_dir: str, threads: int) -> list[str]:
    problem = builtin_problem(cfg.model, horizon=cfg.horizon)
    _validate_grid(cfg, problem)
    table = strong_error_table(
        problem,
        cfg.schemes,
        cfg.stepsizes,
        cfg.paths,
        cfg.seed,
        reference_steps=cfg.reference_steps,
        reference_scheme=cfg.reference_scheme,
        threads=threads,
    )
    csv_path = os.path.join(out_dir, "convergence.csv")
    rows = ["scheme,h,rms_error,stderr,excluded_paths"]
    for name in cfg.schemes:
        report = table[SchemeKind.from_name(name)]
        for i, h in enumerate(report.stepsizes):
            rows.append(
                ",".join(
                    [
                        report.scheme.value,
                        _fmt(h),
                        _fmt(report.rms_errors[i]),
                        _fmt(report.stderrs[i]),
                        str(int(report.excluded_paths[i])),
                    ]
                )
            )
    _write_lines(csv_path, rows)

    fit_path = os.path.join(out_dir, "fit.txt")
    fit_lines = ["# least-squares fit of rms_error = C * h^r per scheme"]
    for name in cfg.schemes:
        report = table[SchemeKind.from_name(name)]
        fit_lines.append(
            f"scheme={report.scheme.value} C={_fmt(report.fit_constant)} "
            f"r={_fmt(report.fit_order)} residual={_fmt(report.fit_residual)}"
        )
    _write_lines(fit_path, fit_lines)
    written = [csv_path, fit_path]

    if cfg.gnuplot:
        gp_path = os.path.join(out_dir, "convergence.gp")
        _write_lines(
            gp_path,
            [
                "set logscale xy",
                "set datafile separator ','",
                "set xlabel 'h'",
                "set ylabel 'rms error'",
                "set key top left",
                "plot "
                + ", \\\n     ".join(
                    f"'convergence.csv' skip 1 "
                    f"using 2:(strcol(1) eq '{name}' ? $3 : 1/0) "
                    f"with linespoints title '{name}'"
                    for name in cfg.schemes
                ),
            ],
        )
        written.append(gp_path)
    return written


def _run_stability(cfg: ExperimentConfig, out_dir: str, threads: int) -> list[str]:
    problem = builtin_problem(cfg.model, horizon=cfg.horizon)
    _validate_grid(cfg, problem)
    report = stability_study(
        problem,
        cfg.schemes,
        cfg.stepsizes,
        cfg.paths,
        cfg.seed,
        params=cfg.stability_params,
        threads=threads,
    )
    csv_path = os.path.join(out_dir, "stability.csv")
    rows = ["scheme,h,t,mean_square,blown_up_count"]
    for entry in report.entries:
        curve = entry.curve
        for n in range(curve.times.size):
            if curve.counts[n] == 0:
                break  # no survivors from here on; nothing honest to average
            rows.append(
                ",".join(
                    [
                        entry.scheme.value,
                        _fmt(entry.stepsize),
                        _fmt(curve.times[n]),
                        _fmt(curve.values[n]),
                        str(int(curve.blown_by_time[n])),
                    ]
                )
            )
    _write_lines(csv_path, rows)
    written = [csv_path]

    if cfg.gnuplot:
        gp_path = os.path.join(out_dir, "stability.gp")
        _write_lines(
            gp_path,
            [
                "set logscale y",
                "set datafile separator ','",
                "set xlabel 't'",
                "set ylabel 'mean square'",
                "plot 'stability.csv' skip 1 using 3:4 with points title 'E||Y||^2'",
            ],
        )
        written.append(gp_path)
    return written


def _run_simulate(cfg: ExperimentConfig, out_dir: str) -> list[str]:
    problem = builtin_problem(cfg.model, horizon=cfg.horizon)
    written = []
    header = "t," + ",".join(f"x_{k + 1}" for k in range(problem.dim_state))
    for name in cfg.schemes:
        kind = SchemeKind.from_name(name)
        for h in cfg.stepsizes:
            n_steps = _grid_steps(cfg, problem, h)
            for k in range(cfg.paths):
                bundle = generate_paths(
                    cfg.seed, k, n_steps, problem.dim_noise, problem.horizon
                )
                traj = integrate(problem, kind, bundle, record_full=True)
                rows = [header]
                finite = np.all(np.isfinite(traj.states), axis=1)
                for n in range(traj.times.size):
                    if not finite[n]:
                        break
                    rows.append(
                        ",".join([_fmt(traj.times[n])] + [_fmt(v) for v in traj.states[n]])
                    )
                if traj.blew_up:
                    print(
                        f"warning: {kind.value} path {k} at h={h} blew up; "
                        f"trajectory truncated at step {len(rows) - 2}",
                        file=sys.stderr,
                    )
                name_h = repr(float(h))
                file_path = os.path.join(
                    out_dir, f"trajectory_{kind.value}_h{name_h}_p{k}.csv"
                )
                _write_lines(file_path, rows)
                written.append(file_path)
    return written


def _run_threshold(cfg: ExperimentConfig, out_dir: str) -> list[str]:
    params = cfg.stability_params
    threshold = stability_threshold(params)
    lines = [
        f"h1={_fmt(threshold.h1)}" if math.isfinite(threshold.h1) else "h1=inf",
        f"h2={_fmt(threshold.h2)}" if math.isfinite(threshold.h2) else "h2=inf",
        f"h_star={_fmt(threshold.h_star)}"
        if math.isfinite(threshold.h_star)
        else "h_star=inf",
    ]
    if cfg.stepsizes:
        lines.append("# gamma_h per requested stepsize")
        for h in cfg.stepsizes:
            if 0 < h < threshold.h_star:
                lines.append(f"h={_fmt(h)} gamma_h={_fmt(decay_rate(params, h))}")
            else:
                lines.append(f"h={_fmt(h)} gamma_h=n/a (outside (0, h_star))")
    path = os.path.join(out_dir, "threshold.txt")
    _write_lines(path, lines)
    return [path]


def _run_check(cfg: ExperimentConfig, out_dir: str) -> list[str]:
    problem = builtin_problem(cfg.model, horizon=cfg.horizon)
    points = _sample_points(problem, cfg)
    commutativity = check_commutativity(problem, points, tolerance=cfg.tolerance)
    dissipativity = check_dissipativity(problem, cfg.gamma, points)
    lines = [
        f"model={problem.label}",
        f"samples={points.shape[0]} over [{_fmt(cfg.sample_low)}, {_fmt(cfg.sample_high)}]",
        (
            f"commutativity: passed={commutativity.passed} "
            f"max_violation={_fmt(commutativity.max_violation)} "
            f"tolerance={_fmt(commutativity.tolerance)}"
        ),
        (
            f"dissipativity: passed={dissipativity.passed} gamma={_fmt(dissipativity.gamma)} "
            f"margin={_fmt(dissipativity.margin)}"
        ),
    ]
    path = os.path.join(out_dir, "check.txt")
    _write_lines(path, lines)
    return [path]


def run(config: ExperimentConfig, threads: int = 1) -> list[str]:
    """Execute one experiment; returns the list of files written."""
    if config.output_dir is None:
        raise ConfigError(
            f"{config.source_path}: no output directory (set output_dir or pass --out)"
        )
    out_dir = config.output_dir
    os.makedirs(out_dir, exist_ok=True)
    if config.kind == "converge":
        return _run_converge(config, out_dir, threads)
    if config.kind == "stability":
        return _run_stability(config, out_dir, threads)
    if config.kind == "simulate":
        return _run_simulate(config, out_dir)
    if config.kind == "threshold":
        return _run_threshold(config, out_dir)
    if config.kind == "check":
        return _run_check(config, out_dir)
    raise ConfigError(f"{config.source_path}: unknown kind {config.kind!r}")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tamedsde",
        description="Strong-approximation SDE experiments with tamed schemes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        cmd = sub.add_parser(kind, help=f"run a {kind!r} experiment from a JSON config")
        cmd.add_argument("--config", required=True, help="path to the experiment JSON")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
        cmd.add_argument("--paths", type=int, default=None, help="override the path count")
        cmd.add_argument("--out", default=None, help="override the output directory")
        cmd.add_argument(
            "--threads", type=int, default=1, help="worker threads (output is identical)"
        )
    sub.add_parser("list-models", help="list built-in model names")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "list-models":
        for name in builtin_problem_names():
            problem = builtin_problem(name)
            print(
                f"{name}  (d={problem.dim_state}, m={problem.dim_noise}, "
                f"T={problem.horizon})"
            )
        return 0
    try:
        cfg = load_config(args.config)
        if cfg.kind != args.command:
            raise ConfigError(
                f"{cfg.anchor('kind')}: config kind {cfg.kind!r} does not match "
                f"subcommand {args.command!r}"
            )
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be nonnegative")
            cfg.seed = args.seed
        if args.paths is not None:
            if args.paths < 1:
                raise ConfigError("--paths must be >= 1")
            cfg.paths = args.paths
        if args.out is not None:
            cfg.output_dir = args.out
        threads = getattr(args, "threads", 1)
        if threads < 1:
            raise ConfigError("--threads must be >= 1")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        written = run(cfg, threads=threads)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, EvaluationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
