"""Command-line front end.

Commands: ``fidelity``, ``sweep-gain``, ``universality``, ``simulate``,
``zscan``. Every command writes rows with the fixed column set in
:data:`COLUMNS` as CSV (default) or JSON.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cloning_metrics import NoAmplificationError, fidelity_report, universality_scan
from .detection_sim import (
    EstimateError,
    ExperimentSetup,
    InjectionModel,
    MeasurementMode,
    fidelity_from_counts,
    estimate_R,
    fit_scan,
    oracle_fidelity,
    run_trials,
    z_scan,
)
from .fitting import FitError
from .fock_core import Truncation
from .opa_model import NAMED_QUBITS, PolarizationQubit, random_qubit

log = logging.getLogger("qiopa")

COLUMNS = (
    "command", "qubit", "g", "order", "F", "F_star", "R", "R_star", "S1", "S2",
    "p_success", "C1", "C2", "sigma_R", "sigma_F", "z", "fit_A", "fit_c", "fit_w", "fit_B",
)
COMMANDS = ("fidelity", "sweep-gain", "universality", "simulate", "zscan")
RENORMALIZE_TOL = 1e-3
DEFAULT_SEED = 0
# counts below this make the Gaussian error propagation unreliable
MIN_STABLE_COUNTS = 10


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    qubit: PolarizationQubit = NAMED_QUBITS["H"]
    qubit_label: str = "H"
    gains: tuple[float, ...] = (0.1,)
    order: str = "both"
    truncation: Truncation = field(default_factory=Truncation)
    count: int = 100
    mode: MeasurementMode = MeasurementMode.CLONING
    qe: float = 0.55
    dark_count: float = 0.0
    trials: int = 1_000_000
    seed: int = DEFAULT_SEED
    injection: InjectionModel = field(default_factory=InjectionModel)
    z_grid: tuple[float, float, int] | None = None
    workers: int = 1
    output: str = "-"
    fmt: str = "csv"


# ---------------------------------------------------------------------------
# parsing


def parse_qubit(text: str) -> tuple[PolarizationQubit, str]:
    """Named qubit (H, diag, circ-left) or ``re(a),im(a),re(b),im(b)``."""
    text = text.strip()
    if text in NAMED_QUBITS:
        return NAMED_QUBITS[text], text
    try:
        parts = [float(x) for x in text.split(",")]
    except ValueError:
        raise ConfigError(f"bad qubit {text!r}: use H, diag, circ-left or four comma-separated numbers") from None
    if len(parts) != 4:
        raise ConfigError(f"bad qubit {text!r}: expected four numbers re(a),im(a),re(b),im(b)")
    alpha, beta = complex(parts[0], parts[1]), complex(parts[2], parts[3])
    norm = math.sqrt(abs(alpha) ** 2 + abs(beta) ** 2)
    if abs(norm - 1.0) > RENORMALIZE_TOL:
        raise ConfigError(f"qubit {text!r} has norm {norm:.6g}; expected 1")
    if abs(norm - 1.0) > 1e-12:
        log.warning("qubit %r renormalized (norm %.9g)", text, norm)
    return PolarizationQubit.normalized(alpha, beta), text


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _truncation(text: str) -> Truncation:
    try:
        per_mode, total = (int(x) for x in text.split(","))
        return Truncation(per_mode, total)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected PER_MODE,TOTAL, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value file; command-line flags take precedence")
    common.add_argument("--truncation", type=_truncation, default=None, metavar="PER_MODE,TOTAL")
    common.add_argument("--output", "-o", default="-", help="output path ('-' for stdout)")
    common.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")

    qubit = argparse.ArgumentParser(add_help=False)
    qubit.add_argument("--qubit", default="H", help="H, diag, circ-left or re(a),im(a),re(b),im(b)")

    optics = argparse.ArgumentParser(add_help=False)
    optics.add_argument("--g", type=float, default=None)
    optics.add_argument("--mode", choices=[m.value for m in MeasurementMode], default="cloning")
    optics.add_argument("--qe", type=float, default=0.55, help="efficiency of every detector")
    optics.add_argument("--dark-count", type=float, default=0.0)
    optics.add_argument("--trials", type=int, default=1_000_000)
    optics.add_argument("--seed", type=int, default=None)
    optics.add_argument("--z0", type=float, default=0.0)
    optics.add_argument("--sigma-z", type=float, default=1.0)
    optics.add_argument("--p-peak", type=float, default=1.0)
    optics.add_argument("--workers", type=int, default=1)

    parser = argparse.ArgumentParser(prog="qiopa", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fidelity", parents=[common, qubit], help="F, F*, R, R*, entropies for one qubit")
    p.add_argument("--g", type=float, default=None)
    p.add_argument("--order", choices=("first", "full", "both"), default="both")

    p = sub.add_parser("sweep-gain", parents=[common, qubit], help="figures of merit over a list of gains")
    p.add_argument("--g", type=_float_list, default=None, help="comma-separated gains")
    p.add_argument("--order", choices=("first", "full", "both"), default="full")

    p = sub.add_parser("universality", parents=[common], help="the named qubits plus N Haar-random qubits")
    p.add_argument("--g", type=float, default=0.1)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--order", choices=("first", "full"), default="first")
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("simulate", parents=[common, qubit, optics], help="Monte Carlo 4-coincidence run")
    p.add_argument("--z", type=float, default=0.0, help="pump mirror position")

    p = sub.add_parser("zscan", parents=[common, qubit, optics], help="Monte Carlo scan of the mirror position")
    p.add_argument("--z-start", type=float, default=None)
    p.add_argument("--z-stop", type=float, default=None)
    p.add_argument("--z-steps", type=int, default=21)
    return parser


def read_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            values["fmt" if key == "format" else key] = value
    return values


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:  # noqa: SLF001
        if command in action.choices:
            return action.choices[command]
    raise ConfigError(f"unknown command {command!r}")


def parse_config(argv: Sequence[str] | None = None, environ=None) -> RunConfig:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    environ = os.environ if environ is None else environ
    args = parser.parse_args(argv)
    explicit_seed = getattr(args, "seed", None) is not None
    if args.config:
        sub = _subparser(parser, args.command)
        known = {a.dest for a in sub._actions if a.dest not in ("help", "config")}  # noqa: SLF001
        file_values = read_config_file(args.config)
        for key in file_values:
            if key not in known:
                raise ConfigError(f"{args.config}: key {key!r} is not valid for '{args.command}'")
        sub.set_defaults(**file_values)
        args = parser.parse_args(argv)
        explicit_seed = explicit_seed or "seed" in file_values
    return _to_run_config(args, environ, explicit_seed)


def _to_run_config(args: argparse.Namespace, environ, explicit_seed: bool) -> RunConfig:
    cmd = args.command
    kw: dict = {"command": cmd, "output": args.output, "fmt": args.fmt}
    if args.truncation is not None:
        kw["truncation"] = args.truncation
    if hasattr(args, "qubit"):
        kw["qubit"], kw["qubit_label"] = parse_qubit(args.qubit)
    if hasattr(args, "seed"):
        if explicit_seed:
            kw["seed"] = args.seed
        elif environ.get("QOPA_SEED"):
            try:
                kw["seed"] = int(environ["QOPA_SEED"])
            except ValueError:
                raise ConfigError(f"QOPA_SEED must be an integer, got {environ['QOPA_SEED']!r}") from None

    if cmd == "fidelity":
        if args.g is None:
            raise ConfigError("fidelity: missing required option --g")
        kw.update(gains=(args.g,), order=args.order)
    elif cmd == "sweep-gain":
        if args.g is None:
            raise ConfigError("sweep-gain: missing required option --g")
        gains = sorted(set(args.g))
        if not gains:
            raise ConfigError("sweep-gain: --g must list at least one gain")
        if len(gains) != len(args.g):
            log.warning("sweep-gain: duplicate gains removed")
        kw.update(gains=tuple(gains), order=args.order)
    elif cmd == "universality":
        if args.count < 0:
            raise ConfigError("universality: --count must be >= 0")
        kw.update(gains=(args.g,), order=args.order, count=args.count)
    else:
        if args.g is None:
            args.g = 0.1
        if args.trials < 1:
            raise ConfigError(f"{cmd}: --trials must be >= 1")
        if args.workers < 1:
            raise ConfigError(f"{cmd}: --workers must be >= 1")
        if not 0 <= args.qe <= 1:
            raise ConfigError(f"{cmd}: --qe must lie in [0, 1]")
        try:
            injection = InjectionModel(getattr(args, "z", 0.0), args.z0, args.sigma_z, args.p_peak)
        except ValueError as exc:
            raise ConfigError(f"{cmd}: {exc}") from None
        kw.update(gains=(args.g,), mode=MeasurementMode(args.mode), qe=args.qe,
                  dark_count=args.dark_count, trials=args.trials, injection=injection,
                  workers=args.workers, order="mc")
        if cmd == "zscan":
            start = args.z0 - 5 * args.sigma_z if args.z_start is None else args.z_start
            stop = args.z0 + 5 * args.sigma_z if args.z_stop is None else args.z_stop
            if args.z_steps < 5:
                raise ConfigError("zscan: --z-steps must be >= 5 for the Gaussian fit")
            if not stop > start:
                raise ConfigError("zscan: --z-stop must exceed --z-start")
            kw["z_grid"] = (start, stop, args.z_steps)
    return RunConfig(**kw)


# ---------------------------------------------------------------------------
# commands


def _row(command: str, **values) -> dict:
    row = dict.fromkeys(COLUMNS)
    row["command"] = command
    for key, value in values.items():
        if key not in row:
            raise KeyError(key)
        row[key] = value
    return row


def _report_rows(cfg: RunConfig, qubit, label: str, g: float, orders) -> list[dict]:
    rows = []
    for order in orders:
        try:
            rep = fidelity_report(qubit, g, order, cfg.truncation)
        except NoAmplificationError:
            log.warning("%s g=%g order=%s: no amplification", label, g, order)
            rows.append(_row(cfg.command, qubit=label, g=g, order=f"{order}/no-amplification"))
            continue
        rows.append(_row(cfg.command, qubit=label, g=g, order=order, F=rep.F, F_star=rep.F_star,
                         R=rep.R, R_star=rep.R_star, S1=rep.S1, S2=rep.S2,
                         p_success=rep.success_probability))
    return rows


def _orders(order: str) -> tuple[str, ...]:
    return ("first", "full") if order == "both" else (order,)


def cmd_fidelity(cfg: RunConfig) -> list[dict]:
    return _report_rows(cfg, cfg.qubit, cfg.qubit_label, cfg.gains[0], _orders(cfg.order))


def cmd_sweep_gain(cfg: RunConfig) -> list[dict]:
    rows = []
    for g in cfg.gains:
        rows += _report_rows(cfg, cfg.qubit, cfg.qubit_label, g, _orders(cfg.order))
    return rows


def cmd_universality(cfg: RunConfig) -> list[dict]:
    rng = np.random.default_rng(cfg.seed)
    labels = list(NAMED_QUBITS)
    qubits = list(NAMED_QUBITS.values())
    for i in range(cfg.count):
        labels.append(f"haar-{i}")
        qubits.append(random_qubit(rng))
    g = cfg.gains[0]
    scan = universality_scan(qubits, g, cfg.order, cfg.truncation)
    rows = [
        _row(cfg.command, qubit=label, g=g, order=cfg.order, F=r.F, F_star=r.F_star, R=r.R,
             R_star=r.R_star, S1=r.S1, S2=r.S2, p_success=r.success_probability)
        for label, r in zip(labels, scan.reports)
    ]
    # summary row: F / F_star columns hold the max deviation from the median
    rows.append(_row(cfg.command, qubit="summary", g=g, order=cfg.order,
                     F=scan.max_dev_F, F_star=scan.max_dev_F_star))
    return rows


def _setup(cfg: RunConfig, injection: InjectionModel | None = None) -> ExperimentSetup:
    return ExperimentSetup(
        mode=cfg.mode, qubit=cfg.qubit, g=cfg.gains[0], detector_qe=cfg.qe,
        injection=injection or cfg.injection, trials=cfg.trials, master_seed=cfg.seed,
        dark_count=cfg.dark_count, truncation=cfg.truncation,
    )


def _estimate_columns(counts, mode: MeasurementMode) -> tuple[dict, bool]:
    try:
        r, sr = estimate_R(counts)
        f, sf = fidelity_from_counts(counts)
    except EstimateError:
        return {}, False
    if mode is MeasurementMode.CLONING:
        cols = {"R": r, "F": f}
    else:
        cols = {"R_star": r, "F_star": f}
    cols.update(sigma_R=sr, sigma_F=sf)
    return cols, min(counts.C1, counts.C2) >= MIN_STABLE_COUNTS


def cmd_simulate(cfg: RunConfig) -> list[dict]:
    setup = _setup(cfg)
    counts = run_trials(setup, workers=cfg.workers)
    cols, stable = _estimate_columns(counts, cfg.mode)
    label = f"{cfg.qubit_label}"
    order = f"mc-{cfg.mode.value}" + ("" if stable else "/unstable")
    if not stable:
        log.warning("simulate: C1=%d, C2=%d too few counts for a stable estimate", counts.C1, counts.C2)
    rows = [_row(cfg.command, qubit=label, g=cfg.gains[0], order=order, C1=counts.C1, C2=counts.C2,
                 z=cfg.injection.z, **cols)]
    try:
        ratio, fid = oracle_fidelity(setup)
    except EstimateError:
        return rows
    key = ("R", "F") if cfg.mode is MeasurementMode.CLONING else ("R_star", "F_star")
    rows.append(_row(cfg.command, qubit=label, g=cfg.gains[0], order=f"oracle-{cfg.mode.value}",
                     z=cfg.injection.z, **dict(zip(key, (ratio, fid)))))
    return rows


def cmd_zscan(cfg: RunConfig) -> list[dict]:
    start, stop, steps = cfg.z_grid
    zs = np.linspace(start, stop, steps)
    points = z_scan(_setup(cfg), zs, workers=cfg.workers)
    rows = [_row(cfg.command, qubit=cfg.qubit_label, g=cfg.gains[0], order=f"scan-{cfg.mode.value}",
                 z=z, C1=c1, C2=c2) for z, c1, c2 in points]
    try:
        signal, noise = fit_scan(points)
    except FitError as exc:
        log.warning("zscan: %s", exc)
        return rows
    for name, fit in (("fit-C1", signal), ("fit-C2", noise)):
        rows.append(_row(cfg.command, qubit=cfg.qubit_label, g=cfg.gains[0], order=name,
                         fit_A=fit.amplitude, fit_c=fit.center, fit_w=fit.width, fit_B=fit.offset))
    return rows


HANDLERS = {
    "fidelity": cmd_fidelity,
    "sweep-gain": cmd_sweep_gain,
    "universality": cmd_universality,
    "simulate": cmd_simulate,
    "zscan": cmd_zscan,
}


# ---------------------------------------------------------------------------
# output


def _format(value):
    if value is None:
        return None
    if isinstance(value, (bool, np.bool_)):
        return int(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            raise ValueError(f"non-finite value {value!r} in report")
        return float(f"{float(value):.12g}")
    return str(value)


def render(rows: Sequence[dict], fmt: str) -> str:
    clean = [{k: _format(row.get(k)) for k in COLUMNS} for row in rows]
    if fmt == "json":
        return json.dumps(clean, indent=2) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in clean:
        writer.writerow(["" if row[k] is None else (f"{row[k]:.12g}" if isinstance(row[k], float) else row[k])
                         for k in COLUMNS])
    return buf.getvalue()


def emit_report(rows: Sequence[dict], fmt: str, path: str) -> None:
    text = render(rows, fmt)
    if path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(format="qiopa: %(levelname)s: %(message)s", level=logging.INFO)
    logging.captureWarnings(True)
    try:
        cfg = parse_config(argv)
        rows = HANDLERS[cfg.command](cfg)
        emit_report(rows, cfg.fmt, cfg.output)
    except (ConfigError, OSError, ValueError, RuntimeError) as exc:
        print(f"qiopa: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
