"""Command-line front end: ``asyncguess {oneshot,exponent,rd,oracle,simulate}``.

Each command reads a JSON problem file and writes ``<command>.csv`` with a
fixed column order plus ``<command>_summary.json`` into ``--out``.  Reals are
printed with 12 significant digits; infinities and NaN appear as ``inf``,
``-inf`` and ``nan`` (strings in the JSON summary).  The config grammar is
documented in the README.

Exit status: 0 success, 1 config error, 2 infinite moment, 3 non-convergence,
4 instance too large.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .distortion import DistortionModel, FiniteSource, build_ball_index
from .errors import (
    CapTooLowWarning, ConfigError, GuessworkError, InfiniteExponent, InstanceTooLarge,
    NonConvergence, ZeroBallMass,
)
from .exponents import iid_strategy_exponent, optimal_iid_exponent, synchronous_exponent
from .moments import expected_moments, oneshot_achievability, tilted_strategy
from .quantizer import distortion_renyi
from .rd import DEFAULT_CONTROLS, SolverControls, mismatched_rd, rate_distortion, verify_min_identity
from .simulate import SimConfig, simulate_block, simulate_geometric
from .types_oracle import exponent_convergence_check

EXIT_OK, EXIT_CONFIG, EXIT_INFINITE, EXIT_NONCONVERGENCE, EXIT_TOO_LARGE = range(5)

COLUMNS = {
    "oneshot": ["rho", "row", "symbol", "p", "ball_mass", "strategy", "quantized_to",
                "V", "G", "log_V", "log_G", "bound_lhs", "bound_rhs", "g_bound_rhs"],
    "exponent": ["rho", "quantity", "value", "lower_bound", "upper_bound", "lagrange_lambda",
                 "converged", "witness"],
    "rd": ["quantity", "value", "lower_bound", "lagrange_lambda", "converged", "witness"],
    "oracle": ["rho", "n", "exact", "limit", "gap"],
    "simulate": ["rho", "mean", "stderr", "log_mean", "exact", "conditional_mean", "z_score"],
}


# -- formatting ---------------------------------------------------------------

def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".12g")
    if isinstance(value, (list, tuple, np.ndarray)):
        return " ".join(fmt(v) for v in value)
    return "" if value is None else str(value)


def _json_value(value):
    if isinstance(value, dict):
        return {k: _json_value(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_json_value(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not math.isfinite(v):
            return fmt(v)
        return float(format(v, ".12g"))
    return value


def write_report(out: Path, command: str, rows: list[dict], summary: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"{command}.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS[command])
        for row in rows:
            writer.writerow([fmt(row.get(c)) for c in COLUMNS[command]])
    with open(out / f"{command}_summary.json", "w") as fh:
        json.dump(_json_value(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_report(path) -> list[dict]:
    """Parse a CSV report back into dicts; numeric cells become floats."""
    def parse(cell):
        try:
            return float(cell)
        except ValueError:
            return cell
    with open(path, newline="") as fh:
        return [{k: parse(v) for k, v in row.items()} for row in csv.DictReader(fh)]


# -- config -------------------------------------------------------------------

def _number(value, where: str, exact_ok: bool = True):
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number, got a boolean")
    if isinstance(value, (int, float)):
        return value
    if isinstance(value, str) and exact_ok:
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"{where}: cannot parse {value!r} as a number or 'a/b' rational") from None
    raise ConfigError(f"{where}: expected a number, got {type(value).__name__}")


def _float_list(values, where: str) -> np.ndarray:
    if not isinstance(values, list) or not values:
        raise ConfigError(f"{where}: expected a nonempty list")
    return np.array([float(_number(v, f"{where}[{i}]")) for i, v in enumerate(values)])


@dataclass
class ProblemConfig:
    source: FiniteSource
    model: DistortionModel
    rho_list: tuple
    strategy: object  # "tilted" | "uniform" | "optimize" | np.ndarray
    controls: SolverControls = DEFAULT_CONTROLS
    simulation: dict = field(default_factory=dict)
    oracle: dict = field(default_factory=dict)


_KEYS = {"source", "repro", "distortion", "delta", "rho", "strategy", "controls",
         "simulation", "oracle"}


def parse_config(data: dict) -> ProblemConfig:
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be an object")
    unknown = set(data) - _KEYS
    if unknown:
        raise ConfigError(f"config: unknown keys {sorted(unknown)}")
    for key in ("source", "distortion", "delta"):
        if key not in data:
            raise ConfigError(f"{key}: required field missing")

    src = data["source"]
    if not isinstance(src, dict) or "pmf" not in src:
        raise ConfigError("source: expected an object with a 'pmf' list")
    pmf = _float_list(src["pmf"], "source.pmf")
    labels = tuple(src.get("labels", range(pmf.size)))
    if len(labels) != pmf.size:
        raise ConfigError(f"source.labels: {len(labels)} labels for {pmf.size} probabilities")
    try:
        source = FiniteSource(labels, pmf)
    except GuessworkError as exc:
        raise ConfigError(f"source.pmf: {exc}") from None

    repro = tuple(data.get("repro", labels))
    delta = _number(data["delta"], "delta")
    dist = data["distortion"]
    try:
        if dist == "hamming":
            model = DistortionModel.hamming(labels, delta, repro)
        else:
            if not isinstance(dist, list) or len(dist) != len(labels):
                raise ConfigError(f"distortion: expected 'hamming' or a {len(labels)}-row matrix")
            rows = []
            for i, row in enumerate(dist):
                if not isinstance(row, list) or len(row) != len(repro):
                    raise ConfigError(f"distortion[{i}]: expected {len(repro)} entries")
                rows.append([_number(v, f"distortion[{i}][{j}]") for j, v in enumerate(row)])
            exact = all(isinstance(v, (int, Fraction)) for r in rows for v in r) and isinstance(
                delta, (int, Fraction))
            matrix = rows if exact else np.array([[float(v) for v in r] for r in rows])
            model = DistortionModel(labels, repro, matrix, delta)
    except ConfigError:
        raise
    except GuessworkError as exc:
        raise ConfigError(f"distortion: {exc}") from None

    rho = data.get("rho", [1])
    rho = rho if isinstance(rho, list) else [rho]
    rho_list = tuple(float(_number(r, f"rho[{i}]", exact_ok=False)) for i, r in enumerate(rho))
    for i, r in enumerate(rho_list):
        if not r > 0:
            raise ConfigError(f"rho[{i}]: must be positive")

    strategy = data.get("strategy", "tilted")
    if isinstance(strategy, list):
        strategy = _float_list(strategy, "strategy")
        if strategy.size != len(repro):
            raise ConfigError(f"strategy: expected {len(repro)} probabilities")
        if np.any(strategy < 0) or abs(strategy.sum() - 1) > 1e-9:
            raise ConfigError("strategy: must be a probability vector")
    elif strategy not in ("tilted", "uniform", "optimize"):
        raise ConfigError(f"strategy: expected a pmf or one of tilted|uniform|optimize, got {strategy!r}")

    try:
        controls = SolverControls.from_mapping(data.get("controls", {}))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"controls: {exc}") from None

    simulation = data.get("simulation", {})
    oracle = data.get("oracle", {})
    for name, section in (("simulation", simulation), ("oracle", oracle)):
        if not isinstance(section, dict):
            raise ConfigError(f"{name}: expected an object")
    return ProblemConfig(source, model, rho_list, strategy, controls, simulation, oracle)


def load_config(path) -> ProblemConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return parse_config(data)


# -- strategies ---------------------------------------------------------------

def _strategy_pmf(cfg: ProblemConfig, rho: float) -> np.ndarray:
    """Concrete reproduction pmf for one-shot and block experiments."""
    m = cfg.model.shape[1]
    if isinstance(cfg.strategy, np.ndarray):
        return cfg.strategy
    if cfg.strategy == "uniform":
        return np.full(m, 1.0 / m)
    if cfg.strategy == "optimize":
        return optimal_iid_exponent(cfg.source.pmf, cfg.model, rho, cfg.controls).outer_witness
    _, quant = distortion_renyi(cfg.source, cfg.model, 1.0 / (1.0 + rho))
    return tilted_strategy(quant.pushforward(cfg.source.pmf, m), rho)


# -- commands -----------------------------------------------------------------

def cmd_oneshot(cfg: ProblemConfig, args) -> tuple[list, dict]:
    rows, summary = [], {"command": "oneshot", "strategy": _strategy_name(cfg)}
    src, model = cfg.source, cfg.model
    for rho in cfg.rho_list:
        if _strategy_name(cfg) in ("tilted", "optimize"):
            rep = oneshot_achievability(src, model, rho)
        else:
            rep = expected_moments(src, _strategy_pmf(cfg, rho), build_ball_index(model), rho)
        for i, x in enumerate(src.symbols):
            row = {"rho": rho, "row": "symbol", "symbol": x, "p": src.pmf[i],
                   "ball_mass": rep.ball_mass[i], "V": math.exp(rep.log_v[i]),
                   "G": math.exp(rep.log_g[i]), "log_V": rep.log_v[i], "log_G": rep.log_g[i]}
            if rep.quantizer is not None:
                row["quantized_to"] = model.repro_alphabet[rep.quantizer.map[i]]
            rows.append(row)
        for j, xh in enumerate(model.repro_alphabet):
            rows.append({"rho": rho, "row": "strategy", "symbol": xh, "strategy": rep.strategy[j]})
        exp_row = {"rho": rho, "row": "expected", "V": rep.expected_v, "G": rep.expected_g,
                   "log_V": rep.log_expected_v, "log_G": rep.log_expected_g,
                   "bound_lhs": rep.expected_v}
        if rep.log_bound_rhs is not None:
            exp_row["bound_rhs"] = math.exp(rep.log_bound_rhs)
        if rep.log_factorial_rhs is not None:
            exp_row["g_bound_rhs"] = math.exp(rep.log_factorial_rhs)
        rows.append(exp_row)
        summary[f"rho={fmt(rho)}"] = {
            "expected_V": rep.expected_v, "expected_G": rep.expected_g,
            "log_bound_rhs": rep.log_bound_rhs, "g_method": rep.g_method}
    return rows, summary


def _strategy_name(cfg):
    return "explicit" if isinstance(cfg.strategy, np.ndarray) else cfg.strategy


def _exp_row(rho, name, rep):
    return {"rho": rho, "quantity": name, "value": rep.value, "lower_bound": rep.lower_bound,
            "upper_bound": rep.upper_bound, "lagrange_lambda": rep.lagrange_lambda,
            "converged": rep.converged, "witness": rep.outer_witness}


def cmd_exponent(cfg: ProblemConfig, args) -> tuple[list, dict]:
    rows, summary = [], {"command": "exponent", "strategy": _strategy_name(cfg)}
    P, model, ctl = cfg.source.pmf, cfg.model, cfg.controls
    for rho in cfg.rho_list:
        try:
            iid = optimal_iid_exponent(P, model, rho, ctl)
        except NonConvergence as exc:
            if exc.certificate is not None:
                rows.append(_exp_row(rho, "E_iid", exc.certificate))
            write_report(args.out, "exponent", rows, {**summary, "error": str(exc)})
            raise
        sync = synchronous_exponent(P, model, rho, ctl)
        penalty = iid.value - sync.value
        rows.append(_exp_row(rho, "E_iid", iid))
        rows.append(_exp_row(rho, "E_sync", sync))
        rows.append({"rho": rho, "quantity": "penalty", "value": penalty})
        entry = {"E_iid": iid.value, "E_sync": sync.value, "penalty": penalty,
                 "iid_bracket": iid.bracket, "iid_witness": iid.outer_witness,
                 "sync_lambda": sync.lagrange_lambda, "diagnostics": {
                     k: v for k, v in iid.diagnostics.items() if isinstance(v, (int, float, str))}}
        if _strategy_name(cfg) != "optimize":
            qh = _strategy_pmf(cfg, rho)
            try:
                strat = iid_strategy_exponent(P, qh, model, rho, ctl)
                row = _exp_row(rho, "E_strategy", strat)
                row["witness"] = qh
                rows.append(row)
                entry["E_strategy"] = strat.value
            except InfiniteExponent:
                rows.append({"rho": rho, "quantity": "E_strategy", "value": math.inf, "witness": qh})
                entry["E_strategy"] = math.inf
        summary[f"rho={fmt(rho)}"] = entry
    return rows, summary


def cmd_rd(cfg: ProblemConfig, args) -> tuple[list, dict]:
    P, model, ctl = cfg.source.pmf, cfg.model, cfg.controls
    rd = rate_distortion(P, model, ctl)
    ident = verify_min_identity(P, model, ctl)
    rows = [
        {"quantity": "R", "value": rd.value, "lower_bound": rd.lower_bound,
         "lagrange_lambda": rd.lagrange_lambda, "converged": rd.converged,
         "witness": rd.extras.get("output_law")},
        {"quantity": "min_mismatched", "value": ident.min_value, "lower_bound": ident.lower_bound,
         "converged": ident.converged, "witness": ident.output_law},
    ]
    summary = {"command": "rd", "R": rd.value, "min_mismatched": ident.min_value,
               "identity_gap": ident.gap}
    if _strategy_name(cfg) in ("explicit", "uniform"):
        qh = _strategy_pmf(cfg, 1.0)
        mm = mismatched_rd(P, qh, model, ctl)
        rows.append({"quantity": "R_mismatched", "value": mm.value, "lower_bound": mm.lower_bound,
                     "lagrange_lambda": mm.lagrange_lambda, "converged": mm.converged,
                     "witness": qh})
        summary["R_mismatched"] = mm.value
    return rows, summary


def cmd_oracle(cfg: ProblemConfig, args) -> tuple[list, dict]:
    n_list = args.n_list or cfg.oracle.get("n_list")
    if not n_list:
        raise ConfigError("oracle.n_list: required (or pass --n-list)")
    rows, summary = [], {"command": "oracle", "strategy": _strategy_name(cfg)}
    for rho in cfg.rho_list:
        qh = _strategy_pmf(cfg, rho)
        table = exponent_convergence_check(cfg.source.pmf, qh, cfg.model, rho, n_list, cfg.controls)
        for r in table.rows:
            rows.append({"rho": rho, "n": r.n, "exact": r.exact, "limit": r.limit, "gap": r.gap})
        summary[f"rho={fmt(rho)}"] = {
            "limit": table.limit, "monotone_tail": table.monotone_tail,
            "within_envelope": table.within_envelope, "fitted_c": table.fitted_c,
            "strategy_pmf": qh}
    return rows, summary


_SIM_KEYS = {"master_seed", "trials", "n", "guess_cap", "workers", "mode", "block_size", "q"}


def cmd_simulate(cfg: ProblemConfig, args) -> tuple[list, dict]:
    sim = dict(cfg.simulation)
    unknown = set(sim) - _SIM_KEYS
    if unknown:
        raise ConfigError(f"simulation: unknown keys {sorted(unknown)}")
    q = sim.pop("q", None)
    if args.seed is not None:
        sim["master_seed"] = args.seed
    if args.workers is not None:
        sim["workers"] = args.workers
    try:
        sc = SimConfig(rho_list=cfg.rho_list, **sim)
    except (TypeError, GuessworkError) as exc:
        raise ConfigError(f"simulation: {exc}") from None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", CapTooLowWarning)
        if q is not None:
            rep = simulate_geometric(float(_number(q, "simulation.q")), sc)
        else:
            rep = simulate_block(cfg.source.pmf, _strategy_pmf(cfg, cfg.rho_list[0]), cfg.model, sc)
    rows = [{"rho": e.rho, "mean": e.mean, "stderr": e.stderr, "log_mean": e.log_mean,
             "exact": e.exact, "conditional_mean": e.conditional_mean, "z_score": e.z_score}
            for e in rep.estimates]
    summary = {"command": "simulate", "mode": rep.mode, "n": rep.n, "trials": rep.trials,
               "master_seed": rep.master_seed, "workers": sc.workers,
               "censored_fraction": rep.censored_fraction, "biased_low": rep.biased_low,
               "warnings": [str(w.message) for w in caught
                            if issubclass(w.category, CapTooLowWarning)]}
    return rows, summary


COMMANDS = {"oneshot": cmd_oneshot, "exponent": cmd_exponent, "rd": cmd_rd,
            "oracle": cmd_oracle, "simulate": cmd_simulate}


def _n_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("blocklengths must be positive")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asyncguess", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="JSON problem file")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--seed", type=int, default=None, help="overrides simulation.master_seed")
        p.add_argument("--workers", type=int, default=None, help="overrides simulation.workers")
        p.add_argument("--n-list", type=_n_list, default=None, help="blocklengths, e.g. 2,4,6")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        rows, summary = COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ZeroBallMass, InfiniteExponent) as exc:
        if args.command == "oneshot":
            write_report(args.out, "oneshot",
                         [{"row": "infinite", "symbol": getattr(exc, "symbol", None),
                           "V": math.inf, "G": math.inf}],
                         {"command": "oneshot", "error": str(exc)})
        print(f"infinite moment: {exc}", file=sys.stderr)
        return EXIT_INFINITE
    except NonConvergence as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except InstanceTooLarge as exc:
        print(f"instance too large: {exc}", file=sys.stderr)
        return EXIT_TOO_LARGE
    write_report(args.out, args.command, rows, summary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
