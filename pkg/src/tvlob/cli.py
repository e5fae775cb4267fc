"""Command-line front end.

    tvlob solve|classify|converge|evaluate|barrier --config run.yaml [--out DIR]

The config is a YAML file with ``profile``, ``order``, ``grid`` and optional
``numerics`` / ``converge`` blocks.  Any scalar can be overridden with
``--set block.key=value``.  Every run writes ``summary.json``; an ``error``
record there goes with a nonzero exit status.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import closedform, cost, dp
from .errors import ConfigError, ProfileError, TvlobError
from .impact import DiscreteStrategy
from .liquidity import LiquidityProfile, TimeGrid

COMMANDS = ("solve", "classify", "converge", "evaluate", "barrier")
VARIANTS = ("one-sided", "dynamic", "zero")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


# -- config ---------------------------------------------------------------------

def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark else str(path)
        lines = text.splitlines()
        # the opening construct (context_mark) is often the real culprit
        marks = [m for m in (getattr(exc, "context_mark", None), mark) if m is not None]
        shown = sorted({m.line for m in marks if m.line < len(lines)})
        context = "".join(f"\n    {n + 1}: {lines[n]}" for n in shown)
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"{where}: {problem}{context}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def apply_override(config: dict, assignment: str):
    """Apply ``a.b.c=value``; the value is parsed as a YAML scalar."""
    key, sep, raw = assignment.partition("=")
    if not sep or not key:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError:
        raise ConfigError(f"--set {key}: cannot parse value {raw!r}") from None
    if isinstance(value, (dict, list)):
        raise ConfigError(f"--set {key}: only scalars can be overridden")
    node = config
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {key}: {part} is not a block")
    node[parts[-1]] = value


def _block(config, name, required=True):
    block = config.get(name)
    if block is None:
        if required:
            raise ConfigError(f"missing block '{name}'")
        return {}
    if not isinstance(block, dict):
        raise ConfigError(f"'{name}' must be a mapping")
    return block


def _number(block, key, where, default=None, minimum=None, integer=False):
    value = block.get(key, default)
    if value is None:
        raise ConfigError(f"{where}.{key} is required")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(f"{where}.{key} must be an integer")
    if not math.isfinite(value) or (minimum is not None and value < minimum):
        raise ConfigError(f"{where}.{key} must be >= {minimum}" if minimum is not None
                          else f"{where}.{key} must be finite")
    return int(value) if integer else float(value)


def build_profile(config) -> LiquidityProfile:
    block = _block(config, "profile")
    params = block.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("profile.params must be a mapping")
    try:
        return LiquidityProfile(block.get("family"), params, block.get("rho"),
                                block.get("horizon"), block.get("gamma", 0.0))
    except ProfileError as exc:
        field = f"profile.{exc.field}" if exc.field else "profile"
        raise ConfigError(f"{field}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"profile: {exc}") from None


def _order(config):
    block = _block(config, "order")
    x = _number(block, "x", "order", minimum=0.0)
    delta = _number(block, "delta", "order", default=0.0, minimum=0.0)
    A0 = _number(block, "A0", "order", default=0.0)
    B0 = _number(block, "B0", "order", default=A0)
    if B0 > A0:
        raise ConfigError("order.B0 must not exceed order.A0")
    delta_bid = _number(block, "delta_bid", "order", default=0.0, minimum=0.0)
    return x, delta, A0, B0, delta_bid


def _numerics(config):
    block = _block(config, "numerics", required=False)
    return {
        "samples": _number(block, "samples", "numerics", closedform.DEFAULT_SAMPLES, 2, integer=True),
        "panels": _number(block, "panels", "numerics", closedform.DEFAULT_PANELS, 1, integer=True),
        "eval_nodes": _number(block, "eval_nodes", "numerics", 10_000, 1, integer=True),
    }


def _grid(config, profile, allow_list=False):
    block = _block(config, "grid")
    if "nodes" in block:
        try:
            return TimeGrid.from_nodes(profile, block["nodes"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"grid.nodes: {exc}") from None
    N = block.get("N")
    if isinstance(N, list):
        if not allow_list:
            raise ConfigError("grid.N must be a single integer for this command (lists are for converge)")
        return [TimeGrid.uniform(profile, _number({"N": n}, "N", "grid", minimum=1, integer=True)) for n in N]
    N = _number(block, "N", "grid", minimum=1, integer=True)
    grid = TimeGrid.uniform(profile, N)
    return [grid] if allow_list else grid


# -- output ---------------------------------------------------------------------

def fmt(v) -> str:
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return "nan"
    return format(v, ".17g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else fmt(v)
    return obj


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (int, float, np.floating, np.integer)) else v for v in row])


def write_summary(path: Path, record: dict):
    with open(path, "w") as fh:
        json.dump(_jsonable(record), fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- commands ---------------------------------------------------------------------

def cmd_solve(config, out: Path) -> dict:
    profile = build_profile(config)
    x, delta, A0, _, _ = _order(config)
    grid = _grid(config, profile)
    result = dp.solve(profile, grid)
    strategy = dp.extract_strategy(result, x, delta)
    breakdown = cost.cost_decomposition(profile, strategy, delta, A0)
    write_csv(out / "barrier.csv", ["t", "c"], zip(grid.times, result.barrier.values))
    write_csv(out / "strategy.csv", ["t", "trade"], zip(grid.times, strategy.trades))
    diag = {k: v for k, v in result.diagnostics.items() if k != "pieces"}
    return {
        "value": dp.dp_value(result, 0, delta, x),
        "total_cost": breakdown.total,
        "breakdown": breakdown.as_dict(),
        "diagnostics": diag,
        "finite_difference_mode": profile.finite_difference_mode,
    }


def cmd_classify(config, out: Path) -> dict:
    profile = build_profile(config)
    verdict = closedform.classify_manipulation(profile, _numerics(config)["samples"])
    return {"classification": verdict.as_dict()}


def _barrier_gap(dp_c, cf_c):
    if math.isinf(dp_c) and math.isinf(cf_c):
        return 0.0
    if math.isinf(dp_c) or math.isinf(cf_c):
        return math.inf
    return abs(dp_c - cf_c) / abs(cf_c) if cf_c != 0 else abs(dp_c)


def cmd_converge(config, out: Path) -> dict:
    profile = build_profile(config)
    x, delta, _, _, _ = _order(config)
    numerics = _numerics(config)
    grids = _grid(config, profile, allow_list=True)
    block = _block(config, "converge", required=False)
    times = [float(t) for t in block.get("times", [0.0, 0.25, 0.5, 0.75])]
    timing = bool(block.get("timing", True))

    reference = block.get("reference_value")
    closed = None
    if reference is None:
        verdict = closedform.classify_manipulation(profile, numerics["samples"])
        if verdict.regime != closedform.Regime.CLEAN:
            raise ConfigError(f"regime is {verdict.regime.value}: converge needs converge.reference_value")
        sol = closedform.dynamic_spread_optimal(profile, delta, x, numerics["panels"], numerics["samples"])
        reference = sol.value
        closed = closedform.continuous_barrier(profile, np.array(times), numerics["panels"], numerics["samples"])
    reference = _number({"v": reference}, "v", "converge.reference_value")

    header = ["N", "dp_value", "reference_value", "rel_gap"]
    if closed is not None:
        header += [f"barrier_gap_t={fmt(t)}" for t in times]
    if timing:
        header.append("wall_time")
    rows, records = [], []
    for grid in grids:
        start = time.perf_counter()
        result = dp.solve(profile, grid)
        elapsed = time.perf_counter() - start
        value = dp.dp_value(result, 0, delta, x)
        gap = abs(value - reference) / abs(reference) if reference != 0 else abs(value)
        row = [grid.N, value, reference, gap]
        rec = {"N": grid.N, "dp_value": value, "rel_gap": gap}
        if closed is not None:
            # barrier of the grid node at or just before each requested time
            idx = np.searchsorted(grid.times, np.array(times), side="right") - 1
            bg = [_barrier_gap(result.barrier.values[i], c) for i, c in zip(idx, closed)]
            row += bg
            rec["barrier_gap"] = bg
        if timing:
            row.append(elapsed)
        rows.append(row)
        records.append(rec)
    write_csv(out / "converge.csv", header, rows)
    return {"reference_value": reference, "rows": records}


def read_strategy_csv(path, variant):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read strategy file {path}: {exc.strerror}") from None
    if not rows:
        raise ConfigError(f"{path}: empty strategy file")
    header = [h.strip() for h in rows[0]]
    want = ["t", "buy", "sell"] if variant == "dynamic" else ["t", "trade"]
    if header != want:
        raise ConfigError(f"{path}: expected header {','.join(want)}, got {','.join(header)}")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[1] != len(want) or len(data) < 2:
        raise ConfigError(f"{path}: need at least two rows of {len(want)} columns")
    return data


def cmd_evaluate(config, out: Path, variant: str, strategy_path) -> dict:
    profile = build_profile(config)
    x, delta, A0, B0, delta_bid = _order(config)
    numerics = _numerics(config)
    if strategy_path is None:
        strategy_path = config.get("strategy_file")
    if strategy_path is None:
        raise ConfigError("evaluate needs --strategy or strategy_file")
    data = read_strategy_csv(strategy_path, variant)
    if "grid" in config:
        grid = _grid(config, profile)
        if len(grid.times) != len(data) or not np.allclose(grid.times, data[:, 0], rtol=0, atol=1e-12):
            raise ConfigError("strategy times do not match the configured grid")
    else:
        grid = TimeGrid.from_nodes(profile, data[:, 0])
    record = {"variant": variant}
    if variant == "one-sided":
        strategy = DiscreteStrategy(grid, data[:, 1])
        strategy.require_nonnegative()
        record["breakdown"] = cost.cost_decomposition(profile, strategy, delta, A0).as_dict()
        if profile.differentiable:
            record["identity_cost"] = cost.cost_via_impact_identity(profile, strategy, delta,
                                                                    numerics["eval_nodes"])
    elif variant == "dynamic":
        buys, sells = DiscreteStrategy(grid, data[:, 1]), DiscreteStrategy(grid, data[:, 2])
        empty = DiscreteStrategy(grid, np.zeros(grid.N + 1))
        record["total_cost"] = cost.total_cost_dynamic_spread(profile, buys, sells, delta, delta_bid, A0, B0)
        record["buy_leg"] = {"volume": buys.target,
                             "cost": cost.total_cost_dynamic_spread(profile, buys, empty, delta, delta_bid, A0, B0)}
        record["sell_leg"] = {"volume": sells.target,
                              "proceeds": -cost.total_cost_dynamic_spread(profile, empty, sells, delta, delta_bid,
                                                                          A0, B0)}
    else:
        strategy = DiscreteStrategy(grid, data[:, 1])
        record["total_cost"] = cost.zero_spread_cost(profile, strategy, delta)
        if profile.differentiable:
            record["identity_cost"] = cost.cost_via_impact_identity(profile, strategy, delta,
                                                                    numerics["eval_nodes"])
    return record


def cmd_barrier(config, out: Path) -> dict:
    profile = build_profile(config)
    numerics = _numerics(config)
    grid = _grid(config, profile)
    c = closedform.continuous_barrier(profile, grid.times, numerics["panels"], numerics["samples"])
    write_csv(out / "barrier.csv", ["t", "c"], zip(grid.times, c))
    return {"c0": float(c[0]), "infinite_nodes": int(np.sum(np.isinf(c)))}


# -- entry point ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tvlob", description="Optimal execution with time-varying liquidity.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="YAML run configuration")
    parser.add_argument("--out", default=".", help="output directory (created if missing)")
    parser.add_argument("--n", type=int, help="override grid.N")
    parser.add_argument("--samples", type=int, help="override numerics.samples")
    parser.add_argument("--panels", type=int, help="override numerics.panels")
    parser.add_argument("--variant", choices=VARIANTS, default=None, help="cost model for evaluate")
    parser.add_argument("--strategy", help="strategy CSV for evaluate")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a scalar config entry (repeatable)")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"command": args.command}
    status = EXIT_OK
    try:
        config = load_config(args.config)
        for assignment in args.set:
            apply_override(config, assignment)
        if args.n is not None:
            config.setdefault("grid", {})["N"] = args.n
        for name in ("samples", "panels"):
            if getattr(args, name) is not None:
                config.setdefault("numerics", {})[name] = getattr(args, name)
        variant = args.variant or config.get("variant", "one-sided")
        if variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {variant!r}")
        summary["config"] = copy.deepcopy(config)
        if args.command == "solve":
            summary["result"] = cmd_solve(config, out)
        elif args.command == "classify":
            summary["result"] = cmd_classify(config, out)
        elif args.command == "converge":
            summary["result"] = cmd_converge(config, out)
        elif args.command == "evaluate":
            summary["result"] = cmd_evaluate(config, out, variant, args.strategy)
        else:
            summary["result"] = cmd_barrier(config, out)
    except ConfigError as exc:
        summary["error"] = {"type": "ConfigError", "message": str(exc)}
        status = EXIT_CONFIG
    except TvlobError as exc:
        summary["error"] = {"type": type(exc).__name__, "message": str(exc)}
        status = EXIT_FAILED
    write_summary(out / "summary.json", summary)
    if status != EXIT_OK:
        print(f"tvlob {args.command}: {summary['error']['type']}: {summary['error']['message']}", file=sys.stderr)
    return status


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
