"""Command-line front end.

    drymep solve|simulate|baseline|sweep-m|sweep-alpha|oracle
           [--config FILE] [--out DIR] [--set section.key=value ...] [--seed N] [--verbose]

Exit codes: 0 success, 2 configuration error, 3 annealing hit its iteration
cap, 4 model or numerical failure. Temperatures in every output are Celsius.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import annealer, oracle
from .config import KELVIN, RunConfig, document, load_config, with_process
from .errors import ConfigError, DryMepError, ModelError, NotConverged, NumericalFailure, SpaceTooLarge
from .kinetics import MoistureState, StageParams, Technology, step
from .paths import Path
from .process import DryingModel

EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_MODEL = 0, 2, 3, 4

log = logging.getLogger("drymep")


def fmt(v) -> str:
    return f"{float(v):.10g}"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _write(out_dir, name, text):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=False) + "\n"


# ---------------------------------------------------------------- builders

def profile_csv(result: annealer.SolveResult) -> str:
    rows = []
    for k, (g, p) in enumerate(zip(result.best_path.stages, result.params)):
        rows.append([k + 1, g.name, fmt(p.t), fmt(p.T - KELVIN),
                     fmt(result.trajectory[k].wet_basis), fmt(result.trajectory[k + 1].wet_basis)])
    return _csv(["stage", "tech", "t_min", "T_C", "x_in", "x_out"], rows)


def result_dict(result: annealer.SolveResult, run: RunConfig) -> dict:
    return {
        "path": str(result.best_path),
        "encoding": result.best_path.encoding,
        "annealed_path": str(result.annealed_path) if result.annealed_path else None,
        "params": [{"t_min": p.t, "T_C": p.T - KELVIN} for p in result.params],
        "cost_J": result.total_cost,
        "x_final": result.trajectory[-1].wet_basis,
        "iterations": result.outer_iterations,
        "converged": result.converged,
        "max_p": float(result.final_distribution.weights.max()),
        "config": document(run),
    }


def run_solve_model(run: RunConfig, on_trace=None) -> annealer.SolveResult:
    """Anneal under ``run``; NotConverged still carries a complete result."""
    return annealer.solve(run.process, run.kinetics, run.schedule, on_trace=on_trace)


def baselines(run: RunConfig) -> dict:
    """Optimal single-stage HA and HAUS processes, from the reference optimiser."""
    out = {}
    for tech in Technology:
        cfg = run.process.replace(M=1, allowed=((tech,),))
        model = DryingModel(cfg, run.kinetics)
        theta, cost = oracle.optimize_single_path(model, run.oracle)
        x = model.final_moisture(theta)[0][0]
        out[tech.name] = {
            "cost_J": cost,
            "t_min": float(theta[0]),
            "T_C": float(theta[1] - KELVIN),
            "x_final": float(x),
            "feasible": bool(x <= cfg.x_d + 1e-6),
        }
    return out


def improvement(baseline, multi):
    return 100.0 * (baseline - multi) / baseline


def trajectory_rows(path: Path, params, x0: float, samples: int, kc):
    """(time, wet moisture, tech, T) at ``samples`` points per stage plus the start."""
    rows = [(0.0, x0, path.stages[0].name, params[0].T)]
    x = MoistureState(x0)
    clock = 0.0
    for g, p in zip(path.stages, params):
        for j in range(1, samples + 1):
            sub = step(g, x, StageParams(p.t * j / samples, p.T), kc)
            rows.append((clock + p.t * j / samples, sub.wet_basis, g.name, p.T))
        x = step(g, x, p, kc)
        clock += p.t
    return rows


# ---------------------------------------------------------------- sweeps

def _sweep_point(args):
    run, changes = args
    cfg = run.process.replace(**changes)
    try:
        res = annealer.solve(cfg, run.kinetics, run.schedule)
        return "ok", res
    except NotConverged as exc:
        return "not_converged", exc.result
    except (ModelError, NumericalFailure, SpaceTooLarge) as exc:
        return f"error: {exc}", None


def sweep(run: RunConfig, axis: str):
    """Solve every point on ``axis`` ("M" or "alpha"); returns (csv text, records)."""
    values = run.sweep.M if axis == "M" else run.sweep.alpha
    points = [(run, {axis: v}) for v in values]
    if run.sweep.jobs > 1:
        with ProcessPoolExecutor(max_workers=run.sweep.jobs) as pool:
            outcomes = list(pool.map(_sweep_point, points))
    else:
        outcomes = [_sweep_point(p) for p in points]

    base_cache = {}
    rows, records = [], []
    for i, (v, (status, res)) in enumerate(zip(values, outcomes)):
        alpha = v if axis == "alpha" else run.process.alpha
        M = v if axis == "M" else run.process.M
        if alpha not in base_cache:
            base_cache[alpha] = baselines(with_process(run, alpha=alpha))
        base = base_cache[alpha]
        if res is None:
            rows.append([i, M, fmt(alpha), "", "", "", "", "", status])
            records.append({"M": M, "alpha": alpha, "status": status})
            continue
        cost = res.total_cost
        rows.append([i, M, fmt(alpha), fmt(cost), str(res.best_path), res.best_path.count("HA"),
                     fmt(improvement(base["HA"]["cost_J"], cost)),
                     fmt(improvement(base["HAUS"]["cost_J"], cost)), status])
        records.append({"M": M, "alpha": alpha, "status": status, "result": res, "baselines": base})
    header = ["point", "M", "alpha", "cost_J", "path", "ha_stages", "improvement_vs_HA_pct",
              "improvement_vs_HAUS_pct", "status"]
    return _csv(header, rows), records


# ---------------------------------------------------------------- commands

def cmd_solve(run, out, verbose):
    stream = None
    if verbose:
        M = run.process.M
        head = ["beta", "free_energy", "max_p"] + [f"t{k + 1}_min" for k in range(M)] \
            + [f"T{k + 1}_C" for k in range(M)]
        sys.stderr.write(",".join(head) + "\n")

        def write_row(row):
            vals = [row.beta, row.free_energy, row.max_p, *row.theta[:M], *(row.theta[M:] - KELVIN)]
            sys.stderr.write(",".join(fmt(v) for v in vals) + "\n")

        stream = write_row

    code = EXIT_OK
    try:
        result = run_solve_model(run, stream)
    except NotConverged as exc:
        result = exc.result
        code = EXIT_NOT_CONVERGED
    _write(out, "result.json", _json(result_dict(result, run)))
    _write(out, "profile.csv", profile_csv(result))
    _write(out, "trace.csv", result.trace_csv())
    print(f"{result.best_path}  cost {fmt(result.total_cost)} J  "
          f"x_final {fmt(result.trajectory[-1].wet_basis)}")
    return code


def cmd_simulate(run, out, verbose, from_result=None):
    if from_result is not None:
        with open(from_result, encoding="utf-8") as fh:
            data = json.load(fh)
        path = Path.parse(data["path"])
        params = [StageParams(p["t_min"], p["T_C"] + KELVIN) for p in data["params"]]
        samples = run.simulate.samples_per_stage if run.simulate else 10
    elif run.simulate is not None:
        path, params, samples = run.simulate.path, list(run.simulate.params), run.simulate.samples_per_stage
    else:
        raise ConfigError("simulate needs a 'simulate' section (path, params) or --from-result")
    rows = trajectory_rows(path, params, run.process.x0, samples, run.kinetics)
    _write(out, "trajectory.csv", _csv(["time_min", "x_wet", "tech", "T_C"],
                                       [[fmt(t), fmt(x), g, fmt(T - KELVIN)] for t, x, g, T in rows]))
    print(f"{path}  x_final {fmt(rows[-1][1])}")
    return EXIT_OK


def cmd_baseline(run, out, verbose):
    base = baselines(run)
    _write(out, "baseline.json", _json({"baselines": base, "config": document(run)}))
    for name, b in base.items():
        print(f"{name:5s} cost {fmt(b['cost_J'])} J  t {fmt(b['t_min'])} min  T {fmt(b['T_C'])} C"
              + ("" if b["feasible"] else "  (target not reached)"))
    return EXIT_OK


def _cmd_sweep(axis):
    def cmd(run, out, verbose):
        text, records = sweep(run, axis)
        _write(out, "sweep.csv", text)
        sys.stdout.write(text)
        statuses = [r["status"] for r in records]
        if any(s.startswith("error") for s in statuses):
            return EXIT_MODEL
        if any(s == "not_converged" for s in statuses):
            return EXIT_NOT_CONVERGED
        return EXIT_OK
    return cmd


def cmd_oracle(run, out, verbose):
    model = DryingModel(run.process, run.kinetics)
    report = oracle.exhaustive_solve(model, run.oracle)
    _write(out, "oracle.json", report.to_json() + "\n")
    _write(out, "oracle.csv", report.to_csv())
    best = report.global_best
    print(f"{best.path}  cost {fmt(best.cost)} J")
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "baseline": cmd_baseline,
    "sweep-m": _cmd_sweep("M"),
    "sweep-alpha": _cmd_sweep("alpha"),
    "oracle": cmd_oracle,
}


def build_parser():
    p = argparse.ArgumentParser(prog="drymep", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON configuration file (defaults when omitted)")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value by dotted path, e.g. process.alpha=0.2")
    p.add_argument("--seed", type=int, default=None, help="seed for the samplers")
    p.add_argument("--verbose", action="store_true", help="log progress and stream the trace")
    p.add_argument("--from-result", default=None,
                   help="simulate: take path and params from a result.json")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        run = load_config(args.config, args.overrides, args.seed)
        if args.command == "simulate":
            return cmd_simulate(run, args.out, args.verbose, args.from_result)
        return COMMANDS[args.command](run, args.out, args.verbose)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except (ModelError, NumericalFailure, SpaceTooLarge) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except DryMepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
