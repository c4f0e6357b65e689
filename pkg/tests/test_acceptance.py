"""Acceptance criteria.

Each test records one PASS/FAIL line (shown in the terminal summary) and then
asserts it. The sweeps are run once per session and shared; the determinism
check runs them a second time.
"""

import subprocess
import sys
import time
from pathlib import Path as FsPath

import pytest

from drymep.annealer import solve
from drymep.cli import sweep
from drymep.config import load_config
from drymep.process import ProcessConfig

TESTS = FsPath(__file__).parent
SUITE = (("M", None, "M"), ("alpha", None, "alpha"),
         ("cold-intake alpha", {"preset": "cold-intake"}, "alpha"))


def run_suite():
    """Every sweep as (name, csv text, records)."""
    return [(name, *sweep(load_config(cfg), axis)) for name, cfg, axis in SUITE]


@pytest.fixture(scope="session")
def suite():
    return {name: (text, records) for name, text, records in run_suite()}


def results(records):
    return [(r, r["result"]) for r in records if r.get("result") is not None]


def run_pytest(*args):
    start = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *args],
                          cwd=TESTS.parent, capture_output=True, text=True)
    return proc.returncode, time.perf_counter() - start, proc.stdout.strip().splitlines()[-1:]


def test_criterion_1_oracle_equivalence(acceptance, oracle_reports):
    details, ok = [], True
    for M in (2, 3):
        start = time.perf_counter()
        res = solve(ProcessConfig(M=M))
        seconds = time.perf_counter() - start
        best = oracle_reports[M].global_best
        gap = (res.total_cost - best.cost) / best.cost
        ok &= abs(gap) <= 5e-3 and seconds < 60.0
        details.append(f"M={M}: annealer {res.total_cost:.4f} J ({res.best_path}) vs oracle "
                       f"{best.cost:.4f} J ({best.path}), gap {100 * gap:+.2e}%, {seconds:.1f} s")
    assert acceptance(1, "annealer within 0.5% of oracle, < 60 s", ok, "; ".join(details))


def test_criterion_2_single_stage_dominance(acceptance, suite):
    worst, ok = [], True
    for rec, res in results(suite["M"][1]):
        if rec["M"] < 2:
            continue
        base = min(b["cost_J"] for b in rec["baselines"].values())
        ok &= res.total_cost <= base + 1e-6
        worst.append(f"M={rec['M']}: {res.total_cost - base:+.3g} J")
    ok &= len(worst) == 5
    assert acceptance(2, "solve(M) <= best single-stage baseline + 1e-6 for M = 2..6", ok,
                      "cost - baseline: " + ", ".join(worst))


def test_criterion_3_monotone_in_M(acceptance, suite):
    cost = {rec["M"]: res.total_cost for rec, res in results(suite["M"][1])}
    Ms = sorted(cost)
    monotone = all(cost[b] <= cost[a] * (1 + 1e-3) for a, b in zip(Ms, Ms[1:]))
    saturation = abs(cost[5] - cost[4]) / cost[4]
    ok = Ms == [1, 2, 3, 4, 5, 6] and monotone and saturation <= 1e-2
    detail = ", ".join(f"M={M}: {cost[M]:.4f}" for M in Ms) + f"; |c5-c4|/c4 = {saturation:.2e}"
    assert acceptance(3, "cost non-increasing in M (0.1% slack), |c5-c4| <= 1% of c4", ok, detail)


def test_criterion_4_kinetics_suite(acceptance):
    code, seconds, tail = run_pytest("tests/test_kinetics.py")
    ok = code == 0 and seconds < 5.0
    assert acceptance(4, "kinetics suite passes in < 5 s", ok, f"{' '.join(tail)} in {seconds:.2f} s")


def test_criterion_5_gibbs_suite(acceptance):
    code, seconds, tail = run_pytest("tests/test_annealer.py", "-k", "gibbs or free_energy")
    ok = code == 0 and seconds < 10.0
    assert acceptance(5, "Gibbs/free-energy suite passes in < 10 s", ok,
                      f"{' '.join(tail)} in {seconds:.2f} s")


def test_criterion_6_constraint_satisfaction(acceptance, suite):
    count, worst, ok = 0, -1.0, True
    for name in ("M", "alpha"):
        for rec, res in results(suite[name][1]):
            count += 1
            cfg = ProcessConfig()
            excess = res.trajectory[-1].wet_basis - cfg.x_d
            worst = max(worst, excess)
            ok &= excess <= 1e-6
            lo, hi = cfg.T_bounds
            ok &= all(p.t >= cfg.t_min and lo <= p.T <= hi for p in res.params)
        ok &= len(suite[name][1]) == len(results(suite[name][1]))
    assert acceptance(6, "x_M <= x_d + 1e-6 and params in bounds on the default sweeps", ok,
                      f"{count} solves, max x_M - x_d = {worst:.2e}")


def _percentages(records):
    return "; ".join(
        f"a={rec['alpha']:.4g} {res.best_path} vs HA {100 * (rec['baselines']['HA']['cost_J'] - res.total_cost) / rec['baselines']['HA']['cost_J']:.2f}%"
        f" vs HAUS {100 * (rec['baselines']['HAUS']['cost_J'] - res.total_cost) / rec['baselines']['HAUS']['cost_J']:.2f}%"
        for rec, res in results(records))


def test_criterion_7_alpha_trend(acceptance, suite):
    records = suite["cold-intake alpha"][1]
    pairs = sorted(((rec["alpha"], res.best_path.count("HA")) for rec, res in results(records)))
    counts = [c for _, c in pairs]
    trend = all(b <= a for a, b in zip(counts, counts[1:]))
    at_half = [c for a, c in pairs if abs(a - 0.5) < 1e-12]
    ok = len(pairs) == 6 and trend and at_half == [0]
    print("cold-intake percentages:", _percentages(records))
    print("repo-default percentages:", _percentages(suite["alpha"][1]))
    detail = "HA stages by alpha: " + ", ".join(f"{a:.4g}->{c}" for a, c in pairs) \
        + " | " + _percentages(records)
    assert acceptance(7, "cold-intake HA count non-increasing in alpha, all-HAUS at 0.5", ok, detail)


def test_criterion_8_determinism(acceptance, suite):
    again = run_suite()
    same = [name for name, text, _ in again if text == suite[name][0]]
    ok = len(same) == len(SUITE)
    assert acceptance(8, "two sweep-suite runs give byte-identical CSV", ok,
                      f"identical: {', '.join(same) or 'none'}")
