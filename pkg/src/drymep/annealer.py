"""Deterministic annealing over process configurations.

The discrete choice of path is relaxed to Gibbs weights
``p(w) ~ exp(-beta * D(w))``. For fixed weights the stage parameters shared by
all paths minimise the free energy ``-(1/beta) log sum exp(-beta * D)``; beta
then grows geometrically until one path carries almost all the mass.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .boxmin import minimize_box
from .errors import NotConverged, NumericalFailure
from .kinetics import KineticsConstants, MoistureState, StageParams
from .paths import Path, PathDistribution, argmax_weight
from .process import DryingModel, ProcessConfig, feasible_start, path_cost

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnnealSchedule:
    """Geometric beta schedule. ``beta_min=None`` scales it to the start costs."""

    beta_min: float | None = None
    zeta: float = 1.1
    p_max: float = 0.99
    max_outer_iters: int = 500
    inner_gtol: float = 1e-6
    inner_max_iter: int = 50
    harden_max_iter: int = 500
    harden_starts: int = 16
    flip_search: bool = True
    seed: int = 0

    def __post_init__(self):
        problems = []
        if self.beta_min is not None and not self.beta_min > 0:
            problems.append(f"schedule.beta_min must be > 0, got {self.beta_min}")
        if not self.zeta > 1:
            problems.append(f"schedule.zeta must be > 1, got {self.zeta}")
        if not 0.5 < self.p_max < 1:
            problems.append(f"schedule.p_max must lie in (0.5, 1), got {self.p_max}")
        if self.max_outer_iters < 1:
            problems.append("schedule.max_outer_iters must be >= 1")
        if self.inner_max_iter < 1 or self.harden_max_iter < 1:
            problems.append("schedule inner iteration caps must be >= 1")
        if self.harden_starts < 0:
            problems.append("schedule.harden_starts must be >= 0")
        if problems:
            from .errors import ConfigError

            raise ConfigError(problems)

    def to_dict(self):
        return {
            "beta_min": self.beta_min,
            "zeta": self.zeta,
            "p_max": self.p_max,
            "max_outer_iters": self.max_outer_iters,
            "inner_gtol": self.inner_gtol,
            "inner_max_iter": self.inner_max_iter,
            "harden_max_iter": self.harden_max_iter,
            "harden_starts": self.harden_starts,
            "flip_search": self.flip_search,
            "seed": self.seed,
        }


@dataclass
class TraceRow:
    beta: float
    free_energy: float
    max_p: float
    theta: np.ndarray


@dataclass
class SolveResult:
    best_path: Path
    params: list
    total_cost: float
    trajectory: list
    final_distribution: PathDistribution
    outer_iterations: int
    free_energy_trace: list
    converged: bool = True
    trace: list = field(default_factory=list)
    annealed_path: Path | None = None

    def trace_csv(self) -> str:
        M = len(self.params)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "beta", "free_energy", "max_p"]
                   + [f"t{k + 1}_min" for k in range(M)] + [f"T{k + 1}_C" for k in range(M)])
        for i, row in enumerate(self.trace):
            t, T = row.theta[:M], row.theta[M:]
            w.writerow([i + 1, _fmt(row.beta), _fmt(row.free_energy), _fmt(row.max_p)]
                       + [_fmt(v) for v in t] + [_fmt(v - 273.15) for v in T])
        return buf.getvalue()


def _fmt(v):
    return f"{v:.10g}"


def logsumexp(a):
    """``log(sum(exp(a)))`` shifted by the maximum so nothing overflows."""
    a = np.asarray(a, float)
    top = a.max()
    if not np.isfinite(top):
        return top
    return top + math.log(np.exp(a - top).sum())


def gibbs_weights(costs, beta, paths=None) -> PathDistribution:
    """Maximum-entropy weights at inverse temperature ``beta`` (1/J)."""
    costs = np.asarray(costs, float)
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if not np.all(np.isfinite(costs)):
        raise ValueError("costs must be finite")
    z = -beta * (costs - costs.min())
    w = np.exp(z - logsumexp(z))
    w /= w.sum()
    if paths is None:
        paths = [Path.from_encoding(i, max(1, math.ceil(math.log2(len(costs))))) for i in range(len(costs))]
    return PathDistribution(paths, w)


def free_energy_from_costs(costs, beta):
    """``-(1/beta) log sum exp(-beta * costs)``, measured from the cheapest path."""
    costs = np.asarray(costs, float)
    low = costs.min()
    return float(low - logsumexp(-beta * (costs - low)) / beta)


def free_energy(params, beta, model: DryingModel, gradient=False):
    """Free energy at shared stage parameters; optionally with its gradient.

    The gradient is the Gibbs-weighted average of the path cost gradients.
    """
    theta = _as_theta(params, model)
    costs, J = model.evaluate(theta, jacobian=gradient)
    low = costs.min()
    z = -beta * (costs - low)
    lse = logsumexp(z)
    F = float(low - lse / beta)
    if not gradient:
        return F
    return F, np.exp(z - lse) @ J


def _as_theta(params, model):
    if isinstance(params, np.ndarray):
        return params.astype(float)
    params = list(params)
    if params and isinstance(params[0], StageParams):
        return model.pack(params)
    return np.asarray(params, float)


@dataclass
class InnerResult:
    theta: np.ndarray
    free_energy: float
    status: str
    iterations: int
    projected_grad_norm: float
    history: list


def _scales(model):
    M = model.M
    lo, hi = model.lower[M:], model.upper[M:]
    t_scale = np.full(M, 10.0)
    T_scale = np.maximum(hi - lo, 1e-3)
    return np.r_[t_scale, T_scale]


def inner_minimize(params0, beta, model: DryingModel, *, gtol=1e-6, max_iter=500,
                   on_evaluate=None) -> InnerResult:
    """Box-constrained minimisation of the free energy at fixed ``beta``.

    Residence times are measured in units of 10 min and temperatures in units
    of the bound width; the objective is divided by its starting magnitude.
    ``gtol`` applies to the projected gradient in those units.
    """
    theta0 = model.project(_as_theta(params0, model))
    scale = _scales(model)
    shift = model.lower.copy()
    F0 = free_energy(theta0, beta, model)
    f_scale = max(abs(F0), 1.0)

    def to_theta(z):
        return shift + z * scale

    def fun(z):
        theta = to_theta(z)
        F, g = free_energy(theta, beta, model, gradient=True)
        return F / f_scale, g * scale / f_scale

    watcher = None
    if on_evaluate is not None:
        watcher = lambda z: on_evaluate(to_theta(z))  # noqa: E731

    z0 = (theta0 - shift) / scale
    zl = np.zeros_like(z0)
    zu = (model.upper - shift) / scale
    res = minimize_box(fun, z0, zl, zu, gtol=gtol, max_iter=max_iter, hessian="fd",
                       on_evaluate=watcher)
    theta = model.project(to_theta(res.x))
    F = free_energy(theta, beta, model)
    if res.status == "stalled" and res.projected_grad_norm > gtol:
        raise NumericalFailure(
            f"line search stalled with projected gradient {res.projected_grad_norm:.3g} > {gtol}"
            f" (decrement {res.decrement:.3g})"
        )
    if F > F0 + 1e-9 * max(1.0, abs(F0)):
        raise NumericalFailure(f"free energy increased from {F0} to {F}")
    return InnerResult(theta, F, res.status, res.iterations, res.projected_grad_norm,
                       [h * f_scale for h in res.history])


@dataclass
class HardenResult:
    theta: np.ndarray
    cost: float
    starts: int


def _constrained_polish(single: DryingModel, theta0, max_iter, tol=1e-12):
    """Minimise one path's stage energy subject to ``x_M <= x_d`` with SLSQP."""
    scale = _scales(single)
    shift = single.lower
    x_d = single.cfg.x_d
    e0 = float(single.energy(single.project(theta0))[0][0])
    f_scale = max(abs(e0), 1.0)

    def theta_of(z):
        return single.project(shift + z * scale)

    cache = {}

    def sweep(z):
        # SLSQP asks for value, gradient, constraint and its Jacobian apart.
        key = z.tobytes()
        if key not in cache:
            cache.clear()
            X, dX, e, dE = single._sweep(theta_of(z), True)
            cache[key] = (e[0] / f_scale, dE[0] * scale / f_scale,
                          np.array([1.0 - X[0] / (1.0 + X[0]) / x_d]),
                          -(dX * scale) / ((1.0 + X[0]) ** 2 * x_d))
        return cache[key]

    def fun(z):
        return sweep(z)[:2]

    def slack(z):
        return sweep(z)[2]

    def slack_jac(z):
        return sweep(z)[3]

    upper = (single.upper - shift) / scale
    bounds = [(0.0, u if math.isfinite(u) else None) for u in upper]
    res = minimize(fun, (single.project(theta0) - shift) / scale, jac=True, method="SLSQP",
                   bounds=bounds, constraints=[{"type": "ineq", "fun": slack, "jac": slack_jac}],
                   options={"maxiter": max_iter, "ftol": tol})
    theta = theta_of(res.x)
    x_final = float(single.final_moisture(theta)[0][0])
    if not np.all(np.isfinite(theta)) or x_final > x_d * (1.0 + 1e-9):
        return None
    return theta, float(single.energy(theta)[0][0])


def harden(single: DryingModel, theta, sched: AnnealSchedule, trace=()):
    """Re-optimise one path's parameters under the hard moisture constraint.

    The penalty is replaced by the constraint ``x_M <= x_d`` itself and the
    stage energy is minimised with SLSQP. Starting points are the annealed
    parameters, a few earlier annealing iterates and scrambled Sobol points
    over the box with times capped at the annealed total time. The cheapest
    feasible result wins; ties go to the earliest start.
    """
    M = single.M
    theta = np.asarray(theta, float)
    starts = [theta]
    if trace:
        picks = np.unique(np.linspace(0, len(trace) - 1, min(4, len(trace))).round().astype(int))
        starts.extend(trace[i].theta for i in picks)
    if sched.harden_starts:
        lo = single.lower
        hi = single.upper.copy()
        hi[:M] = np.minimum(hi[:M], max(float(theta[:M].sum()), 2.0 * single.cfg.t_min))
        sampler = qmc.Sobol(d=2 * M, scramble=True, seed=sched.seed)
        m = math.ceil(math.log2(sched.harden_starts))
        starts.extend(lo + u * (hi - lo) for u in sampler.random_base2(m)[: sched.harden_starts])
    best = None
    for start in starts:
        out = _constrained_polish(single, start, sched.harden_max_iter)
        if out is not None and (best is None or out[1] < best[1]):
            best = out
    if best is None:
        raise NumericalFailure("no starting point lets the chosen path reach the target")
    return HardenResult(best[0], float(single.costs(best[0])[0]), len(starts))


def flip_search(model: DryingModel, path: Path, hard: HardenResult, sched: AnnealSchedule):
    """Best-improvement descent over paths that differ in one stage's technology.

    Each neighbour is hardened from the current parameters; the cheapest one
    replaces the incumbent while it lowers the cost. Shared parameters tie the
    annealer to one basin of the parameter space, and a single-stage switch
    is often all that separates it from a better path.
    """
    index = {p: i for i, p in enumerate(model.paths)}
    seen = {path}
    while True:
        best = (hard.cost, path, hard)
        for k in range(len(path)):
            stages = list(path.stages)
            stages[k] = 1 - stages[k]
            cand = Path(stages)
            if cand not in index or cand in seen:
                continue
            seen.add(cand)
            try:
                h = harden(model.restrict([index[cand]]), hard.theta, sched)
            except NumericalFailure:
                continue
            if h.cost < best[0] - 1e-9 * abs(best[0]):
                best = (h.cost, cand, h)
        if best[1] == path:
            return path, hard
        _, path, hard = best
        log.debug("flip search moved to %s (%.10g J)", path, hard.cost)


def default_initial_params(model: DryingModel):
    return model.unpack(feasible_start(model))


def solve(cfg: ProcessConfig, kc: KineticsConstants | None = None,
          sched: AnnealSchedule | None = None, params0=None, *, model=None,
          on_evaluate=None, on_trace=None, raise_on_cap=True) -> SolveResult:
    """Anneal over paths and stage parameters, then harden the winning path.

    ``on_evaluate`` sees every parameter vector the inner solver evaluates and
    ``on_trace`` every :class:`TraceRow` as it is produced.
    """
    sched = sched or AnnealSchedule()
    model = model or DryingModel(cfg, kc)
    theta = model.pack(params0) if params0 is not None else feasible_start(model)

    costs = model.costs(theta)
    span = float(costs.max() - costs.min())
    if span <= 0:
        span = max(float(abs(costs.mean())), 1.0)
    beta = sched.beta_min if sched.beta_min is not None else 0.01 / span
    dist = gibbs_weights(costs, beta, model.paths)
    fe_trace, trace = [], []
    it = 0
    while argmax_weight(dist)[1] <= sched.p_max and it < sched.max_outer_iters:
        inner = inner_minimize(theta, beta, model, gtol=sched.inner_gtol,
                               max_iter=sched.inner_max_iter, on_evaluate=on_evaluate)
        theta = inner.theta
        costs = model.costs(theta)
        dist = gibbs_weights(costs, beta, model.paths)
        fe_trace.append((beta, inner.free_energy))
        trace.append(TraceRow(beta, inner.free_energy, argmax_weight(dist)[1], theta.copy()))
        log.debug("beta=%.4g F=%.10g max_p=%.4f inner=%s/%d", beta, inner.free_energy,
                  trace[-1].max_p, inner.status, inner.iterations)
        if on_trace is not None:
            on_trace(trace[-1])
        beta *= sched.zeta
        it += 1

    converged = argmax_weight(dist)[1] > sched.p_max
    best, _ = argmax_weight(dist)
    hard = harden(model.restrict([model.paths.index(best)]), theta, sched, trace=trace)
    annealed = best
    if sched.flip_search:
        best, hard = flip_search(model, best, hard, sched)
    params = model.unpack(hard.theta)
    total, trajectory = path_cost(best, params, MoistureState(cfg.x0), cfg, model.kc)
    result = SolveResult(best, params, total, trajectory, dist, it, fe_trace, converged, trace,
                         annealed)
    if not converged and raise_on_cap:
        raise NotConverged(result)
    return result
