"""Brute-force reference optimiser for small stage counts.

Every path is optimised on its own. Seeds come from three sources:

* a dynamic program over a grid of moisture breakpoints (drying models only):
  once the moisture entering and leaving a stage is fixed, its residence time
  follows from the temperature, so a stage reduces to a scan over a
  temperature grid and the path to a shortest-path problem on the grid;
* a coarse grid of uniform schedules (every stage at one time and one
  temperature);
* a scrambled Sobol multistart over the full parameter box.

Each seed is polished with L-BFGS-B and the best result kept. Drying models
are polished under a very stiff penalty and the last stage is then stretched
in closed form until the target is met exactly, so every reported cost is
that of a schedule that reaches ``x_d``. The optimiser certifies nothing, but
it searches far more exhaustively than the annealer does.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .errors import SpaceTooLarge
from .paths import Path
from .kinetics import Technology, wet_to_dry
from .process import SECONDS_PER_MINUTE, DryingModel, SequentialProcessModel

GRID_CAP_M = 4
MULTISTART_CAP_M = 6
MAX_PATHS = 64
# Polishing penalty: stiff enough that the target is met to ~1e-9 before the
# closed-form landing below removes what is left.
STIFF_PENALTY = 1e15


@dataclass(frozen=True)
class GridSpec:
    t_points: int = 24
    T_points: int = 161
    moisture_points: int = 240
    multistart: int = 32
    grid_seeds: int = 4
    t_hi: float = 120.0
    seed: int = 0

    def __post_init__(self):
        if min(self.t_points, self.T_points, self.moisture_points) < 16:
            raise ValueError("grid resolution must be at least 16 points per axis")

    def refined(self, factor=2):
        return replace(self, t_points=self.t_points * factor, T_points=self.T_points * factor,
                       moisture_points=self.moisture_points * factor)

    def to_dict(self):
        return asdict(self)


@dataclass
class PathOptimum:
    path: Path
    theta: np.ndarray
    cost: float

    @property
    def params(self):
        M = len(self.theta) // 2
        return list(zip(self.theta[:M].tolist(), self.theta[M:].tolist()))


@dataclass
class OracleReport:
    per_path: list
    global_best: PathOptimum
    grid_spec: GridSpec
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        def row(r):
            M = len(r.theta) // 2
            return {
                "path": str(r.path),
                "encoding": r.path.encoding,
                "t_min": [float(v) for v in r.theta[:M]],
                "T_C": [float(v - 273.15) for v in r.theta[M:]],
                "cost": float(r.cost),
            }

        return json.dumps({"grid_spec": self.grid_spec.to_dict(),
                           "global_best": row(self.global_best),
                           "per_path": [row(r) for r in self.per_path]}, indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["encoding", "path", "cost_J", "t_min", "T_C"])
        for r in self.per_path:
            M = len(r.theta) // 2
            w.writerow([r.path.encoding, str(r.path), f"{r.cost:.10g}",
                        " ".join(f"{v:.10g}" for v in r.theta[:M]),
                        " ".join(f"{v - 273.15:.10g}" for v in r.theta[M:])])
        return buf.getvalue()


def _polish(model, theta0):
    M = model.n_params // 2
    lower = model.lower
    scale = np.r_[np.full(M, 10.0), np.maximum(model.upper[M:] - lower[M:], 1e-3)]
    f_scale = max(abs(float(model.costs(theta0)[0])), 1.0)

    def fun(z):
        costs, J = model.evaluate(lower + z * scale, jacobian=True)
        return costs[0] / f_scale, J[0] * scale / f_scale

    upper = (model.upper - lower) / scale
    bounds = [(0.0, None if not math.isfinite(u) else u) for u in upper]
    z0 = (theta0 - lower) / scale
    res = minimize(fun, z0, jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": 3000, "ftol": 1e-15, "gtol": 1e-12, "maxcor": 20})
    return model.project(lower + res.x * scale)


def land_last_stage(model: DryingModel, theta):
    """Lengthen the last stage just enough that the path ends at ``x_d``.

    The Lewis law gives the residence time in closed form. Schedules already at
    or below the target are returned unchanged, as are those whose last stage
    cannot reach it.
    """
    M = model.M
    theta = np.array(theta, float)
    X = model.trajectories(theta)[0]
    X_d = wet_to_dry(model.cfg.x_d)
    if X[-1] <= X_d:
        return theta
    g = model.paths[0].stages[-1]
    T = theta[-1]
    K = float(model.kc.rate_array(g, T))
    eq = float(model.kc.equilibrium_array(g, T))
    if not X[-2] > X_d > eq:
        return theta
    theta[M - 1] = max(theta[M - 1], math.log((X[-2] - eq) / (X_d - eq)) / K)
    return theta


def _polish_feasible(model, theta0):
    """Polish one seed; drying models get a stiff penalty and an exact landing."""
    if not isinstance(model, DryingModel):
        theta = _polish(model, theta0)
        return theta, float(model.costs(theta)[0])
    cfg = model.cfg
    stiff = DryingModel(cfg.replace(penalty_weight=max(cfg.penalty_weight, STIFF_PENALTY)),
                        model.kc, model.paths, model.t_max)
    theta = land_last_stage(model, _polish(stiff, theta0))
    refined = _refine_constrained(model, theta)
    if refined is not None and refined[1] < float(model.costs(theta)[0]):
        return refined
    return theta, float(model.costs(theta)[0])


def _refine_constrained(model: DryingModel, theta0):
    """Energy minimisation under ``x_M <= x_d`` itself (SLSQP), from a landed point."""
    M = model.M
    scale = np.r_[np.full(M, 10.0), np.maximum(model.upper[M:] - model.lower[M:], 1e-3)]
    lower = model.lower
    x_d = model.cfg.x_d
    e0 = max(float(model.energy(theta0)[0][0]), 1.0)

    def theta_of(z):
        return model.project(lower + z * scale)

    def fun(z):
        e, dE = model.energy(theta_of(z), jacobian=True)
        return e[0] / e0, dE[0] * scale / e0

    def slack(z):
        return 1.0 - model.final_moisture(theta_of(z))[0] / x_d

    def slack_jac(z):
        return -model.final_moisture(theta_of(z), jacobian=True)[1] * scale / x_d

    upper = (model.upper - lower) / scale
    bounds = [(0.0, None if not math.isfinite(u) else u) for u in upper]
    res = minimize(fun, (theta0 - lower) / scale, jac=True, method="SLSQP", bounds=bounds,
                   constraints=[{"type": "ineq", "fun": slack, "jac": slack_jac}],
                   options={"maxiter": 500, "ftol": 1e-14})
    theta = land_last_stage(model, theta_of(res.x))
    if not np.all(np.isfinite(theta)) or model.final_moisture(theta)[0][0] > x_d * (1 + 1e-12):
        return None
    return theta, float(model.costs(theta)[0])


class _StageTables:
    """Cheapest single-stage transitions between moisture grid points."""

    def __init__(self, model: DryingModel, spec: GridSpec):
        cfg, kc = model.cfg, model.kc
        X_d = wet_to_dry(cfg.x_d)
        X_start = wet_to_dry(cfg.x0)
        lo, hi = cfg.T_bounds
        T = np.linspace(lo, hi, spec.T_points)
        eq_floor = min(float(kc.equilibrium_array(g, T).min()) for g in Technology)
        # Dense near the target where equilibrium makes drying slow.
        inner = X_d + (X_start - X_d) * np.linspace(0.0, 1.0, spec.moisture_points) ** 3
        below = X_d - (X_d - eq_floor) * np.linspace(0.0, 0.5, 6)[1:]
        self.X = np.unique(np.r_[below[below > eq_floor], inner, X_start])[::-1]
        self.start = 0
        self.targets = np.flatnonzero(self.X <= X_d * (1 + 1e-12))
        self.T = T
        self.cost = {}
        self.argT = {}
        Xa = self.X[:, None, None]
        Xb = self.X[None, :, None]
        for g in Technology:
            K = kc.rate_array(g, T)[None, None, :]
            M = kc.equilibrium_array(g, T)[None, None, :]
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.log((Xa - M) / (Xb - M)) / K
            ok = (Xb > M) & (Xa > Xb) & np.isfinite(t) & (t >= cfg.t_min)
            power = cfg.air_heat_rate * (T - cfg.T0) + int(g) * cfg.P_us
            c = np.where(ok, power[None, None, :] * t * SECONDS_PER_MINUTE, np.inf)
            j = np.argmin(c, axis=2)
            self.cost[g] = np.take_along_axis(c, j[..., None], axis=2)[..., 0]
            self.argT[g] = T[j]

    def seed(self, path, kc):
        """Grid-optimal schedule for ``path`` as a parameter vector, or None."""
        n = len(self.X)
        J = np.full(n, np.inf)
        J[self.start] = 0.0
        back = []
        for g in path.stages:
            total = J[:, None] + self.cost[g]
            arg = np.argmin(total, axis=0)
            J = total[arg, np.arange(n)]
            back.append(arg)
        end = self.targets[np.argmin(J[self.targets])]
        if not np.isfinite(J[end]):
            return None
        idx = [end]
        for arg in reversed(back):
            idx.append(arg[idx[-1]])
        idx = idx[::-1]
        t, T = [], []
        for k, g in enumerate(path.stages):
            a, b = idx[k], idx[k + 1]
            Tk = self.argT[g][a, b]
            K = float(kc.rate_array(g, Tk))
            M = float(kc.equilibrium_array(g, Tk))
            t.append(math.log((self.X[a] - M) / (self.X[b] - M)) / K)
            T.append(Tk)
        return np.r_[t, T]


_TABLES: dict = {}


def _stage_tables(model, spec):
    # Tables depend only on the process, the kinetics and the grid; the last
    # one built is kept because every path of a model shares it.
    key = (model.cfg, model.kc, spec)
    if key not in _TABLES:
        _TABLES.clear()
        _TABLES[key] = _StageTables(model, spec)
    return _TABLES[key]


def optimize_single_path(model: SequentialProcessModel, grid_spec: GridSpec = GridSpec()):
    """Best parameters of a single-path model; returns (theta, cost)."""
    if len(model.paths) != 1:
        raise ValueError("optimize_single_path needs a model restricted to one path")
    n = model.n_params
    M = n // 2
    if M > MULTISTART_CAP_M:
        raise SpaceTooLarge(f"oracle handles at most M = {MULTISTART_CAP_M} stages, got {M}")
    t_lo = model.lower[:M]
    T_lo, T_hi = model.lower[M:], model.upper[M:]
    t_hi = np.minimum(model.upper[:M], grid_spec.t_hi)

    seeds = []
    if isinstance(model, DryingModel):
        seed = _stage_tables(model, grid_spec).seed(model.paths[0], model.kc)
        if seed is not None:
            seeds.append(model.project(seed))
    if M <= GRID_CAP_M:
        # Uniform schedules: the total time is spread evenly over the stages.
        totals = np.linspace(t_lo.sum(), t_hi.sum(), grid_spec.t_points)
        temps = np.linspace(0.0, 1.0, grid_spec.T_points)
        grid = []
        for tot in totals:
            for u in temps:
                theta = np.r_[np.full(M, tot / M), T_lo + u * (T_hi - T_lo)]
                grid.append(model.project(theta))
        grid = np.array(grid)
        costs = np.array([model.costs(th)[0] for th in grid])
        order = np.argsort(costs, kind="stable")[: grid_spec.grid_seeds]
        seeds.extend(grid[order])

    sampler = qmc.Sobol(d=n, scramble=True, seed=grid_spec.seed)
    m = max(0, math.ceil(math.log2(max(grid_spec.multistart, 1))))
    unit = sampler.random_base2(m)[: grid_spec.multistart]
    lo = np.r_[t_lo, T_lo]
    hi = np.r_[t_hi, T_hi]
    seeds.extend(lo + unit * (hi - lo))

    best = None
    for theta0 in seeds:
        theta, cost = _polish_feasible(model, np.asarray(theta0, float))
        if best is None or cost < best[1]:
            best = (theta, cost)
    return best


def exhaustive_solve(model: SequentialProcessModel, grid_spec: GridSpec = GridSpec()) -> OracleReport:
    if len(model.paths) > MAX_PATHS:
        raise SpaceTooLarge(f"{len(model.paths)} paths exceed the oracle cap of {MAX_PATHS}")
    per_path = []
    for i, path in enumerate(model.paths):
        theta, cost = optimize_single_path(model.restrict([i]), grid_spec)
        per_path.append(PathOptimum(path, theta, cost))
    best = min(per_path, key=lambda r: (r.cost, r.path.encoding))
    return OracleReport(per_path, best, grid_spec)
