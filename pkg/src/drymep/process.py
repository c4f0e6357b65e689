"""Energy cost model of a staged batch drying process.

``path_cost`` is the readable scalar route: it rolls :func:`kinetics.step`
across the stages and adds up stage energies and the terminal penalty.
:class:`DryingModel` evaluates every path of the configuration space at once
with numpy and carries the analytic gradient with respect to the shared stage
parameters; it is what the solvers call.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import kinetics as kin
from .errors import ConfigError, ModelError, StageError
from .kinetics import KineticsConstants, MoistureState, StageParams, Technology
from .paths import Path, enumerate_paths

SECONDS_PER_MINUTE = 60.0


@dataclass(frozen=True)
class ProcessConfig:
    """Physical and problem constants of the batch dryer.

    Temperatures are kelvin, times minutes, powers watts. ``allowed`` lists the
    permitted technologies either once for every stage or once per stage.
    """

    alpha: float = 0.5
    rho_air: float = 1.2
    area: float = 0.01
    v_air: float = 2.0
    c_p: float = 1006.0
    T0: float = 298.15
    P_us: float = 100.0
    x0: float = kin.dry_to_wet(kin.X0_DRY)
    x_d: float = 0.075
    penalty_weight: float = 1e9
    t_min: float = 2.0
    T_bounds: tuple = kin.OPERATING_RANGE
    M: int = 4
    allowed: tuple = (("HA", "HAUS"),)

    def __post_init__(self):
        object.__setattr__(self, "T_bounds", tuple(float(v) for v in self.T_bounds))
        allowed = self.allowed
        if allowed and isinstance(allowed[0], (str, int, Technology)):
            allowed = (allowed,)
        object.__setattr__(
            self, "allowed", tuple(tuple(Technology.parse(g) for g in stage) for stage in allowed)
        )
        problems = self.problems()
        if problems:
            raise ConfigError(problems)

    def problems(self):
        """Every invariant violation, so they can be reported together."""
        out = []
        for name in ("alpha", "rho_air", "area", "v_air", "c_p", "T0", "penalty_weight", "t_min"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                out.append(f"process.{name} must be a positive finite number, got {v!r}")
        if not (math.isfinite(self.P_us) and self.P_us >= 0):
            out.append(f"process.P_us must be >= 0, got {self.P_us!r}")
        lo, hi = self.T_bounds
        if not lo < hi:
            out.append(f"process.T_bounds must be increasing, got {self.T_bounds}")
        if self.T0 > lo:
            out.append(f"process.T0 ({self.T0} K) must not exceed the lower temperature bound ({lo} K)")
        if not 0 < self.x_d < 1:
            out.append(f"process.x_d must lie in (0, 1), got {self.x_d}")
        if not 0 < self.x0 < 1:
            out.append(f"process.x0 must lie in (0, 1), got {self.x0}")
        if not (isinstance(self.M, int) and self.M >= 1):
            out.append(f"process.M must be an integer >= 1, got {self.M!r}")
        elif len(self.allowed) not in (1, self.M):
            out.append(f"process.allowed must have 1 or M={self.M} entries, got {len(self.allowed)}")
        if any(len(stage) == 0 or len(set(stage)) != len(stage) for stage in self.allowed):
            out.append("process.allowed entries must be non-empty and free of duplicates")
        return out

    @property
    def air_heat_rate(self):
        """Weighted heat capacity flow alpha * rho * A * V * c_p, in W/K."""
        return self.alpha * self.rho_air * self.area * self.v_air * self.c_p

    def stage_sets(self):
        if len(self.allowed) == 1:
            return [self.allowed[0]] * self.M
        return list(self.allowed)

    def replace(self, **changes):
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(changes)
        if "M" in changes and "allowed" not in changes and len(self.allowed) != 1:
            data["allowed"] = (self.allowed[0],)
        return ProcessConfig(**data)

    def to_dict(self):
        d = asdict(self)
        d["T_bounds"] = list(self.T_bounds)
        d["allowed"] = [[g.name for g in stage] for stage in self.allowed]
        return d


@dataclass(frozen=True)
class StageCostBreakdown:
    hot_air_energy: float
    ultrasound_energy: float

    @property
    def total(self):
        return self.hot_air_energy + self.ultrasound_energy


def stage_cost(tech, p: StageParams, cfg: ProcessConfig) -> StageCostBreakdown:
    """Energy in joules spent by one stage."""
    seconds = p.t * SECONDS_PER_MINUTE
    hot_air = cfg.air_heat_rate * (p.T - cfg.T0) * seconds
    ultrasound = cfg.P_us * seconds if Technology.parse(tech) == Technology.HAUS else 0.0
    return StageCostBreakdown(hot_air, ultrasound)


def terminal_penalty(x_final: MoistureState, cfg: ProcessConfig) -> float:
    excess = x_final.wet_basis - cfg.x_d
    if excess <= 0:
        return 0.0
    return cfg.penalty_weight * excess * excess


def path_cost(path, params, x0: MoistureState, cfg: ProcessConfig, kc: KineticsConstants):
    """Total cost of running ``path`` with ``params``; returns (cost, trajectory)."""
    stages = list(path.stages if isinstance(path, Path) else path)
    params = list(params)
    if len(stages) != len(params) or len(stages) != cfg.M:
        raise ValueError(
            f"path has {len(stages)} stages and params {len(params)}, expected M = {cfg.M}"
        )
    trajectory = [x0]
    energy = 0.0
    for k, (tech, p) in enumerate(zip(stages, params)):
        try:
            trajectory.append(kin.step(tech, trajectory[-1], p, kc))
        except ModelError as exc:
            raise StageError(k + 1, exc) from exc
        energy += stage_cost(tech, p, cfg).total
    return energy + terminal_penalty(trajectory[-1], cfg), trajectory


class SequentialProcessModel:
    """Interface the annealer and the oracle optimise against.

    A model owns a finite list of ``paths`` and a box of shared continuous
    parameters ``theta`` (``lower <= theta <= upper``). ``evaluate`` returns the
    cost of every path and, when asked, the Jacobian of those costs.
    """

    paths: list
    lower: np.ndarray
    upper: np.ndarray

    @property
    def n_params(self):
        return len(self.lower)

    def evaluate(self, theta, jacobian=False):
        raise NotImplementedError

    def costs(self, theta):
        return self.evaluate(theta)[0]

    def project(self, theta):
        return np.clip(theta, self.lower, self.upper)

    def restrict(self, indices):
        """Same model limited to a subset of its paths."""
        raise NotImplementedError


class DryingModel(SequentialProcessModel):
    """Vectorised cost of every drying path at shared stage parameters.

    ``theta`` packs the residence times first and then the temperatures:
    ``[t_1 .. t_M, T_1 .. T_M]``. Residence times are bounded above only by
    ``t_max`` (``inf`` for the annealer).
    """

    def __init__(self, cfg: ProcessConfig, kc: KineticsConstants | None = None,
                 paths=None, t_max=math.inf):
        self.cfg = cfg
        self.kc = kc if kc is not None else KineticsConstants(T_range=cfg.T_bounds)
        if kc is not None:
            self.kc.validate(cfg.T_bounds)
        self.paths = list(paths) if paths is not None else enumerate_paths(cfg.M, cfg.stage_sets())
        self.techs = np.array([[int(g) for g in p.stages] for p in self.paths], dtype=int)
        M = cfg.M
        lo, hi = cfg.T_bounds
        self.lower = np.r_[np.full(M, cfg.t_min), np.full(M, lo)]
        self.upper = np.r_[np.full(M, t_max), np.full(M, hi)]
        self.t_max = t_max
        kc = self.kc
        self._rate_coeffs = np.array([
            kc._k_sign(g) * np.asarray(kc._k_coeffs(g)) for g in Technology
        ])
        self._eq_coeffs = np.array([kc._m_coeffs(g) for g in Technology], dtype=float)

    @property
    def M(self):
        return self.cfg.M

    def restrict(self, indices):
        return DryingModel(self.cfg, self.kc, [self.paths[i] for i in indices], self.t_max)

    def split(self, theta):
        theta = np.asarray(theta, float)
        return theta[: self.M], theta[self.M:]

    def pack(self, params):
        params = list(params)
        return np.r_[[p.t for p in params], [p.T for p in params]].astype(float)

    def unpack(self, theta):
        t, T = self.split(theta)
        return [StageParams(float(a), float(b)) for a, b in zip(t, T)]

    def _stage_tables(self, T):
        """Rate and equilibrium (with temperature slopes) per technology and stage."""
        T = np.asarray(T, float)
        rc, ec = self._rate_coeffs, self._eq_coeffs
        rate = ((rc[:, :1] * T + rc[:, 1:2]) * T + rc[:, 2:]) / 1000.0
        rate_dT = (2.0 * rc[:, :1] * T + rc[:, 1:2]) / 1000.0
        eq = ((ec[:, :1] * T + ec[:, 1:2]) * T + ec[:, 2:]) / 10000.0
        eq_dT = (2.0 * ec[:, :1] * T + ec[:, 1:2]) / 10000.0
        return rate, rate_dT, eq, eq_dT

    def trajectories(self, theta):
        """Dry-basis moisture of every path after every stage, shape (P, M+1)."""
        t, T = self.split(theta)
        rate, _, eq, _ = self._stage_tables(T)
        X = np.empty((len(self.paths), self.M + 1))
        X[:, 0] = kin.wet_to_dry(self.cfg.x0)
        cols = np.arange(self.M)
        for k in range(self.M):
            g = self.techs[:, k]
            K, Meq = rate[g, cols[k]], eq[g, cols[k]]
            X[:, k + 1] = Meq + (X[:, k] - Meq) * np.exp(-K * t[k])
        return X

    def _sweep(self, theta, jacobian):
        """Final dry-basis moisture and stage energy of every path (with derivatives)."""
        cfg = self.cfg
        M = self.M
        t, T = self.split(theta)
        rate, rate_dT, eq, eq_dT = self._stage_tables(T)
        if np.any(rate <= 0):
            raise ModelError("non-positive rate constant inside the temperature box")
        cols = np.arange(M)
        g = self.techs
        K, Meq = rate[g, cols], eq[g, cols]
        decay = np.exp(-K * t)
        X = np.empty((len(self.paths), M + 1))
        X[:, 0] = kin.wet_to_dry(cfg.x0)
        for k in range(M):
            X[:, k + 1] = Meq[:, k] + (X[:, k] - Meq[:, k]) * decay[:, k]
        power = cfg.air_heat_rate * (T - cfg.T0) + g * cfg.P_us
        energy = power @ t * SECONDS_PER_MINUTE
        if not jacobian:
            return X[:, M], None, energy, None
        # Moisture after stage k moves with stage k's parameters directly and
        # is then damped by every later stage's decay factor.
        gap = X[:, :M] - Meq
        later = np.ones_like(decay)
        later[:, :-1] = np.cumprod(decay[:, :0:-1], axis=1)[:, ::-1]
        dX = np.empty((len(self.paths), 2 * M))
        dX[:, :M] = -K * gap * decay * later
        dX[:, M:] = (eq_dT[g, cols] * (1.0 - decay) - gap * decay * t * rate_dT[g, cols]) * later
        dE = np.empty_like(dX)
        dE[:, :M] = power * SECONDS_PER_MINUTE
        dE[:, M:] = cfg.air_heat_rate * t * SECONDS_PER_MINUTE
        return X[:, M], dX, energy, dE

    def final_moisture(self, theta, jacobian=False):
        """Wet-basis moisture after the last stage per path, and its Jacobian."""
        X, dX, _, _ = self._sweep(theta, jacobian)
        x = X / (1.0 + X)
        return x, (dX / ((1.0 + X) ** 2)[:, None] if jacobian else None)

    def energy(self, theta, jacobian=False):
        """Stage energy per path without the terminal penalty, and its Jacobian."""
        _, _, energy, dE = self._sweep(theta, jacobian)
        return energy, dE

    def evaluate(self, theta, jacobian=False):
        cfg = self.cfg
        X, dX, energy, dE = self._sweep(theta, jacobian)
        x = X / (1.0 + X)
        excess = np.maximum(x - cfg.x_d, 0.0)
        costs = energy + cfg.penalty_weight * excess**2
        if not jacobian:
            return costs, None
        J = dX * (2.0 * cfg.penalty_weight * excess / (1.0 + X) ** 2)[:, None] + dE
        return costs, J


def feasible_start(model: DryingModel, margin=0.995, grid=81, temperature=None):
    """Uniform stage parameters under which every path reaches the target.

    Each temperature on a grid gets the shortest common residence time (found
    by bisection) that dries every path to ``margin * x_d``; the temperature
    needing the least time wins. A given ``temperature`` (scalar or one value
    per stage) skips the grid.
    """
    cfg = model.cfg
    target = margin * cfg.x_d
    M = model.M
    best = None
    temps = [temperature] if temperature is not None else np.linspace(*cfg.T_bounds, grid)
    for T in temps:
        def worst(tau):
            theta = np.r_[np.full(M, tau), np.broadcast_to(T, (M,))]
            X = model.trajectories(theta)[:, -1]
            return np.max(X / (1 + X))

        lo, hi = cfg.t_min, cfg.t_min
        while worst(hi) > target:
            hi *= 2.0
            if hi > 1e6:
                break
        else:
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if worst(mid) > target:
                    lo = mid
                else:
                    hi = mid
            if best is None or hi < best[0]:
                best = (hi, T)
    if best is None:
        raise ModelError("no uniform schedule dries every path to the target moisture")
    tau, T = best
    return np.r_[np.full(M, tau), np.broadcast_to(T, (M,))]

