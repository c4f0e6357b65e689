"""Thin-layer drying kinetics for distillers dried grains (DDG).

The drying curve is a Lewis (first order) law fitted at a handful of air
temperatures and interpolated with quadratic polynomials in the absolute
temperature:

    rate      K_g(T) = (a T^2 + b T + c) / 1000      [1/min]
    balance   M_g(T) = (a T^2 + b T + c) / 10000     [dry basis]

A stage that starts from an arbitrary moisture is placed on the fitted curve
through an equivalent time ``t*`` so that consecutive stages compose exactly.
All temperatures are in kelvin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import BelowEquilibrium, InvalidEquilibrium, NonPositiveRate

X0_DRY = 3.16
T_MIN_K = 303.15
T_MAX_K = 343.15
OPERATING_RANGE = (T_MIN_K, T_MAX_K)
EQUILIBRIUM_ATOL = 1e-12


class Technology(IntEnum):
    HA = 0
    HAUS = 1

    @classmethod
    def parse(cls, value) -> "Technology":
        if isinstance(value, Technology):
            return value
        if isinstance(value, str):
            key = value.strip().upper().replace("/", "")
            if key in cls.__members__:
                return cls[key]
            if key.isdigit():
                return cls(int(key))
            raise ValueError(f"unknown technology {value!r}")
        return cls(int(value))


def wet_to_dry(wet):
    return wet / (1.0 - wet)


def dry_to_wet(dry):
    return dry / (1.0 + dry)


@dataclass(frozen=True)
class MoistureState:
    """Wet-basis moisture fraction of the sample (water mass / total mass)."""

    wet_basis: float

    def __post_init__(self):
        if not (0.0 <= self.wet_basis < 1.0) or math.isnan(self.wet_basis):
            raise ValueError(f"wet_basis must lie in [0, 1), got {self.wet_basis}")

    def dry_basis(self) -> float:
        return wet_to_dry(self.wet_basis)

    @classmethod
    def from_dry_basis(cls, dry: float) -> "MoistureState":
        if dry < 0 or not math.isfinite(dry):
            raise ValueError(f"dry basis moisture must be finite and >= 0, got {dry}")
        return cls(dry_to_wet(dry))


@dataclass(frozen=True)
class StageParams:
    """Residence time ``t`` in minutes and air temperature ``T`` in kelvin."""

    t: float
    T: float

    def check(self, t_min=2.0, T_bounds=OPERATING_RANGE, tol=1e-9):
        lo, hi = T_bounds
        if self.t < t_min - tol:
            raise ValueError(f"residence time {self.t} below minimum {t_min}")
        if not (lo - tol <= self.T <= hi + tol):
            raise ValueError(f"temperature {self.T} K outside [{lo}, {hi}]")
        return self


def _horner(coeffs, T):
    a, b, c = coeffs
    return (a * T + b) * T + c


def _horner_slope(coeffs, T):
    a, b, _ = coeffs
    return 2.0 * a * T + b


@dataclass(frozen=True)
class KineticsConstants:
    """Fitted DDG drying-curve constants.

    Polynomial coefficients are ``(a, b, c)`` in ``a T^2 + b T + c`` with T in
    kelvin; rate polynomials are divided by 1000 and equilibrium polynomials by
    10000 on evaluation. The published HA rate polynomial is negative across
    the whole heater range, so by default its sign is flipped (``negate_k0``).

    ``allow_sorption`` extends a stage that starts drier than its equilibrium
    moisture with the same exponential relaxation (the sample takes water back
    up). With it off, such a stage raises :class:`BelowEquilibrium`.
    """

    x0_dry: float = X0_DRY
    k0_coeffs: tuple = (0.074493, -45.5058, 6839.9)
    k1_coeffs: tuple = (-0.05811, 39.962, -6680.1)
    m0_coeffs: tuple = (0.2479, -172.09, 30133.0)
    m1_coeffs: tuple = (0.1468, -107.27, 19720.0)
    negate_k0: bool = True
    allow_sorption: bool = True
    T_range: tuple = OPERATING_RANGE

    def __post_init__(self):
        for name in ("k0_coeffs", "k1_coeffs", "m0_coeffs", "m1_coeffs", "T_range"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        self.validate()

    def validate(self, T_range=None):
        """Check rate positivity and equilibrium bounds on a 0.1 K grid."""
        lo, hi = self.T_range if T_range is None else T_range
        grid = np.linspace(lo, hi, int(round((hi - lo) / 0.1)) + 1)
        for tech in Technology:
            k = self.rate_array(tech, grid)
            if np.any(k <= 0):
                bad = grid[np.argmax(k <= 0)]
                raise NonPositiveRate(
                    f"{tech.name} rate constant is non-positive at T = {bad:.2f} K"
                )
            m = self.equilibrium_array(tech, grid)
            if np.any((m <= 0) | (m >= self.x0_dry)):
                bad = grid[np.argmax((m <= 0) | (m >= self.x0_dry))]
                raise InvalidEquilibrium(
                    f"{tech.name} equilibrium moisture outside (0, {self.x0_dry}) at T = {bad:.2f} K"
                )

    def _k_coeffs(self, tech):
        return self.k1_coeffs if tech == Technology.HAUS else self.k0_coeffs

    def _k_sign(self, tech):
        return -1.0 if (tech == Technology.HA and self.negate_k0) else 1.0

    def _m_coeffs(self, tech):
        return self.m1_coeffs if tech == Technology.HAUS else self.m0_coeffs

    # Array forms used by the vectorised path evaluator.
    def rate_array(self, tech, T):
        return self._k_sign(tech) * _horner(self._k_coeffs(tech), np.asarray(T, float)) / 1000.0

    def rate_slope(self, tech, T):
        return self._k_sign(tech) * _horner_slope(self._k_coeffs(tech), np.asarray(T, float)) / 1000.0

    def equilibrium_array(self, tech, T):
        return _horner(self._m_coeffs(tech), np.asarray(T, float)) / 10000.0

    def equilibrium_slope(self, tech, T):
        return _horner_slope(self._m_coeffs(tech), np.asarray(T, float)) / 10000.0

    def to_dict(self):
        return {
            "x0_dry": self.x0_dry,
            "k0_coeffs": list(self.k0_coeffs),
            "k1_coeffs": list(self.k1_coeffs),
            "m0_coeffs": list(self.m0_coeffs),
            "m1_coeffs": list(self.m1_coeffs),
            "negate_k0": self.negate_k0,
            "allow_sorption": self.allow_sorption,
        }


DEFAULT_KINETICS = KineticsConstants()


def rate_constant(tech, T, c: KineticsConstants = DEFAULT_KINETICS) -> float:
    """Lewis rate constant K in 1/min."""
    tech = Technology.parse(tech)
    k = float(c.rate_array(tech, T))
    if k <= 0:
        raise NonPositiveRate(f"{tech.name} rate constant {k:.6g} <= 0 at T = {T} K")
    return k


def equilibrium_moisture(tech, T, c: KineticsConstants = DEFAULT_KINETICS) -> float:
    """Equilibrium dry-basis moisture approached at long residence times."""
    tech = Technology.parse(tech)
    m = float(c.equilibrium_array(tech, T))
    if not (0.0 < m < c.x0_dry):
        raise InvalidEquilibrium(
            f"{tech.name} equilibrium moisture {m:.6g} outside (0, {c.x0_dry}) at T = {T} K"
        )
    return m


def equivalent_time(tech, T, x: MoistureState, t, c: KineticsConstants = DEFAULT_KINETICS) -> float:
    """Time on the fitted curve that reaches ``x``, plus the residence time ``t``."""
    k = rate_constant(tech, T, c)
    m = equilibrium_moisture(tech, T, c)
    X = x.dry_basis()
    if X - m <= 0:
        raise BelowEquilibrium(
            f"dry-basis moisture {X:.6g} is not above equilibrium {m:.6g} for "
            f"{Technology.parse(tech).name} at T = {T} K"
        )
    return math.log((c.x0_dry - m) / (X - m)) / k + t


def step(tech, x: MoistureState, p: StageParams, c: KineticsConstants = DEFAULT_KINETICS) -> MoistureState:
    """Moisture at the end of one stage run with technology ``tech``."""
    k = rate_constant(tech, p.T, c)
    m = equilibrium_moisture(tech, p.T, c)
    X = x.dry_basis()
    gap = X - m
    if abs(gap) <= EQUILIBRIUM_ATOL:
        return x
    if gap < 0:
        if not c.allow_sorption:
            raise BelowEquilibrium(
                f"dry-basis moisture {X:.6g} is below equilibrium {m:.6g} for "
                f"{Technology.parse(tech).name} at T = {p.T} K"
            )
        return MoistureState.from_dry_basis(m + gap * math.exp(-k * p.t))
    t_star = equivalent_time(tech, p.T, x, p.t, c)
    X_new = math.exp(-k * t_star) * (c.x0_dry - m) + m
    return MoistureState.from_dry_basis(X_new)
