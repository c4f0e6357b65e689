"""Process configurations (paths) and probability weights over them."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import SpaceTooLarge
from .kinetics import Technology

MAX_PATHS = 2**20


@dataclass(frozen=True, order=True)
class Path:
    """Ordered technologies of the M stages.

    The canonical integer code sets bit k to the technology of stage k+1.
    """

    stages: tuple

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(Technology.parse(g) for g in self.stages))

    def __len__(self):
        return len(self.stages)

    @property
    def encoding(self) -> int:
        return sum(int(g) << k for k, g in enumerate(self.stages))

    @classmethod
    def from_encoding(cls, code: int, M: int) -> "Path":
        if not 0 <= code < 2**M:
            raise ValueError(f"encoding {code} out of range for M = {M}")
        return cls(tuple(Technology((code >> k) & 1) for k in range(M)))

    @classmethod
    def parse(cls, text: str) -> "Path":
        return cls(tuple(Technology.parse(s) for s in text.split("-")))

    def count(self, tech) -> int:
        tech = Technology.parse(tech)
        return sum(1 for g in self.stages if g == tech)

    def __str__(self):
        return "-".join(g.name for g in self.stages)


def enumerate_paths(M: int, allowed=None, cap: int = MAX_PATHS) -> list:
    """All paths in ascending encoding order.

    ``allowed`` gives the permitted technologies of every stage (one set per
    stage); ``None`` allows both technologies everywhere.
    """
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    if allowed is None:
        allowed = [tuple(Technology)] * M
    allowed = [sorted({Technology.parse(g) for g in stage}) for stage in allowed]
    if len(allowed) != M:
        raise ValueError(f"need {M} technology sets, got {len(allowed)}")
    size = int(np.prod([len(s) for s in allowed], dtype=object))
    if size > cap:
        raise SpaceTooLarge(f"{size} paths exceed the cap of {cap}")
    paths = [Path(combo) for combo in itertools.product(*allowed)]
    return sorted(paths, key=lambda p: p.encoding)


@dataclass(frozen=True)
class PathDistribution:
    """Weights over ``paths``; a dense vector aligned with the path list."""

    paths: tuple
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "paths", tuple(self.paths))
        object.__setattr__(self, "weights", w)
        if w.shape != (len(self.paths),):
            raise ValueError("weights must align with paths")
        if np.any(w < 0) or np.any(w > 1) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"invalid distribution (sum = {w.sum()!r})")

    @classmethod
    def uniform(cls, paths):
        return cls(paths, np.full(len(paths), 1.0 / len(paths)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["encoding", "path", "weight"])
        for p, w in zip(self.paths, self.weights):
            writer.writerow([p.encoding, str(p), f"{w:.10g}"])
        return buf.getvalue()


def argmax_weight(d: PathDistribution):
    """Most probable path; ties go to the smallest encoding."""
    top = d.weights.max()
    best = min((p.encoding, i) for i, (p, w) in enumerate(zip(d.paths, d.weights)) if w == top)
    i = best[1]
    return d.paths[i], float(d.weights[i])
