"""Projected quasi-Newton minimisation over a box.

Two-metric projection: variables pinned at a bound with the gradient pushing
outwards are frozen for the iteration, the rest take a BFGS step, and a
projected Armijo backtracking search keeps every trial point inside the box.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np



@dataclass
class BoxResult:
    x: np.ndarray
    f: float
    grad: np.ndarray
    iterations: int
    evaluations: int
    status: str  # "converged" | "roundoff" | "max_iter" | "stalled"
    projected_grad_norm: float
    decrement: float = 0.0
    history: list = field(default_factory=list)

    @property
    def converged(self):
        return self.status in ("converged", "roundoff")


def projected_gradient(x, g, lower, upper):
    return x - np.clip(x - g, lower, upper)


def fd_hessian(grad, x, lower, upper, g=None, rel_step=1e-6):
    """Symmetrised forward-difference Hessian of ``grad`` that stays inside the box."""
    n = len(x)
    g = grad(x) if g is None else g
    H = np.empty((n, n))
    for i in range(n):
        h = rel_step * (1.0 + abs(x[i]))
        if x[i] + h > upper[i]:
            h = -h
        e = x.copy()
        e[i] += h
        H[:, i] = (grad(e) - g) / h
    return 0.5 * (H + H.T)


def _newton_direction(H, g, free):
    d = np.zeros_like(g)
    if not np.any(free):
        return d
    Hf = H[np.ix_(free, free)]
    gf = g[free]
    shift = 0.0
    scale = max(float(np.max(np.abs(np.diag(Hf)))), 1e-12)
    for _ in range(40):
        try:
            L = np.linalg.cholesky(Hf + shift * np.eye(len(gf)))
        except np.linalg.LinAlgError:
            shift = max(2.0 * shift, 1e-10 * scale) * 4.0
            continue
        d[free] = -np.linalg.solve(L.T, np.linalg.solve(L, gf))
        return d
    d[free] = -gf
    return d


def minimize_box(fun, x0, lower, upper, *, gtol=1e-6, max_iter=500, c1=1e-4,
                 max_backtracks=60, hessian=None, active_tol=1e-3, on_evaluate=None):
    """Minimise ``fun`` (returning value and gradient) subject to ``lower <= x <= upper``.

    Search directions are quasi-Newton (BFGS) by default; ``hessian="fd"``
    switches to a damped projected Newton step with a finite-difference
    Hessian of the gradient, which copes far better with stiff penalties.

    ``gtol`` bounds the infinity norm of the projected gradient. The objective
    never increases between accepted iterates. If neither the model step nor
    the projected steepest-descent search finds a decrease the iterate is
    stationary to float resolution (``"roundoff"``); if every trial point was
    non-finite the result is ``"stalled"``.
    """
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    x = np.clip(np.asarray(x0, float), lower, upper)
    n = len(x)
    evals = 0

    def call(z):
        nonlocal evals
        evals += 1
        if on_evaluate is not None:
            on_evaluate(z)
        val, grad = fun(z)
        return float(val), np.asarray(grad, float)

    def grad_only(z):
        return call(z)[1]

    f, g = call(x)
    if not np.isfinite(f):
        raise ValueError(f"objective is not finite at the starting point ({f})")
    Hinv = np.eye(n)
    history = [f]
    decrement = 0.0
    status = "max_iter"
    it = 0
    for it in range(1, max_iter + 1):
        pg = projected_gradient(x, g, lower, upper)
        pg_norm = float(np.max(np.abs(pg))) if n else 0.0
        if pg_norm <= gtol:
            status = "converged"
            it -= 1
            break

        # Bertsekas' epsilon-active set: near-bound variables pushed outwards
        # are held fixed this iteration.
        eps = min(active_tol, float(np.linalg.norm(pg)))
        pinned = ((x <= lower + eps) & (g > 0)) | ((x >= upper - eps) & (g < 0))
        free = ~pinned

        accepted = False
        finite_trial = False
        decrement = 0.0
        for attempt in ("model", "gradient"):
            if attempt == "model":
                if hessian == "fd":
                    d = _newton_direction(fd_hessian(grad_only, x, lower, upper, g), g, free)
                elif hessian is not None:
                    d = _newton_direction(hessian(x), g, free)
                else:
                    d = np.zeros(n)
                    d[free] = -Hinv[np.ix_(free, free)] @ g[free]
                if g @ d >= 0:
                    continue
                decrement = float(-(g @ d))
                step = 1.0
            else:
                Hinv = np.eye(n)
                d = np.zeros(n)
                d[free] = -g[free]
                if not np.any(d):
                    d = -pg
                # First trial is a unit-length move.
                step = 1.0 / max(float(np.max(np.abs(d))), 1e-300)
            for _ in range(max_backtracks):
                x_new = np.clip(x + step * d, lower, upper)
                f_new, g_new = call(x_new)
                if np.isfinite(f_new):
                    finite_trial = True
                    predicted = g @ (x_new - x)
                    if f_new <= f + c1 * predicted:
                        accepted = True
                        break
                    # Minimiser of the quadratic through f, its slope and f_new.
                    curv = f_new - f - predicted
                    ratio = -0.5 * predicted / curv if curv > 0 else 0.5
                    step *= min(max(ratio, 0.1), 0.5)
                else:
                    step *= 0.5
            if accepted:
                break

        if not accepted or not np.any(x_new - x):
            # Steepest descent failing over the whole backtracking range
            # cannot happen in exact arithmetic away from a stationary point.
            status = "roundoff" if finite_trial else "stalled"
            break

        s = x_new - x
        y = g_new - g
        sy = s @ y
        if hessian is None and sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            V = np.eye(n) - rho * np.outer(s, y)
            Hinv = V @ Hinv @ V.T + rho * np.outer(s, s)
        x, f, g = x_new, f_new, g_new
        history.append(f)

    pg_norm = float(np.max(np.abs(projected_gradient(x, g, lower, upper)))) if n else 0.0
    if status == "max_iter" and pg_norm <= gtol:
        status = "converged"
    return BoxResult(x, f, g, it, evals, status, pg_norm, decrement, history)
