"""Levenberg-Marquardt least squares in the Bevington/Marquardt form.

The curvature matrix ``J^T J`` has its diagonal scaled by ``1 + lambda``;
``lambda`` drops tenfold after an accepted step and rises tenfold after a
rejected one. Iteration stops when an accepted step lowers chi^2 by less
than ``rel_tol`` relative to the previous value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

LAMBDA_START = 1e-3
LAMBDA_MAX = 1e16
# chi^2 per residual below which a fit counts as exact
EXACT_FLOOR = 1e-28


class Infeasible(Exception):
    """Raised by a residual function for parameters outside the model domain."""


@dataclass
class LMResult:
    x: np.ndarray
    chi2: float
    converged: bool
    n_iter: int
    reason: str
    chi2_trace: list[float] = field(default_factory=list)
    x_trace: list[np.ndarray] = field(default_factory=list)
    # (accepted, lambda after the trial) for every trial step
    steps: list[tuple[bool, float]] = field(default_factory=list)


def _chi2(fun, x):
    try:
        r = np.asarray(fun(x), dtype=float)
    except (Infeasible, ArithmeticError, ValueError):
        return None, np.inf
    if not np.all(np.isfinite(r)):
        return None, np.inf
    with np.errstate(over="ignore"):
        s = float(r @ r)
    return (r, s) if np.isfinite(s) else (None, np.inf)


def jacobian(fun: Callable, x: np.ndarray, r0: np.ndarray, rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian, one-sided where a side is infeasible."""
    x = np.asarray(x, dtype=float)
    J = np.empty((r0.size, x.size))
    for i in range(x.size):
        h = rel_step * max(abs(x[i]), 1.0)
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        rp, sp = _chi2(fun, xp)
        rm, sm = _chi2(fun, xm)
        if rp is not None and rm is not None:
            J[:, i] = (rp - rm) / (2 * h)
        elif rp is not None:
            J[:, i] = (rp - r0) / h
        elif rm is not None:
            J[:, i] = (r0 - rm) / h
        else:
            J[:, i] = 0.0
    return J


def levenberg_marquardt(
    fun: Callable[[np.ndarray], np.ndarray],
    x0,
    *,
    rel_tol: float = 1e-3,
    max_iter: int = 500,
) -> LMResult:
    """Minimise ``sum(fun(x)**2)`` starting from ``x0``.

    ``fun`` may raise :class:`Infeasible` (or return non-finite values) to
    reject a trial point.
    """
    x = np.array(x0, dtype=float)
    r, s = _chi2(fun, x)
    if r is None:
        return LMResult(x, np.inf, False, 0, "infeasible start", [np.inf], [x.copy()])
    chi2_trace = [s]
    x_trace = [x.copy()]
    n = r.size
    lam = LAMBDA_START
    steps: list[tuple[bool, float]] = []

    def done(converged, n_iter, reason):
        return LMResult(x, s, converged, n_iter, reason, chi2_trace, x_trace, steps)

    for it in range(1, max_iter + 1):
        if s <= EXACT_FLOOR * n:
            return done(True, it - 1, "exact fit")
        J = jacobian(fun, x, r)
        A = J.T @ J
        g = J.T @ r
        diag = np.diag(A).copy()
        diag[diag <= 0] = 1e-12 * max(diag.max(initial=0.0), 1.0)
        while True:
            M = A + lam * np.diag(diag)
            try:
                step = np.linalg.solve(M, -g)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(M, -g, rcond=None)[0]
            x_new = x + step
            r_new, s_new = _chi2(fun, x_new)
            if s_new < s:
                lam = max(lam / 10.0, 1e-12)
                steps.append((True, lam))
                break
            lam *= 10.0
            steps.append((False, lam))
            if lam > LAMBDA_MAX:
                # no descent direction left at working precision
                return done(True, it - 1, "stationary")
        rel = (s - s_new) / s
        x, r, s = x_new, r_new, s_new
        chi2_trace.append(s)
        x_trace.append(x.copy())
        if rel < rel_tol or s <= EXACT_FLOOR * n:
            return done(True, it, "chi2 change below tolerance")
    return done(False, max_iter, "max_iter reached")
