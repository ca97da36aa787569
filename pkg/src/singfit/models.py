"""Closed-form model curves and parameter relations.

Three nested families are covered:

* Cagan: constant growth-rate index, ``p(t) = p0 + r0 * tau``.
* LF (linear feedback): ``r = r0 * exp(a_p * tau)``, double-exponential CPI.
* NLF (nonlinear feedback, exponent ``beta > 0``): rate and log-CPI diverge
  at the critical time ``t_c`` with
  ``(t_c - t0) / dt = 1 / (beta * a_p * r0**beta)``.

Here ``tau = (t - t0) / dt``. All public functions accept scalars or numpy
arrays for ``t`` and return the same shape.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ArgumentError,
    NoSingularityError,
    PoleError,
    RangeError,
    SingularityError,
    UnsupportedBranchError,
)

# Model curves are never evaluated closer than this (in units of dt) to t_c.
SINGULARITY_GUARD = 1e-9
CLOSURE_TOL = 1e-9


class Family(str, enum.Enum):
    CAGAN = "cagan"
    LF = "lf"
    NLF = "nlf"
    STZ = "stz"


class Objective(str, enum.Enum):
    LOG_CPI = "logcpi"
    RAW_CPI = "rawcpi"
    JOINT = "joint"


@dataclass(frozen=True)
class ModelSpec:
    family: Family
    objective: Objective = Objective.LOG_CPI

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "objective", Objective(self.objective))
        if self.family is Family.STZ and self.objective is not Objective.RAW_CPI:
            raise ArgumentError("the STZ family is only defined for the raw-CPI objective")


def critical_time(t0: float, dt: float, r0: float, beta: float, a_p: float) -> float:
    if beta == 0:
        raise NoSingularityError("beta = 0 (linear feedback) has no critical time")
    if not (dt > 0 and r0 > 0 and beta > 0 and a_p > 0):
        raise ArgumentError("dt, r0, beta and a_p must be positive")
    return t0 + dt / (beta * a_p * r0**beta)


def feedback_strength(t0: float, dt: float, r0: float, beta: float, t_c: float) -> float:
    if beta == 0:
        raise NoSingularityError("beta = 0 (linear feedback) has no critical time")
    if not (dt > 0 and r0 > 0 and beta > 0 and t_c > t0):
        raise ArgumentError("dt, r0, beta and t_c - t0 must be positive")
    return dt / (beta * r0**beta * (t_c - t0))


def alpha_from_beta(beta: float) -> float:
    if beta == 0:
        raise NoSingularityError("beta = 0 maps to an infinite alpha")
    if not 0 < beta <= 1:
        raise ArgumentError(f"beta must lie in (0, 1], got {beta}")
    return (1.0 - beta) / beta


def beta_from_alpha(alpha: float) -> float:
    if not alpha >= 0:
        raise ArgumentError(f"alpha must be non-negative, got {alpha}")
    return 1.0 / (1.0 + alpha)


@dataclass(frozen=True)
class ParameterSet:
    """Model parameters.

    For ``beta > 0`` give either ``t_c`` or ``a_p``; the other one is
    derived. If both are given they must satisfy the critical-time relation.
    """

    t0: float
    r0: float
    dt: float = 1.0
    p0: float = 0.0
    a_p: float | None = None
    beta: float = 0.0
    t_c: float | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ArgumentError("dt must be positive")
        if self.beta < 0:
            raise ArgumentError("beta must be non-negative")
        if self.beta == 0:
            if self.t_c is not None:
                raise ArgumentError("t_c is only defined for beta > 0")
            return
        if self.t_c is None and self.a_p is None:
            raise ArgumentError("beta > 0 requires t_c or a_p")
        if self.t_c is None:
            tc = critical_time(self.t0, self.dt, self.r0, self.beta, self.a_p)
            object.__setattr__(self, "t_c", tc)
        elif self.a_p is None:
            ap = feedback_strength(self.t0, self.dt, self.r0, self.beta, self.t_c)
            object.__setattr__(self, "a_p", ap)
        else:
            closure = (self.t_c - self.t0) / self.dt * self.beta * self.a_p * self.r0**self.beta
            if abs(closure - 1.0) > CLOSURE_TOL:
                raise ArgumentError(f"t_c and a_p inconsistent (closure {closure!r})")
        if not self.t_c > self.t0:
            raise ArgumentError("t_c must be later than t0")

    @property
    def has_singularity(self) -> bool:
        return self.beta > 0

    def tau(self, t):
        return (np.asarray(t, dtype=float) - self.t0) / self.dt

    def to_dict(self) -> dict:
        derived = "a_p" if self.beta > 0 else None
        return {
            "t0": self.t0,
            "dt": self.dt,
            "p0": self.p0,
            "r0": self.r0,
            "beta": self.beta,
            "t_c": self.t_c,
            "a_p": self.a_p,
            "derived": derived,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterSet":
        beta = float(d.get("beta", 0.0) or 0.0)
        kw = dict(
            t0=float(d["t0"]),
            r0=float(d["r0"]),
            dt=float(d.get("dt", 1.0)),
            p0=float(d.get("p0", 0.0)),
            beta=beta,
        )
        # t_c is the stored parameter for beta > 0; a_p is re-derived from it
        if beta > 0 and d.get("t_c") is not None:
            kw["t_c"] = float(d["t_c"])
        elif d.get("a_p") is not None:
            kw["a_p"] = float(d["a_p"])
        return cls(**kw)


@dataclass(frozen=True)
class StzParameterSet:
    """Raw-price parametrisation ``P(t) = A + B * (t_c - t)**(-alpha)``."""

    alpha: float
    A: float
    B: float
    t_c: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ArgumentError("alpha must be positive")
        if not (math.isfinite(self.B) and self.B != 0):
            raise ArgumentError("B must be finite and non-zero")


def stz_to_native(stz: StzParameterSet, t0: float, dt: float = 1.0) -> ParameterSet:
    span = stz.t_c - t0
    if not span > 0:
        raise ArgumentError("t_c must be later than t0")
    a = stz.alpha
    r0 = dt * a * stz.B / span ** (1.0 + a)
    return ParameterSet(
        t0=t0, dt=dt, r0=r0, p0=stz.A + stz.B / span**a, beta=beta_from_alpha(a), t_c=stz.t_c
    )


def native_to_stz(ps: ParameterSet) -> StzParameterSet:
    if not ps.beta > 0:
        raise NoSingularityError("beta = 0 has no STZ representation")
    a = alpha_from_beta(ps.beta)
    span = ps.t_c - ps.t0
    B = ps.r0 / ps.dt * span ** (1.0 + a) / a
    return StzParameterSet(alpha=a, A=ps.p0 - B / span**a, B=B, t_c=ps.t_c)


def stz_price(stz: StzParameterSet, t):
    x = stz.t_c - np.asarray(t, dtype=float)
    if np.any(x <= 0):
        raise SingularityError("t >= t_c")
    return stz.A + stz.B * x ** (-stz.alpha)


# --- raw kernels (no validation; used by the fitter) ----------------------


def _cagan_logp(tau, p0, r0):
    return p0 + r0 * tau


def _lf_logp(tau, p0, r0, a_p):
    x = a_p * tau
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        growth = np.where(x == 0, tau, np.expm1(x) / np.where(a_p == 0, 1.0, a_p))
    return p0 + r0 * growth


def _lf_rate(tau, r0, a_p):
    with np.errstate(over="ignore"):
        return r0 * np.exp(a_p * tau)


def _log_ratio(t, t0, t_c):
    """ln((t_c - t0) / (t_c - t)) computed without cancellation."""
    return -np.log1p(-(t - t0) / (t_c - t0))


def _nlf_rate(t, t0, r0, beta, t_c):
    with np.errstate(over="ignore"):
        return r0 * np.exp(_log_ratio(t, t0, t_c) / beta)


def _nlf_logp(t, t0, dt, p0, r0, beta, t_c):
    alpha = (1.0 - beta) / beta
    span = (t_c - t0) / dt
    with np.errstate(over="ignore"):
        return p0 + r0 / alpha * span * np.expm1(alpha * _log_ratio(t, t0, t_c))


# --- public curve evaluation ----------------------------------------------


def _shape(t, out):
    return float(out) if np.ndim(t) == 0 else out


def _finite(out, what):
    if not np.all(np.isfinite(out)):
        raise RangeError(f"{what} overflowed")
    return out


def _check_before_tc(ps: ParameterSet, t):
    if not ps.beta > 0:
        raise NoSingularityError("NLF curves need beta > 0")
    if np.any(np.asarray(t, dtype=float) > ps.t_c - SINGULARITY_GUARD * ps.dt):
        raise SingularityError(f"evaluation at or beyond t_c = {ps.t_c}")


def cagan_log_price(ps: ParameterSet, t):
    return _shape(t, _cagan_logp(ps.tau(t), ps.p0, ps.r0))


def cagan_rate(ps: ParameterSet, t):
    return _shape(t, np.full(np.shape(t), float(ps.r0)))


def _check_lf(ps: ParameterSet):
    if ps.a_p is None or not ps.a_p > 0:
        raise ArgumentError("LF curves need a_p > 0")


def lf_log_price(ps: ParameterSet, t):
    _check_lf(ps)
    return _shape(t, _finite(_lf_logp(ps.tau(t), ps.p0, ps.r0, ps.a_p), "LF log-price"))


def lf_rate(ps: ParameterSet, t):
    _check_lf(ps)
    return _shape(t, _finite(_lf_rate(ps.tau(t), ps.r0, ps.a_p), "LF rate"))


def nlf_rate(ps: ParameterSet, t):
    _check_before_tc(ps, t)
    t = np.asarray(t, dtype=float)
    return _shape(t, _finite(_nlf_rate(t, ps.t0, ps.r0, ps.beta, ps.t_c), "NLF rate"))


def nlf_log_price(ps: ParameterSet, t):
    if ps.beta >= 1:
        raise UnsupportedBranchError("log-price solution only implemented for 0 < beta < 1")
    _check_before_tc(ps, t)
    t = np.asarray(t, dtype=float)
    out = _nlf_logp(t, ps.t0, ps.dt, ps.p0, ps.r0, ps.beta, ps.t_c)
    return _shape(t, _finite(out, "NLF log-price"))


def stz_derived_rate(ps: ParameterSet, t):
    """Growth rate implied when the raw price (not its log) follows the
    NLF log-price curve: ``r = nlf_rate / nlf_log_price``."""
    num = np.asarray(nlf_rate(ps, t))
    den = np.asarray(nlf_log_price(ps, t))
    scale = np.maximum(np.abs(num), 1.0)
    if np.any(np.abs(den) <= 1e-300 * scale):
        raise PoleError("raw-price curve crosses zero")
    return _shape(t, num / den)


def lnln_asymptote(ps: ParameterSet, t):
    _check_lf(ps)
    return _shape(t, math.log(ps.r0 / ps.a_p) + ps.a_p * ps.tau(t))


def q_exponential(x, q: float):
    """Tsallis q-exponential ``[1 + (1 - q) x]**(1 / (1 - q))``; ``exp`` at q = 1."""
    return _q_exp(x, 1.0 - q)


def _q_exp(x, k: float):
    # parametrised by k = 1 - q so that callers holding a tiny k (beta) do not
    # lose it to cancellation in 1 - (1 + beta)
    x = np.asarray(x, dtype=float)
    if k == 0:
        return _shape(x, np.exp(x))
    base = k * x
    if k < 0 and np.any(base <= -1):
        raise SingularityError("q-exponential diverges for x >= 1/(q - 1)")
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        out = np.where(base > -1, np.exp(np.log1p(np.maximum(base, -1 + 1e-300)) / k), 0.0)
    return _shape(x, out)


def q_exponential_rate(ps: ParameterSet, t):
    """``r0 * e_q(a_p * r0**beta * tau)`` with ``q = 1 + beta``.

    Identical to :func:`nlf_rate` for ``beta > 0`` and to :func:`lf_rate`
    for ``beta = 0``.
    """
    if ps.beta > 0:
        _check_before_tc(ps, t)
    else:
        _check_lf(ps)
    x = ps.a_p * ps.r0**ps.beta * ps.tau(t)
    return _shape(t, ps.r0 * np.asarray(_q_exp(x, -ps.beta)))


def log_price(family: Family | str, ps: ParameterSet, t):
    family = Family(family)
    if family is Family.CAGAN:
        return cagan_log_price(ps, t)
    if family is Family.LF:
        return lf_log_price(ps, t)
    return nlf_log_price(ps, t)


def rate(family: Family | str, ps: ParameterSet, t):
    family = Family(family)
    if family is Family.CAGAN:
        return cagan_rate(ps, t)
    if family is Family.LF:
        return lf_rate(ps, t)
    if family is Family.STZ:
        return stz_derived_rate(ps, t)
    return nlf_rate(ps, t)
