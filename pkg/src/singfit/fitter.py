"""Least-squares fitting of the Cagan / LF / NLF / STZ models to CPI data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import models as mk
from .errors import ArgumentError, NoConvergenceError, SingfitError
from .lm import Infeasible, LMResult, jacobian, levenberg_marquardt
from .models import Family, ModelSpec, Objective, ParameterSet, StzParameterSet
from .series import Kind, ObservationSeries, window as window_series

STANDARD_TOL = 1e-3  # 10^-1 %
EXTENDED_TOL = 1e-5  # 10^-3 %

FAMILY_PARAMS = {
    Family.CAGAN: ("p0", "r0"),
    Family.LF: ("p0", "r0", "a_p"),
    Family.NLF: ("p0", "r0", "beta", "t_c"),
    Family.STZ: ("p0", "r0", "beta", "t_c"),
}

NLF_BETA_GRID = (0.05, 0.1, 0.2, 0.4, 0.7)
NLF_TC_OFFSETS = (1.0, 3.0, 10.0, 30.0, 100.0)
LF_AP_GRID = (0.05, 0.1, 0.2, 0.4)


@dataclass
class FitConfig:
    model: ModelSpec
    window: tuple[int, int] | None = None
    frozen: dict[str, float] = field(default_factory=dict)
    initial: ParameterSet | Sequence[ParameterSet] | None = None
    stop_rel_chi2: float = STANDARD_TOL
    extended_stop: float | None = None
    max_iter: int = 500

    def __post_init__(self):
        if not isinstance(self.model, ModelSpec):
            self.model = ModelSpec(*self.model)
        for tol in (self.stop_rel_chi2, self.extended_stop):
            if tol is not None and not 0 < tol < 1:
                raise ArgumentError(f"stopping threshold must lie in (0, 1), got {tol}")
        if self.max_iter < 0:
            raise ArgumentError("max_iter must be non-negative")
        unknown = set(self.frozen) - set(FAMILY_PARAMS[self.model.family])
        if unknown:
            raise ArgumentError(f"cannot freeze {sorted(unknown)} for {self.model.family.value}")


@dataclass
class FitResult:
    model: ModelSpec
    params: ParameterSet
    free: list[str]
    sigma: dict[str, float]
    covariance: np.ndarray
    chi: float
    chi2_trace: list[float]
    converged: bool
    n_points: int
    n_iter: int
    window: tuple[int, int]
    frozen: dict[str, float] = field(default_factory=dict)
    stz: StzParameterSet | None = None
    iterates: list[dict[str, float]] = field(default_factory=list)

    @property
    def chi2(self) -> float:
        return self.chi**2 * self.n_points

    def to_dict(self) -> dict:
        d = {
            "model": {"family": self.model.family.value, "objective": self.model.objective.value},
            "window": list(self.window),
            "params": self.params.to_dict(),
            "free": list(self.free),
            "frozen": dict(self.frozen),
            "sigma": dict(self.sigma),
            "covariance": [[float(v) for v in row] for row in self.covariance],
            "chi": self.chi,
            "chi_definition": "r.m.s. residue, unweighted: sqrt(sum(residual^2) / N)",
            "chi2_trace": list(self.chi2_trace),
            "converged": self.converged,
            "n_points": self.n_points,
            "n_iter": self.n_iter,
        }
        if self.stz is not None:
            d["stz"] = {"alpha": self.stz.alpha, "A": self.stz.A, "B": self.stz.B, "t_c": self.stz.t_c}
        return d


# --- problem setup ---------------------------------------------------------


@dataclass
class _Problem:
    family: Family
    objective: Objective
    t0: float
    dt: float
    last_year: float
    years: np.ndarray
    target: np.ndarray
    gri_mid: np.ndarray
    gri: np.ndarray
    free: list[str]
    frozen: dict[str, float]

    @property
    def n_resid(self) -> int:
        return self.target.size + self.gri.size


def _prepare(data: ObservationSeries, cfg: FitConfig) -> _Problem:
    if cfg.window is not None:
        data = window_series(data, *cfg.window)
    obj = cfg.model.objective
    fam = cfg.model.family
    if obj is Objective.RAW_CPI:
        if data.kind is not Kind.PRICE_INDEX:
            raise ArgumentError("raw-CPI objective needs a price-index series")
        target = data.values.astype(float)
    elif data.kind is Kind.PRICE_INDEX:
        target = np.log(data.values)
    elif data.kind is Kind.LOG_PRICE:
        target = data.values.astype(float)
    else:
        raise ArgumentError(f"cannot fit {obj.value} objective to a {data.kind.value} series")
    years = data.years.astype(float)
    gri_mid = np.empty(0)
    gri = np.empty(0)
    if obj is Objective.JOINT:
        gri = np.diff(target)
        # GRIs are labelled by their end year; the model rate is taken at the
        # interval midpoint where the finite difference is centred.
        gri_mid = years[1:] - data.dt / 2.0
    free = [p for p in FAMILY_PARAMS[fam] if p not in cfg.frozen]
    prob = _Problem(
        fam, obj, float(data.start_year), float(data.dt), float(data.end_year),
        years, target, gri_mid, gri, free, dict(cfg.frozen),
    )
    if prob.n_resid < len(free) + 1:
        raise ArgumentError(
            f"{prob.n_resid} residuals cannot constrain {len(free)} free parameters"
        )
    return prob


# internal coordinates: beta and (t_c - last_year) are optimised in log space
def _to_internal(prob: _Problem, name: str, value: float) -> float:
    if name == "beta":
        return math.log(value)
    if name == "t_c":
        return math.log(value - prob.last_year)
    return value


def _from_internal(prob: _Problem, name: str, value: float) -> float:
    if name == "beta":
        return math.exp(value)
    if name == "t_c":
        return prob.last_year + math.exp(value)
    return value


def _natural(prob: _Problem, x) -> dict[str, float]:
    vals = dict(prob.frozen)
    for name, v in zip(prob.free, x):
        vals[name] = _from_internal(prob, name, float(v))
    return vals


def _residuals(prob: _Problem, v: dict[str, float]) -> np.ndarray:
    fam = prob.family
    joint = prob.objective is Objective.JOINT
    rate = None
    tau = (prob.years - prob.t0) / prob.dt
    if fam is Family.CAGAN:
        model = mk._cagan_logp(tau, v["p0"], v["r0"])
        rate = np.full(prob.gri.size, v["r0"])
    elif fam is Family.LF:
        if not (v["a_p"] > 0 and v["r0"] > 0):
            raise Infeasible
        model = mk._lf_logp(tau, v["p0"], v["r0"], v["a_p"])
        if joint:
            rate = mk._lf_rate((prob.gri_mid - prob.t0) / prob.dt, v["r0"], v["a_p"])
    else:
        beta, tc = v["beta"], v["t_c"]
        if not (0 < beta < 1 and v["r0"] > 0 and tc > prob.t0):
            raise Infeasible
        if tc <= prob.last_year + mk.SINGULARITY_GUARD * prob.dt:
            raise Infeasible
        model = mk._nlf_logp(prob.years, prob.t0, prob.dt, v["p0"], v["r0"], beta, tc)
        if joint:
            rate = mk._nlf_rate(prob.gri_mid, prob.t0, v["r0"], beta, tc)
    res = model - prob.target
    if joint:
        res = np.concatenate((res, rate - prob.gri))
    return res


def _param_set(prob: _Problem, v: dict[str, float]) -> ParameterSet:
    fam = prob.family
    if fam is Family.CAGAN:
        return ParameterSet(t0=prob.t0, dt=prob.dt, p0=v["p0"], r0=v["r0"])
    if fam is Family.LF:
        return ParameterSet(t0=prob.t0, dt=prob.dt, p0=v["p0"], r0=v["r0"], a_p=v["a_p"])
    return ParameterSet(
        t0=prob.t0, dt=prob.dt, p0=v["p0"], r0=v["r0"], beta=v["beta"], t_c=v["t_c"]
    )


def _starts(prob: _Problem, cfg: FitConfig) -> list[dict[str, float]]:
    if cfg.initial is not None:
        inits = [cfg.initial] if isinstance(cfg.initial, ParameterSet) else list(cfg.initial)
        out = []
        for ps in inits:
            d = {"p0": ps.p0, "r0": ps.r0, "a_p": ps.a_p, "beta": ps.beta, "t_c": ps.t_c}
            d.update(prob.frozen)
            out.append(d)
        return out
    if prob.objective is Objective.RAW_CPI:
        logs = np.log(np.maximum(prob.target, 1e-300))
        p0 = float(prob.target[0])
    else:
        logs = prob.target
        p0 = float(logs[0])
    r0 = float(logs[1] - logs[0]) if logs.size > 1 else 0.0
    base = {"p0": p0, "r0": r0}
    fam = prob.family
    if fam is not Family.CAGAN and not r0 > 0:
        base["r0"] = 0.01
    if fam is Family.CAGAN:
        grid = [dict(base)]
    elif fam is Family.LF:
        grid = [dict(base, a_p=a) for a in LF_AP_GRID]
    else:
        grid = [
            dict(base, beta=b, t_c=prob.last_year + off)
            for b in NLF_BETA_GRID
            for off in NLF_TC_OFFSETS
        ]
    for d in grid:
        d.update(prob.frozen)
    return grid


def _run(prob: _Problem, start: dict[str, float], tol: float, max_iter: int):
    x0 = np.array([_to_internal(prob, n, start[n]) for n in prob.free])

    def fun(x):
        try:
            return _residuals(prob, _natural(prob, x))
        except (OverflowError, SingfitError):
            raise Infeasible from None

    return levenberg_marquardt(fun, x0, rel_tol=tol, max_iter=max_iter)


def _covariance(prob: _Problem, v: dict[str, float], chi2: float) -> np.ndarray:
    """(J^T J)^-1 scaled by chi^2 / (N - k), J taken w.r.t. natural parameters."""
    k = len(prob.free)
    if k == 0:
        return np.zeros((0, 0))
    theta = np.array([v[n] for n in prob.free])

    def fun(th):
        vv = dict(v)
        vv.update(zip(prob.free, map(float, th)))
        try:
            return _residuals(prob, vv)
        except (OverflowError, SingfitError):
            raise Infeasible from None

    r = fun(theta)
    J = jacobian(fun, theta, r, rel_step=1e-6)
    dof = prob.n_resid - k
    scale = chi2 / dof if dof > 0 else math.nan
    A = J.T @ J
    try:
        cov = np.linalg.inv(A)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(A)
    cov = 0.5 * (cov + cov.T) * scale
    return cov


def _result(prob: _Problem, cfg: FitConfig, run: LMResult) -> FitResult:
    v = _natural(prob, run.x)
    ps = _param_set(prob, v)
    cov = _covariance(prob, v, run.chi2)
    sigma = {n: float(math.sqrt(max(cov[i, i], 0.0))) for i, n in enumerate(prob.free)}
    stz = None
    if prob.family is Family.STZ:
        stz = mk.native_to_stz(ps)
    iterates = [_natural(prob, x) for x in run.x_trace]
    return FitResult(
        model=cfg.model,
        params=ps,
        free=list(prob.free),
        sigma=sigma,
        covariance=cov,
        chi=math.sqrt(run.chi2 / prob.n_resid),
        chi2_trace=list(run.chi2_trace),
        converged=run.converged,
        n_points=prob.n_resid,
        n_iter=run.n_iter,
        window=(int(prob.t0), int(prob.last_year)),
        frozen=dict(prob.frozen),
        stz=stz,
        iterates=iterates,
    )


def _start_key(start: dict[str, float]) -> tuple:
    return tuple(sorted((k, float(v)) for k, v in start.items() if v is not None))


def _best_run(prob: _Problem, cfg: FitConfig, tol: float):
    best = None
    for start in _starts(prob, cfg):
        run = _run(prob, start, tol, cfg.max_iter)
        if not math.isfinite(run.chi2):
            continue
        # order-independent choice: lowest chi^2, converged preferred, then start
        key = (not run.converged, run.chi2, _start_key(start))
        if best is None or key < best[0]:
            best = (key, start, run)
    return best


def fit(data: ObservationSeries, cfg: FitConfig) -> FitResult:
    """Multi-start Levenberg-Marquardt fit of ``data`` under ``cfg``.

    Raises :class:`NoConvergenceError` when no start converges; its ``best``
    attribute carries the lowest-chi^2 attempt (or ``None`` if every start
    was infeasible).
    """
    prob = _prepare(data, cfg)
    best = _best_run(prob, cfg, cfg.stop_rel_chi2)
    if best is None:
        raise NoConvergenceError("every start was infeasible (singularity inside window?)")
    _, _, run = best
    result = _result(prob, cfg, run)
    if not run.converged:
        raise NoConvergenceError(
            f"no start converged within {cfg.max_iter} iterations", best=result
        )
    return result


@dataclass(frozen=True)
class ProfileIterate:
    iteration: int
    beta: float
    t_c: float
    beta_times_span: float
    a_p: float
    chi2: float
    extended: bool  # past the point where the standard tolerance stops


def profile_beta_tc(data: ObservationSeries, cfg: FitConfig) -> list[ProfileIterate]:
    """Follow the (beta, t_c) path of an NLF fit past the standard stop.

    The best multi-start branch under the standard tolerance is rerun with
    the extended tolerance, and every accepted iterate is reported.
    """
    if cfg.model.family is not Family.NLF:
        raise ArgumentError("profile_beta_tc needs the NLF family")
    prob = _prepare(data, cfg)
    if "beta" in prob.frozen or "t_c" in prob.frozen:
        raise ArgumentError("beta and t_c must be free to profile them")
    best = _best_run(prob, cfg, cfg.stop_rel_chi2)
    if best is None:
        raise NoConvergenceError("every start was infeasible")
    _, start, standard = best
    ext_tol = cfg.extended_stop if cfg.extended_stop is not None else EXTENDED_TOL
    run = _run(prob, start, ext_tol, cfg.max_iter)
    if not math.isfinite(run.chi2):
        raise NoConvergenceError("extended run infeasible")
    n_standard = standard.n_iter
    out = []
    for i, (x, s) in enumerate(zip(run.x_trace, run.chi2_trace)):
        v = _natural(prob, x)
        beta, tc = v["beta"], v["t_c"]
        a_p = mk.feedback_strength(prob.t0, prob.dt, v["r0"], beta, tc)
        out.append(
            ProfileIterate(i, beta, tc, beta * (tc - prob.t0), a_p, s, i > n_standard)
        )
    return out


@dataclass
class CompareEntry:
    config: FitConfig
    result: FitResult | None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.result is None


def compare_models(data: ObservationSeries, cfgs: Sequence[FitConfig]) -> list[CompareEntry]:
    """Fit every config; successful entries sorted by chi, fewer free
    parameters first on ties, failed entries last in input order."""
    if not cfgs:
        raise ArgumentError("compare_models needs at least one config")
    ok, bad = [], []
    for cfg in cfgs:
        try:
            ok.append(CompareEntry(cfg, fit(data, cfg)))
        except SingfitError as exc:
            bad.append(CompareEntry(cfg, None, f"{type(exc).__name__}: {exc}"))
    ok.sort(key=lambda e: (e.result.chi, len(e.result.free)))
    return ok + bad
