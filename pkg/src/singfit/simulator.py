"""Synthetic data: discrete rate recursions and sampled closed-form curves.

The recursions act on a stride-2 lattice,
``r[k+1] = r[k-1] + 2 * a_p * r[k-1]**(1 + beta)``, so even and odd indices
form two independent sublattices seeded by the two ``r_init`` values.
Cagan copies each seed forward, LF is the ``beta = 0`` case.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import models as mk
from .errors import ArgumentError, DomainError
from .models import Family, ParameterSet
from .series import Kind, ObservationSeries, SeriesMeta, gri_to_cpi


@dataclass(frozen=True)
class RecursionSpec:
    family: Family
    r_init: tuple[float, float]
    a_p: float = 0.0
    beta: float = 0.0
    steps: int = 0
    noise_sigma: float = 0.0
    seed: int = 0
    start_year: int = 0
    # internal sub-steps per period (a_p is divided by this); 1 = printed recursion
    substeps: int = 1

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.family is Family.STZ:
            raise ArgumentError("no recursion exists for the STZ parametrisation")
        r = tuple(float(v) for v in np.broadcast_to(self.r_init, (2,)))
        object.__setattr__(self, "r_init", r)
        if self.steps < 0:
            raise ArgumentError("steps must be non-negative")
        if not all(v > 0 for v in r):
            raise ArgumentError("seed rates must be positive")
        if self.noise_sigma < 0:
            raise ArgumentError("noise_sigma must be non-negative")
        if self.substeps < 1:
            raise ArgumentError("substeps must be >= 1")
        if self.family is Family.NLF and not self.beta > 0:
            raise ArgumentError("NLF recursion needs beta > 0")


@dataclass(frozen=True)
class SimulatedRates:
    series: ObservationSeries
    blowup_step: int | None  # first lattice index that overflowed, if any


def iterate_rates(spec: RecursionSpec) -> SimulatedRates:
    """Run the recursion for ``spec.steps`` updates after the two seeds.

    With ``substeps = m`` the lattice is refined m-fold (``a_p / m`` per
    sub-step) and every m-th value is reported. Values that overflow end the
    series; ``blowup_step`` is then the first non-finite index on the
    reported lattice.
    """
    m = spec.substeps
    a = spec.a_p / m
    beta = 0.0 if spec.family is Family.LF else spec.beta
    rng = np.random.default_rng(spec.seed)
    last_index = (1 + spec.steps) * m
    r = np.empty(last_index + 1)
    r[0], r[1] = spec.r_init
    blowup = None
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(2, last_index + 1):
            prev = r[k - 2]
            if spec.family is Family.CAGAN:
                nxt = prev
            elif beta and prev <= 0:
                raise DomainError(f"rate became non-positive before index {k}")
            else:
                nxt = prev + 2.0 * a * prev ** (1.0 + beta)
            if spec.noise_sigma:
                nxt += rng.normal(0.0, spec.noise_sigma)
            if not np.isfinite(nxt):
                blowup = k
                break
            r[k] = nxt
    if blowup is not None:
        r = r[:blowup]
    values = r[::m]
    if blowup is not None:
        blowup = -(-blowup // m)
    series = ObservationSeries(spec.start_year, values, Kind.GRI)
    return SimulatedRates(series, blowup)


def integrate_prices(rates: ObservationSeries, p_base: float = 1.0) -> ObservationSeries:
    return gri_to_cpi(rates, p_base)


def _years(years) -> np.ndarray:
    if isinstance(years, tuple) and len(years) == 2:
        years = range(int(years[0]), int(years[1]) + 1)
    ys = np.asarray(list(years), dtype=int)
    if ys.size == 0:
        raise ArgumentError("no years requested")
    if np.any(np.diff(ys) != 1):
        raise ArgumentError("years must be consecutive")
    return ys


def synthesize(
    ps: ParameterSet,
    family: Family | str,
    years: Sequence[int] | tuple[int, int],
    noise_sigma: float = 0.0,
    seed: int = 0,
    meta: SeriesMeta | None = None,
) -> ObservationSeries:
    """Annual price index from the closed-form log-price curve.

    i.i.d. Gaussian noise of scale ``noise_sigma`` is added to the log-price
    before exponentiating. ``years`` is a sequence or an inclusive
    ``(first, last)`` pair.
    """
    if noise_sigma < 0:
        raise ArgumentError("noise_sigma must be non-negative")
    family = Family(family)
    ys = _years(years)
    if family is Family.STZ:
        raise ArgumentError("synthesize the NLF family; STZ is a fitting variant")
    logp = np.asarray(mk.log_price(family, ps, ys.astype(float)), dtype=float)
    if noise_sigma:
        logp = logp + np.random.default_rng(seed).normal(0.0, noise_sigma, logp.size)
    with np.errstate(over="ignore"):
        prices = np.exp(logp)
    return ObservationSeries(int(ys[0]), prices, Kind.PRICE_INDEX, 1, meta or SeriesMeta())
