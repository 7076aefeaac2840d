"""Mutual information, MMSE and the BICM mutual-information derivative.

All quantities refer to the channel y = sqrt(snr) x + z with z ~ CN(0, 1) and
x uniform over a finite set of complex points. Information is in nats.

Every expectation over the noise is a tensor Gauss-Hermite sum. Exponents
-|sqrt(snr)(a - a') + z|^2 are kept shifted by |z|^2, which leaves every
likelihood ratio unchanged and keeps the largest exponent bounded by |z|^2;
ratios are then formed with max-subtracted softmax/logsumexp.
"""

import asyncio
import math
from dataclasses import dataclass
from enum import StrEnum
from typing import Callable, Iterator, Optional, Sequence, Union

import numpy as np
from scipy.special import logsumexp, softmax

from .constellation import Constellation, SubConstellation, all_subsets
from .quadrature import QuadratureRule, gauss_hermite

PointSet = Union[Constellation, SubConstellation, Sequence[complex], np.ndarray]

# Upper bound on elements of one (points x points x nodes) exponent block.
CHUNK_ELEMENTS = 1 << 21


class NumericalError(ArithmeticError):
    """Empty input set or non-finite intermediate value."""


class CurveKind(StrEnum):
    MI_CM = "mi_cm"
    MI_BICM = "mi_bicm"
    MMSE = "mmse"
    BICM_DERIVATIVE = "bicm_derivative"


@dataclass(frozen=True, eq=False)
class Curve:
    """A quantity sampled on an increasing linear-snr grid.

    ``alphabet_size`` is |A| of the input set when known; mutual information
    values are then bounded by log|A|.
    """

    snr_grid: np.ndarray
    values: np.ndarray
    kind: CurveKind
    units: str = "nats"
    alphabet_size: Optional[int] = None

    def __post_init__(self):
        grid = np.array(self.snr_grid, dtype=float)
        values = np.array(self.values, dtype=float)
        if grid.shape != values.shape or grid.ndim != 1:
            raise ValueError("snr grid and values must be equal-length 1-D arrays")
        if np.any(grid < 0) or np.any(np.diff(grid) <= 0):
            raise ValueError("snr grid must be non-negative and strictly increasing")
        if self.units not in ("nats", "bits"):
            raise ValueError(f"unknown units {self.units!r}")
        if self.kind in (CurveKind.MI_CM, CurveKind.MI_BICM):
            if np.any(values < -1e-12):
                raise ValueError("mutual information values must be non-negative")
            if self.alphabet_size is not None:
                bound = math.log(self.alphabet_size)
                if self.units == "bits":
                    bound /= math.log(2)
                if np.any(values > bound + 1e-9):
                    raise ValueError(
                        f"mutual information exceeds log|A| = {bound:.6g} {self.units}"
                    )
        grid.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "snr_grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "kind", CurveKind(self.kind))

    @property
    def snr_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10 * np.log10(self.snr_grid)

    def to_units(self, units: str) -> "Curve":
        """Rescale values to ``nats`` or ``bits``."""
        if units == self.units:
            return self
        if {units, self.units} != {"nats", "bits"}:
            raise ValueError(f"unknown units {units!r}")
        factor = 1 / math.log(2) if units == "bits" else math.log(2)
        return Curve(self.snr_grid, self.values * factor, self.kind, units, self.alphabet_size)

    def __len__(self) -> int:
        return len(self.values)


def _points(a: PointSet) -> np.ndarray:
    if isinstance(a, (Constellation, SubConstellation)):
        points = a.points
    else:
        points = np.asarray(a, dtype=np.complex128).ravel()
    if len(points) == 0:
        raise NumericalError("input set is empty")
    return points


def _check_snr(snr: float) -> float:
    snr = float(snr)
    if not snr >= 0 or not math.isfinite(snr):
        raise ValueError(f"snr must be a finite non-negative number, got {snr}")
    return snr


def _shifted_exponents(
    points: np.ndarray, snr: float, rule: QuadratureRule
) -> Iterator[tuple[slice, np.ndarray]]:
    """Yield (chunk, E) with E[a, a', t] = -|d + z_t|^2 + |z_t|^2, d = sqrt(snr)(a - a')."""
    z = rule.complex_nodes
    size = len(points)
    step = max(1, CHUNK_ELEMENTS // (size * len(z)))
    root = math.sqrt(snr)
    for start in range(0, size, step):
        chunk = slice(start, min(start + step, size))
        d = root * (points[chunk, None] - points[None, :])
        exponents = -(np.abs(d) ** 2)[..., None] - 2 * (
            d.real[..., None] * z.real + d.imag[..., None] * z.imag
        )
        yield chunk, exponents


def _finite(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise NumericalError(f"{what} evaluated to a non-finite value")
    return value


def mmse_cm(a: PointSet, snr: float, rule: Optional[QuadratureRule] = None) -> float:
    """MMSE of estimating X uniform over ``a`` from sqrt(snr) X + Z."""
    points = _points(a)
    snr = _check_snr(snr)
    if len(points) == 1:
        return 0.0
    rule = rule or gauss_hermite()
    total = 0.0
    for chunk, exponents in _shifted_exponents(points, snr, rule):
        posterior = softmax(exponents, axis=1)
        estimate = np.einsum("k,ckt->ct", points, posterior)
        error = np.abs(points[chunk, None] - estimate) ** 2
        total += float(np.sum(error @ rule.complex_weights))
    return _finite(total / len(points), "mmse")


def gaussian_mmse(snr: float) -> float:
    """MMSE for a CN(0, 1) input."""
    snr = _check_snr(snr)
    return 1.0 / (1.0 + snr)


def gaussian_mi(snr: float) -> float:
    """Mutual information in nats for a CN(0, 1) input."""
    snr = _check_snr(snr)
    return math.log1p(snr)


def mi_cm(a: PointSet, snr: float, rule: Optional[QuadratureRule] = None) -> float:
    """Coded-modulation mutual information for X uniform over ``a``."""
    points = _points(a)
    snr = _check_snr(snr)
    if len(points) == 1:
        return 0.0
    rule = rule or gauss_hermite()
    total = 0.0
    for _, exponents in _shifted_exponents(points, snr, rule):
        total += float(np.sum(logsumexp(exponents, axis=1) @ rule.complex_weights))
    return _finite(math.log(len(points)) - total / len(points), "mutual information")


def mi_bicm_direct(
    c: Constellation, snr: float, rule: Optional[QuadratureRule] = None
) -> float:
    """BICM mutual information as the sum of m binary-input channel MIs."""
    snr = _check_snr(snr)
    rule = rule or gauss_hermite()
    points = c.points
    bits = c.bits
    weights = rule.complex_weights
    total = 0.0
    for chunk, exponents in _shifted_exponents(points, snr, rule):
        lse_all = logsumexp(exponents, axis=1)
        for i in range(c.m):
            same = bits[chunk, None, i] == bits[None, :, i]
            lse_sub = logsumexp(np.where(same[..., None], exponents, -np.inf), axis=1)
            total += float(np.sum((lse_sub - lse_all + math.log(2)) @ weights))
    return _finite(total / len(points), "BICM mutual information")


def mi_bicm_decomposed(
    c: Constellation, snr: float, rule: Optional[QuadratureRule] = None
) -> float:
    """BICM mutual information as sum_i 1/2 sum_b (I_X - I_{X_b^i})."""
    rule = rule or gauss_hermite()
    full = mi_cm(c, snr, rule)
    subsets = sum(mi_cm(s, snr, rule) for s in all_subsets(c))
    return c.m * full - 0.5 * subsets


def low_snr_slope(c: Constellation) -> float:
    """Limit of the BICM MI derivative as snr -> 0.

    sum_i 1/2 sum_b |E[X_b^i] - E[X]|^2; for zero-mean constellations the
    centring term vanishes.
    """
    centre = c.mean
    return float(sum(0.5 * abs(s.mean - centre) ** 2 for s in all_subsets(c)))


def minimum_ebno_db(c: Constellation) -> float:
    """Wideband minimum Eb/N0 in dB, ln 2 / low_snr_slope."""
    slope = low_snr_slope(c)
    if slope <= 0.0:
        return math.inf
    return 10 * math.log10(math.log(2) / slope)


def mmse_zero_snr_limit(a: PointSet) -> float:
    """E|A|^2 - |E A|^2, the MMSE as snr -> 0."""
    points = _points(a)
    return float(np.mean(np.abs(points) ** 2) - abs(np.mean(points)) ** 2)


def bicm_mi_derivative(
    c: Constellation, snr: float, rule: Optional[QuadratureRule] = None
) -> float:
    """d I_bicm / d snr = m mmse_X - 1/2 sum_{i,b} mmse_{X_b^i}."""
    snr = _check_snr(snr)
    if snr == 0.0:
        return low_snr_slope(c)
    rule = rule or gauss_hermite()
    full = mmse_cm(c, snr, rule)
    subsets = sum(mmse_cm(s, snr, rule) for s in all_subsets(c))
    return c.m * full - 0.5 * subsets


_KIND_FUNCTIONS: dict[CurveKind, Callable[[Constellation, float, QuadratureRule], float]] = {
    CurveKind.MI_CM: mi_cm,
    CurveKind.MI_BICM: mi_bicm_decomposed,
    CurveKind.MMSE: mmse_cm,
    CurveKind.BICM_DERIVATIVE: bicm_mi_derivative,
}


def sweep(
    c: Constellation,
    grid: Sequence[float],
    kind: Union[CurveKind, str],
    rule: Optional[QuadratureRule] = None,
    jobs: int = 1,
    on_point: Optional[Callable[[int, float], None]] = None,
) -> Curve:
    """Evaluate one quantity at every grid point.

    Points are independent; with ``jobs > 1`` they are evaluated concurrently
    and written back by index, so the result does not depend on completion
    order. ``on_point(index, value)`` is called as each point finishes.
    """
    kind = CurveKind(kind)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("snr grid must be a non-empty strictly increasing sequence")
    rule = rule or gauss_hermite()
    fn = _KIND_FUNCTIONS[kind]

    if jobs <= 1:
        values = []
        for k, snr in enumerate(grid):
            values.append(fn(c, float(snr), rule))
            if on_point:
                on_point(k, values[-1])
    else:
        values = asyncio.run(_sweep_async(fn, c, grid, rule, jobs, on_point))
    return Curve(grid, np.array(values), kind, alphabet_size=len(c))


async def _sweep_async(
    fn: Callable[[Constellation, float, QuadratureRule], float],
    c: Constellation,
    grid: np.ndarray,
    rule: QuadratureRule,
    jobs: int,
    on_point: Optional[Callable[[int, float], None]],
) -> list[float]:
    """Concurrent sweep; each grid point runs in the default executor."""
    semaphore = asyncio.Semaphore(jobs)
    loop = asyncio.get_running_loop()
    values = [0.0] * len(grid)

    async def evaluate(k: int, snr: float) -> None:
        async with semaphore:
            values[k] = await loop.run_in_executor(None, fn, c, snr, rule)
            if on_point:
                on_point(k, values[k])

    await asyncio.gather(*(evaluate(k, float(snr)) for k, snr in enumerate(grid)))
    return values
