"""Monte Carlo estimates of MI and MMSE by simulating y = sqrt(snr) x + z."""

import asyncio
import math
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp, softmax

from .constellation import Constellation, SubConstellation

PointSet = Union[Constellation, SubConstellation, Sequence[complex], np.ndarray]

# Upper bound on samples x points per batch.
DEFAULT_BATCH_ELEMENTS = 1 << 22


@dataclass(frozen=True)
class McEstimate:
    """Sample mean with its standard error."""

    mean: float
    std_error: float
    samples: int
    seed: int

    def within(self, reference: float, sigmas: float = 3.0, atol: float = 1e-12) -> bool:
        """True if ``reference`` lies within ``sigmas`` standard errors."""
        return abs(self.mean - reference) <= sigmas * self.std_error + atol


@dataclass(frozen=True)
class _BatchStats:
    count: int
    mean: float
    m2: float

    def merge(self, other: "_BatchStats") -> "_BatchStats":
        count = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / count
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / count
        return _BatchStats(count, mean, m2)


# Per-sample statistic: (points, snr, transmitted index, noise) -> values
Statistic = Callable[[np.ndarray, float, np.ndarray, np.ndarray], np.ndarray]


def _points(a: PointSet) -> np.ndarray:
    if isinstance(a, (Constellation, SubConstellation)):
        return a.points
    return np.asarray(a, dtype=np.complex128).ravel()


def _log_likelihoods(points: np.ndarray, snr: float, sent: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """-|y - sqrt(snr) x'|^2 for every sample and candidate x'."""
    root = math.sqrt(snr)
    y = root * points[sent] + noise
    return -np.abs(y[:, None] - root * points[None, :]) ** 2


def _mmse_statistic(points, snr, sent, noise):
    posterior = softmax(_log_likelihoods(points, snr, sent, noise), axis=1)
    estimate = posterior @ points
    return np.abs(points[sent] - estimate) ** 2


def _mi_cm_statistic(points, snr, sent, noise):
    ll = _log_likelihoods(points, snr, sent, noise)
    return -np.abs(noise) ** 2 - logsumexp(ll, axis=1) + math.log(len(points))


def _mi_bicm_statistic_for(bits: np.ndarray) -> Statistic:
    def statistic(points, snr, sent, noise):
        ll = _log_likelihoods(points, snr, sent, noise)
        lse_all = logsumexp(ll, axis=1)
        total = np.zeros(len(sent))
        for i in range(bits.shape[1]):
            same = bits[sent, None, i] == bits[None, :, i]
            lse_sub = logsumexp(np.where(same, ll, -np.inf), axis=1)
            total += lse_sub - lse_all + math.log(2)
        return total

    return statistic


def _batch_plan(samples: int, size: int, batch_elements: int) -> List[int]:
    per_batch = max(1, batch_elements // size)
    full, rest = divmod(samples, per_batch)
    return [per_batch] * full + ([rest] if rest else [])


def _run_batch(
    statistic: Statistic,
    points: np.ndarray,
    snr: float,
    count: int,
    seed_seq: np.random.SeedSequence,
) -> _BatchStats:
    rng = np.random.Generator(np.random.Philox(seed_seq))
    sent = rng.integers(0, len(points), size=count)
    # CN(0, 1): variance 1/2 per real component
    noise = rng.normal(scale=math.sqrt(0.5), size=(count, 2)) @ np.array([1.0, 1j])
    values = statistic(points, snr, sent, noise)
    if not np.all(np.isfinite(values)):
        raise ArithmeticError("Monte Carlo statistic produced non-finite values")
    mean = float(np.mean(values))
    return _BatchStats(count, mean, float(np.sum((values - mean) ** 2)))


async def _run_batches_async(
    statistic: Statistic,
    points: np.ndarray,
    snr: float,
    plan: List[int],
    seeds: List[np.random.SeedSequence],
    jobs: int,
) -> List[_BatchStats]:
    semaphore = asyncio.Semaphore(jobs)
    loop = asyncio.get_running_loop()

    async def run(count: int, seed_seq: np.random.SeedSequence) -> _BatchStats:
        async with semaphore:
            return await loop.run_in_executor(
                None, _run_batch, statistic, points, snr, count, seed_seq
            )

    return await asyncio.gather(*(run(n, s) for n, s in zip(plan, seeds)))


def _estimate(
    statistic: Statistic,
    a: PointSet,
    snr: float,
    samples: int,
    seed: int,
    jobs: int = 1,
    batch_elements: int = DEFAULT_BATCH_ELEMENTS,
) -> McEstimate:
    points = _points(a)
    if len(points) == 0:
        raise ValueError("input set is empty")
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    snr = float(snr)
    if not snr >= 0 or not math.isfinite(snr):
        raise ValueError(f"snr must be a finite non-negative number, got {snr}")
    if len(points) == 1:
        return McEstimate(0.0, 0.0, samples, seed)

    plan = _batch_plan(samples, len(points), batch_elements)
    seeds = np.random.SeedSequence(seed).spawn(len(plan))
    if jobs <= 1:
        batches = [_run_batch(statistic, points, snr, n, s) for n, s in zip(plan, seeds)]
    else:
        batches = asyncio.run(
            _run_batches_async(statistic, points, snr, plan, seeds, jobs)
        )

    # merged in plan order, independent of completion order
    stats = batches[0]
    for batch in batches[1:]:
        stats = stats.merge(batch)
    if stats.count > 1:
        std = math.sqrt(stats.m2 / (stats.count - 1))
    else:
        std = 0.0
    return McEstimate(stats.mean, std / math.sqrt(stats.count), samples, seed)


def mc_mmse(
    a: PointSet, snr: float, samples: int, seed: int, jobs: int = 1
) -> McEstimate:
    """Monte Carlo MMSE of the conditional-mean estimator."""
    return _estimate(_mmse_statistic, a, snr, samples, seed, jobs)


def mc_mi_cm(
    a: PointSet, snr: float, samples: int, seed: int, jobs: int = 1
) -> McEstimate:
    """Monte Carlo coded-modulation mutual information in nats."""
    return _estimate(_mi_cm_statistic, a, snr, samples, seed, jobs)


def mc_mi_bicm(
    c: Constellation, snr: float, samples: int, seed: int, jobs: int = 1
) -> McEstimate:
    """Monte Carlo BICM mutual information in nats (sum over bit positions)."""
    return _estimate(_mi_bicm_statistic_for(c.bits), c, snr, samples, seed, jobs)


def cross_check(
    estimate: McEstimate, reference: float, sigmas: float = 3.0
) -> Tuple[bool, float]:
    """(passed, deviation in standard errors) for a quadrature reference."""
    deviation = abs(estimate.mean - reference)
    if estimate.std_error > 0:
        return estimate.within(reference, sigmas), deviation / estimate.std_error
    return estimate.within(reference, sigmas), 0.0 if deviation <= 1e-12 else math.inf
