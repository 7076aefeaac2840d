"""Power allocation over parallel Gaussian channels.

Each channel k sees effective snr g_k p_k. The total mutual information is
maximised subject to sum p_k = P, p_k >= 0, using the MI derivative (MMSE for
coded modulation, the BICM derivative for BICM) as the marginal utility.
"""

import math
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, TextIO, Tuple

import numpy as np
from rich.console import Console
from scipy.optimize import brentq

from . import infotheory
from .constellation import Constellation, ConstellationError, resolve_constellation
from .quadrature import QuadratureRule, gauss_hermite

console = Console(stderr=True)

DEFAULT_TOL = 1e-6
COARSE_POINTS = 65
FALLBACK_POINTS = 257
PERTURBATION_STEP = 0.01
PERTURBATION_GAIN_LIMIT = 1e-9


class AllocationError(RuntimeError):
    """The allocation problem could not be solved."""


class ProblemParseError(ValueError):
    """Malformed problem file."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class Mode(StrEnum):
    CM = "cm"
    BICM = "bicm"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True, eq=False)
class Channel:
    """One parallel channel: power gain, input constellation and decoder mode."""

    gain: float
    constellation: Optional[Constellation]
    mode: Mode

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if not self.gain > 0 or not math.isfinite(self.gain):
            raise ValueError(f"channel gain must be positive, got {self.gain}")
        if self.mode is not Mode.GAUSSIAN and self.constellation is None:
            raise ValueError(f"mode {self.mode} needs a constellation")


@dataclass(frozen=True, eq=False)
class ParallelChannelSet:
    """K parallel channels sharing a total power budget."""

    channels: Tuple[Channel, ...]
    budget: float

    def __post_init__(self):
        channels = tuple(self.channels)
        if not channels:
            raise ValueError("at least one channel is required")
        if not self.budget > 0 or not math.isfinite(self.budget):
            raise ValueError(f"power budget must be positive, got {self.budget}")
        object.__setattr__(self, "channels", channels)

    @classmethod
    def uniform(
        cls,
        gains: Sequence[float],
        constellation: Optional[Constellation],
        mode: str,
        budget: float,
    ) -> "ParallelChannelSet":
        """Channels that differ only in gain."""
        return cls(tuple(Channel(g, constellation, Mode(mode)) for g in gains), budget)

    @property
    def gains(self) -> np.ndarray:
        return np.array([ch.gain for ch in self.channels])

    def __len__(self) -> int:
        return len(self.channels)


@dataclass(frozen=True)
class Allocation:
    """Optimal powers, the dual variable and optimality diagnostics."""

    powers: np.ndarray
    multiplier: float
    objective: float
    kkt_residual: float
    perturbation_gain: float = field(default=-math.inf)

    @property
    def active(self) -> np.ndarray:
        return self.powers > 0


def marginal_utility(
    channel: Channel, p: float, rule: Optional[QuadratureRule] = None
) -> float:
    """d MI_k / d p_k = g_k D(g_k p_k)."""
    if p < 0:
        raise ValueError(f"power must be non-negative, got {p}")
    snr = channel.gain * p
    if channel.mode is Mode.GAUSSIAN:
        derivative = infotheory.gaussian_mmse(snr)
    elif channel.mode is Mode.CM:
        derivative = infotheory.mmse_cm(channel.constellation, snr, rule)
    else:
        derivative = infotheory.bicm_mi_derivative(channel.constellation, snr, rule)
    return channel.gain * derivative


def channel_mi(
    channel: Channel, p: float, rule: Optional[QuadratureRule] = None
) -> float:
    """Mutual information of one channel at power p, in nats."""
    snr = channel.gain * max(p, 0.0)
    if channel.mode is Mode.GAUSSIAN:
        return infotheory.gaussian_mi(snr)
    if channel.mode is Mode.CM:
        return infotheory.mi_cm(channel.constellation, snr, rule)
    return infotheory.mi_bicm_decomposed(channel.constellation, snr, rule)


def total_mi(
    problem: ParallelChannelSet,
    powers: Sequence[float],
    rule: Optional[QuadratureRule] = None,
) -> float:
    """Sum of per-channel mutual informations."""
    return float(sum(channel_mi(ch, p, rule) for ch, p in zip(problem.channels, powers)))


class _ChannelInverter:
    """Solves marginal_utility(p) = lambda for one channel on [0, budget]."""

    def __init__(self, channel: Channel, budget: float, rule: QuadratureRule):
        self.channel = channel
        self.budget = budget
        self.rule = rule
        self._cache: Dict[float, float] = {}

        coarse = np.linspace(0.0, budget, COARSE_POINTS)
        values = np.array([self.utility(p) for p in coarse])
        # allow round-off-sized increases before calling it non-monotone
        slack = 1e-10 * max(1.0, float(np.max(np.abs(values))))
        self.monotone = bool(np.all(np.diff(values) <= slack))
        if self.monotone:
            self.grid, self.values = coarse, values
        else:
            self.grid = np.linspace(0.0, budget, FALLBACK_POINTS)
            self.values = np.array([self.utility(p) for p in self.grid])
        self.at_zero = float(self.values[0])
        self.at_budget = float(self.values[-1])
        self.peak = float(np.max(self.values))

    def utility(self, p: float) -> float:
        p = float(p)
        if p not in self._cache:
            self._cache[p] = marginal_utility(self.channel, p, self.rule)
        return self._cache[p]

    def power(self, level: float) -> float:
        """Largest power at which the marginal utility still reaches ``level``."""
        above = np.nonzero(self.values >= level)[0]
        if len(above) == 0:
            return 0.0
        j = int(above[-1])
        if j == len(self.grid) - 1:
            return self.budget
        # values[j] >= level > values[j + 1]
        lo, hi = float(self.grid[j]), float(self.grid[j + 1])
        return brentq(lambda p: self.utility(p) - level, lo, hi, xtol=1e-14, rtol=1e-15)


class PowerAllocator:
    """Maximises total (CM, BICM or Gaussian-input) MI under a sum-power budget."""

    def __init__(
        self,
        rule: Optional[QuadratureRule] = None,
        verbose: bool = False,
    ):
        self.rule = rule or gauss_hermite()
        self.verbose = verbose

    def allocate(self, problem: ParallelChannelSet, tol: float = DEFAULT_TOL) -> Allocation:
        """Solve the KKT conditions for the optimal allocation."""
        if not tol > 0:
            raise ValueError(f"tolerance must be positive, got {tol}")
        budget = problem.budget
        shared: Dict[tuple, _ChannelInverter] = {}
        inverters = []
        for ch in problem.channels:
            key = (ch.gain, id(ch.constellation), ch.mode)
            if key not in shared:
                shared[key] = _ChannelInverter(ch, budget, self.rule)
            inverters.append(shared[key])

        for k, inv in enumerate(inverters):
            if not inv.monotone:
                console.print(
                    f"[yellow]Channel {k}: marginal utility is not monotone, "
                    f"using envelope bracketing[/yellow]"
                )
            elif self.verbose:
                console.print(
                    f"[cyan]Channel {k}: utility {inv.at_zero:.6g} at p=0, "
                    f"{inv.at_budget:.6g} at p={budget:g}[/cyan]"
                )

        def excess(level: float) -> float:
            return sum(inv.power(level) for inv in inverters) - budget

        low = min(inv.at_budget for inv in inverters)
        high = max(inv.peak for inv in inverters)
        high = high * (1 + 1e-9) + 1e-300
        f_low, f_high = excess(low), excess(high)
        if f_low < 0 or f_high > 0:
            raise AllocationError(
                f"cannot bracket the multiplier: marginal utilities span "
                f"[{low:.6g}, {high:.6g}], budget excess {f_low:.3g} .. {f_high:.3g}"
            )
        if f_low == 0:
            level = low
        else:
            level = brentq(excess, low, high, xtol=1e-15, rtol=4 * np.finfo(float).eps)

        powers = np.array([inv.power(level) for inv in inverters])
        powers = self._balance(powers, budget)

        active = powers > 0
        utilities = np.array(
            [inv.utility(p) for inv, p in zip(inverters, powers)]
        )
        multiplier = float(np.mean(utilities[active])) if active.any() else level
        residual = float(np.max(np.abs(utilities[active] - multiplier))) if active.any() else 0.0
        # inactive channels must not want power
        idle = [inv.at_zero - multiplier for inv, on in zip(inverters, active) if not on]
        if idle:
            residual = max(residual, max(0.0, *idle))
        if residual > tol:
            raise AllocationError(
                f"KKT residual {residual:.3g} exceeds tolerance {tol:.3g}"
            )

        objective = total_mi(problem, powers, self.rule)
        allocation = Allocation(
            powers=powers,
            multiplier=max(multiplier, 0.0),
            objective=objective,
            kkt_residual=residual,
        )
        if not all(inv.monotone for inv in inverters):
            gain = probe_optimality(problem, allocation, rule=self.rule)
            allocation = Allocation(
                powers=powers,
                multiplier=allocation.multiplier,
                objective=objective,
                kkt_residual=residual,
                perturbation_gain=gain,
            )
            if gain > PERTURBATION_GAIN_LIMIT:
                raise AllocationError(
                    f"moving {PERTURBATION_STEP:.0%} of the budget between active channels "
                    f"raises the total MI by {gain:.3g} nats; the stationary point is not "
                    f"a local maximum at quadrature order {self.rule.order}, retry with a "
                    f"higher order"
                )
            if self.verbose:
                console.print(
                    f"[cyan]Perturbation check: best gain {gain:.3g} nats[/cyan]"
                )
        if self.verbose:
            console.print(
                f"[green]Allocated {budget:g} over {len(problem)} channels, "
                f"lambda={allocation.multiplier:.6g}, residual={residual:.2g}[/green]"
            )
        return allocation

    @staticmethod
    def _balance(powers: np.ndarray, budget: float) -> np.ndarray:
        """Spread the remaining budget equally over active channels."""
        active = powers > 0
        if not active.any():
            return powers
        powers = powers.copy()
        powers[active] += (budget - powers.sum()) / active.sum()
        return np.maximum(powers, 0.0)


def allocate(
    problem: ParallelChannelSet,
    tol: float = DEFAULT_TOL,
    rule: Optional[QuadratureRule] = None,
) -> Allocation:
    return PowerAllocator(rule=rule).allocate(problem, tol)


def probe_optimality(
    problem: ParallelChannelSet,
    allocation: Allocation,
    step: float = PERTURBATION_STEP,
    rule: Optional[QuadratureRule] = None,
) -> float:
    """Largest objective gain from moving step*P between two active channels."""
    delta = step * problem.budget
    powers = allocation.powers
    base = total_mi(problem, powers, rule)
    active = [k for k in range(len(problem)) if powers[k] > 0]
    best = -math.inf
    for i in active:
        for j in active:
            if i == j or powers[j] < delta:
                continue
            moved = powers.copy()
            moved[i] += delta
            moved[j] -= delta
            best = max(best, total_mi(problem, moved, rule) - base)
    return best


def gaussian_reference_allocate(gains: Sequence[float], budget: float) -> Allocation:
    """Closed-form water-filling for Gaussian inputs."""
    gains = np.asarray(gains, dtype=float)
    order = np.argsort(-gains)
    inverse = 1.0 / gains[order]
    # largest active count n with water level above 1/g_n
    level = inverse[0] + budget
    for n in range(len(gains), 0, -1):
        candidate = (budget + inverse[:n].sum()) / n
        if candidate > inverse[n - 1]:
            level = candidate
            break
    powers = np.zeros(len(gains))
    powers[order] = np.maximum(0.0, level - inverse)
    objective = float(np.sum(np.log1p(gains * powers)))
    return Allocation(powers=powers, multiplier=1.0 / level, objective=objective, kkt_residual=0.0)


def load_problem(source: TextIO, base_dir: Optional[Path] = None) -> ParallelChannelSet:
    """Parse ``budget <P>`` followed by ``<gain> <constellation> <mode>`` lines."""
    budget: Optional[float] = None
    channels: List[Channel] = []
    lineno = 0
    for lineno, raw in enumerate(source, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if budget is None:
            if len(fields) != 2 or fields[0] != "budget":
                raise ProblemParseError(lineno, "expected header 'budget <P>'")
            try:
                budget = float(fields[1])
            except ValueError:
                raise ProblemParseError(lineno, f"invalid budget {fields[1]!r}") from None
            continue
        if len(fields) != 3:
            raise ProblemParseError(lineno, "expected '<gain> <constellation> <cm|bicm|gaussian>'")
        try:
            gain = float(fields[0])
        except ValueError:
            raise ProblemParseError(lineno, f"invalid gain {fields[0]!r}") from None
        try:
            mode = Mode(fields[2])
        except ValueError:
            raise ProblemParseError(lineno, f"unknown mode {fields[2]!r}") from None
        constellation = None
        if fields[1] not in ("-", "gaussian"):
            try:
                constellation = resolve_constellation(fields[1], base_dir)
            except ConstellationError as e:
                raise ProblemParseError(lineno, str(e)) from None
        try:
            channels.append(Channel(gain, constellation, mode))
        except ValueError as e:
            raise ProblemParseError(lineno, str(e)) from None

    if budget is None:
        raise ProblemParseError(lineno, "missing 'budget <P>' header")
    if not channels:
        raise ProblemParseError(lineno, "no channels defined")
    try:
        return ParallelChannelSet(tuple(channels), budget)
    except ValueError as e:
        raise ProblemParseError(lineno, str(e)) from None
