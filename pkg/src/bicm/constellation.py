"""Signal constellations with bit labelings."""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, TextIO, Tuple

import numpy as np

FAMILIES = ("pam", "psk", "qam")
LABELINGS = ("gray", "set_partitioning", "binary_reflected_custom")
MAX_BITS = 8


class ConstellationError(ValueError):
    """Invalid constellation parameters or contents."""


class ConstellationParseError(ConstellationError):
    """Malformed constellation file."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def _frozen(values: Iterable[complex]) -> np.ndarray:
    array = np.array(list(values), dtype=np.complex128)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Constellation:
    """A set of 2^m complex points, each carrying a distinct m-bit label."""

    points: np.ndarray
    labels: Tuple[str, ...]
    name: str = "custom"
    _bits: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        points = _frozen(np.asarray(self.points).ravel())
        labels = tuple(self.labels)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)

        if len(points) != len(labels):
            raise ConstellationError(
                f"{len(points)} points but {len(labels)} labels"
            )
        size = len(points)
        if size < 2 or size & (size - 1):
            raise ConstellationError(
                f"constellation size must be a power of two >= 2, got {size}"
            )
        m = size.bit_length() - 1
        for label in labels:
            if len(label) != m or set(label) - {"0", "1"}:
                raise ConstellationError(
                    f"label {label!r} is not a {m}-bit string"
                )
        if len(set(labels)) != size:
            raise ConstellationError("labels are not distinct")

        bits = np.array([[c == "1" for c in label] for label in labels], dtype=bool)
        bits.setflags(write=False)
        object.__setattr__(self, "_bits", bits)

    @property
    def m(self) -> int:
        """Bits per symbol."""
        return len(self.labels[0])

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def bits(self) -> np.ndarray:
        """Boolean label matrix, shape (2^m, m); column 0 is bit position 1."""
        return self._bits

    @property
    def mean_energy(self) -> float:
        return float(np.mean(np.abs(self.points) ** 2))

    @property
    def mean(self) -> complex:
        return complex(np.mean(self.points))

    def index_of(self, label: str) -> int:
        """Point index carrying the given label."""
        try:
            return self.labels.index(label)
        except ValueError:
            raise ConstellationError(f"no point labelled {label!r}") from None

    def subset(self, i: int, b: int) -> "SubConstellation":
        return subset(self, i, b)

    def __len__(self) -> int:
        return self.size

    def __repr__(self) -> str:
        return f"Constellation({self.name!r}, m={self.m})"


@dataclass(frozen=True, eq=False)
class SubConstellation:
    """Points of a parent constellation sharing bit ``b`` at position ``i``."""

    points: np.ndarray
    parent_size: int
    position: int
    bit: int

    def __post_init__(self):
        points = _frozen(np.asarray(self.points).ravel())
        if len(points) == 0:
            raise ConstellationError("sub-constellation is empty")
        object.__setattr__(self, "points", points)

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def mean_energy(self) -> float:
        return float(np.mean(np.abs(self.points) ** 2))

    @property
    def mean(self) -> complex:
        return complex(np.mean(self.points))

    def __len__(self) -> int:
        return self.size


def subset(c: Constellation, i: int, b: int) -> SubConstellation:
    """Points whose label has bit ``b`` at position ``i`` (1 = leftmost)."""
    if not 1 <= i <= c.m:
        raise ConstellationError(f"bit position {i} outside 1..{c.m}")
    if b not in (0, 1):
        raise ConstellationError(f"bit value must be 0 or 1, got {b}")
    mask = c.bits[:, i - 1] == bool(b)
    return SubConstellation(
        points=c.points[mask], parent_size=c.size, position=i, bit=b
    )


def all_subsets(c: Constellation) -> List[SubConstellation]:
    """All 2m subsets, ordered by position then bit value."""
    return [subset(c, i, b) for i in range(1, c.m + 1) for b in (0, 1)]


def normalize(c: Constellation) -> Constellation:
    """Scale points to unit mean energy; labels are unchanged."""
    energy = c.mean_energy
    if energy <= 0.0:
        raise ConstellationError("cannot normalize an all-zero constellation")
    if abs(energy - 1.0) <= 1e-14:
        return c
    return Constellation(c.points / math.sqrt(energy), c.labels, name=c.name)


# Label construction works on integers; bit position 1 is the most
# significant bit of the label integer.


def _gray(k: int) -> int:
    return k ^ (k >> 1)


def _to_label(value: int, m: int) -> str:
    return format(value, f"0{m}b")


def _reverse_bits(value: int, width: int) -> int:
    out = 0
    for _ in range(width):
        out = (out << 1) | (value & 1)
        value >>= 1
    return out


def _pam_levels(n_bits: int) -> np.ndarray:
    """Axis amplitudes +(M-1), ..., -(M-1) indexed by natural position."""
    size = 1 << n_bits
    return (size - 1) - 2 * np.arange(size, dtype=float)


def _axis_label(k: int, n_bits: int, labeling: str) -> int:
    if labeling == "set_partitioning":
        return _reverse_bits(k, n_bits)
    return _gray(k)


def _pam(m: int, labeling: str) -> Tuple[np.ndarray, List[int]]:
    levels = _pam_levels(m)
    values = [_axis_label(k, m, labeling) for k in range(len(levels))]
    return levels.astype(np.complex128), values


def _psk(m: int, labeling: str) -> Tuple[np.ndarray, List[int]]:
    size = 1 << m
    k = np.arange(size)
    points = np.exp(2j * np.pi * k / size)
    values = [_axis_label(int(i), m, labeling) for i in k]
    return points, values


def _qam(m: int, labeling: str) -> Tuple[np.ndarray, List[int]]:
    half = m // 2
    levels = _pam_levels(half)
    points = []
    values = []
    for i in range(len(levels)):
        for q in range(len(levels)):
            points.append(levels[i] + 1j * levels[q])
            if labeling == "set_partitioning":
                values.append(_ungerboeck_qam_label(i, q, half))
            else:
                values.append((_gray(i) << half) | _gray(q))
    return np.array(points), values


def _ungerboeck_qam_label(i: int, q: int, half: int) -> int:
    # level pair j: checkerboard split (i_j xor q_j), then axis coset (i_j)
    value = 0
    for j in range(half):
        ij = (i >> j) & 1
        qj = (q >> j) & 1
        value = (value << 2) | ((ij ^ qj) << 1) | ij
    return value


def _permute_label(value: int, m: int, bit_order: Sequence[int]) -> int:
    label = _to_label(value, m)
    return int("".join(label[p] for p in bit_order), 2)


def build_constellation(
    family: str,
    m: int,
    labeling: str = "gray",
    bit_order: Optional[Sequence[int]] = None,
) -> Constellation:
    """Build a unit-energy PAM, PSK or square QAM constellation."""
    if family not in FAMILIES:
        raise ConstellationError(
            f"unsupported family {family!r}; choose one of {', '.join(FAMILIES)}"
        )
    if labeling not in LABELINGS:
        raise ConstellationError(
            f"unsupported labeling {labeling!r}; choose one of {', '.join(LABELINGS)}"
        )
    if not isinstance(m, int) or not 1 <= m <= MAX_BITS:
        raise ConstellationError(f"unsupported m={m}; expected 1..{MAX_BITS}")
    if family == "qam" and m % 2:
        raise ConstellationError(f"unsupported m={m} for qam; square QAM needs even m")
    if bit_order is not None and labeling != "binary_reflected_custom":
        raise ConstellationError(
            f"bit_order is only supported with binary_reflected_custom, not {labeling!r}"
        )

    axis_labeling = "set_partitioning" if labeling == "set_partitioning" else "gray"
    builders = {"pam": _pam, "psk": _psk, "qam": _qam}
    points, values = builders[family](m, axis_labeling)

    if labeling == "binary_reflected_custom" and bit_order is not None:
        order = list(bit_order)
        if sorted(order) != list(range(m)):
            raise ConstellationError(
                f"unsupported bit_order {order}; expected a permutation of 0..{m - 1}"
            )
        values = [_permute_label(v, m, order) for v in values]

    # store in label order so index k carries label k
    ordered = np.empty(len(points), dtype=np.complex128)
    ordered[np.array(values)] = points
    labels = tuple(_to_label(k, m) for k in range(len(points)))
    name = f"{family},{m},{labeling}"
    return normalize(Constellation(ordered, labels, name=name))


def load_constellation(source: TextIO, name: str = "custom") -> Constellation:
    """Parse ``<re> <im> <bitstring>`` lines; the result is not normalized."""
    points = []
    labels = []
    seen = {}
    lineno = 0
    for lineno, raw in enumerate(source, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 3:
            raise ConstellationParseError(
                lineno, f"expected '<re> <im> <bitstring>', got {len(fields)} fields"
            )
        try:
            re_part, im_part = float(fields[0]), float(fields[1])
        except ValueError:
            raise ConstellationParseError(lineno, "amplitudes must be decimal numbers") from None
        if not (math.isfinite(re_part) and math.isfinite(im_part)):
            raise ConstellationParseError(lineno, "amplitudes must be finite")
        label = fields[2]
        if set(label) - {"0", "1"}:
            raise ConstellationParseError(lineno, f"label {label!r} is not a bitstring")
        if labels and len(label) != len(labels[0]):
            raise ConstellationParseError(
                lineno, f"label {label!r} has {len(label)} bits, expected {len(labels[0])}"
            )
        if label in seen:
            raise ConstellationParseError(
                lineno, f"duplicate label {label!r} (first on line {seen[label]})"
            )
        seen[label] = lineno
        points.append(complex(re_part, im_part))
        labels.append(label)

    if not points:
        raise ConstellationParseError(lineno, "no constellation points found")
    size = len(points)
    if size < 2 or size & (size - 1):
        raise ConstellationParseError(
            lineno, f"{size} points is not a power of two >= 2"
        )
    if size != 1 << len(labels[0]):
        raise ConstellationParseError(
            lineno, f"{size} points but labels have {len(labels[0])} bits"
        )
    return Constellation(np.array(points), tuple(labels), name=name)


def resolve_constellation(text: str, base_dir: Optional[Path] = None) -> Constellation:
    """Resolve ``family,m,labeling[,bit_order]`` or a constellation file path."""
    parts = [p.strip() for p in text.split(",")]
    if parts[0] in FAMILIES:
        if len(parts) not in (2, 3, 4):
            raise ConstellationError(
                f"constellation {text!r} should read family,m[,labeling[,bit_order]]"
            )
        try:
            m = int(parts[1])
        except ValueError:
            raise ConstellationError(f"unsupported m={parts[1]!r}") from None
        labeling = parts[2] if len(parts) > 2 else "gray"
        bit_order = None
        if len(parts) == 4:
            if not parts[3].isdigit():
                raise ConstellationError(f"unsupported bit_order {parts[3]!r}")
            bit_order = [int(ch) for ch in parts[3]]
        return build_constellation(parts[0], m, labeling, bit_order)

    path = Path(text)
    if base_dir is not None and not path.is_absolute():
        path = Path(base_dir) / path
    if not path.exists():
        raise ConstellationError(f"constellation file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return normalize(load_constellation(f, name=path.stem))
