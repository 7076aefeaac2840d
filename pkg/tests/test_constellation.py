"""Tests for constellations, labelings and subsets."""

import io
import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from bicm.constellation import (
    Constellation,
    ConstellationError,
    ConstellationParseError,
    all_subsets,
    build_constellation,
    load_constellation,
    normalize,
    resolve_constellation,
    subset,
)

BUILT_IN = [
    ("pam", 1), ("pam", 2), ("pam", 3),
    ("psk", 2), ("psk", 3), ("psk", 4),
    ("qam", 2), ("qam", 4), ("qam", 6),
]
LABELINGS = ["gray", "set_partitioning", "binary_reflected_custom"]


def min_distance(points: np.ndarray) -> float:
    d = np.abs(points[:, None] - points[None, :])
    return float(np.min(d[~np.eye(len(points), dtype=bool)]))


def hamming(a: str, b: str) -> int:
    return sum(x != y for x, y in zip(a, b))


class TestBuildConstellation:
    """Built-in PAM/PSK/QAM families."""

    def test_16qam_gray_points(self):
        """16-QAM has per-axis amplitudes {±1, ±3}/sqrt(10) and unit energy."""
        c = build_constellation("qam", 4, "gray")
        assert c.size == 16
        assert c.m == 4
        assert abs(c.mean_energy - 1.0) < 1e-12
        axis = np.sort(np.unique(np.round(c.points.real * math.sqrt(10), 9)))
        np.testing.assert_allclose(axis, [-3, -1, 1, 3])
        axis = np.sort(np.unique(np.round(c.points.imag * math.sqrt(10), 9)))
        np.testing.assert_allclose(axis, [-3, -1, 1, 3])

    def test_bpsk(self):
        """BPSK maps label 0 to +1 and label 1 to -1."""
        c = build_constellation("pam", 1, "gray")
        assert c.labels == ("0", "1")
        np.testing.assert_allclose(c.points, [1.0, -1.0])

    @pytest.mark.parametrize("family,m", BUILT_IN)
    @pytest.mark.parametrize("labeling", LABELINGS)
    def test_unit_energy_and_distinct_labels(self, family, m, labeling):
        """Every built-in constellation is normalized with a bijective labeling."""
        c = build_constellation(family, m, labeling)
        assert abs(c.mean_energy - 1.0) < 1e-12, f"{c.name} energy {c.mean_energy}"
        assert len(set(c.labels)) == 2**m
        assert len(np.unique(np.round(c.points, 12))) == 2**m, "points must be distinct"

    def test_points_stored_in_label_order(self):
        """points[k] carries the label whose integer value is k."""
        c = build_constellation("psk", 3, "gray")
        for k, label in enumerate(c.labels):
            assert int(label, 2) == k
            assert c.index_of(label) == k

    @pytest.mark.parametrize("m", [2, 4, 6, 8])
    def test_gray_qam_adjacency(self, m):
        """Lattice-adjacent Gray QAM points differ in exactly one bit."""
        c = build_constellation("qam", m, "gray")
        d_min = min_distance(c.points)
        for a, b in itertools.combinations(range(c.size), 2):
            if abs(abs(c.points[a] - c.points[b]) - d_min) < 1e-9:
                assert hamming(c.labels[a], c.labels[b]) == 1, (
                    f"{c.labels[a]} and {c.labels[b]} are neighbours"
                )

    def test_gray_qam_is_product_of_gray_pam(self):
        """First m/2 bits label the in-phase axis, last m/2 the quadrature axis."""
        c = build_constellation("qam", 4, "gray")
        pam = build_constellation("pam", 2, "gray")
        pam_by_label = {label: p.real for label, p in zip(pam.labels, pam.points)}
        for label, point in zip(c.labels, c.points):
            ratio = point.real / pam_by_label[label[:2]]
            assert abs(ratio - math.sqrt(5 / 10)) < 1e-12
            ratio = point.imag / pam_by_label[label[2:]]
            assert abs(ratio - math.sqrt(5 / 10)) < 1e-12

    @pytest.mark.parametrize("m", [2, 3, 4])
    def test_gray_psk_adjacency(self, m):
        """Neighbouring PSK points differ in one bit, wrap-around included."""
        c = build_constellation("psk", m, "gray")
        order = np.argsort(np.mod(np.angle(c.points), 2 * np.pi))
        for k in range(c.size):
            a, b = order[k], order[(k + 1) % c.size]
            assert hamming(c.labels[a], c.labels[b]) == 1

    def test_set_partitioning_16qam_first_level(self):
        """X_0^1 of set-partitioned 16-QAM has sqrt(2) times the parent minimum distance."""
        c = build_constellation("qam", 4, "set_partitioning")
        parent = min_distance(c.points)
        for b in (0, 1):
            sub = subset(c, 1, b)
            assert len(sub) == 8
            assert abs(min_distance(sub.points) / parent - math.sqrt(2)) < 1e-9

    def test_set_partitioning_16qam_chain(self):
        """Fixing the first k bits multiplies the minimum distance by sqrt(2)^k."""
        c = build_constellation("qam", 4, "set_partitioning")
        parent = min_distance(c.points)
        for k in (1, 2, 3):
            for prefix in itertools.product("01", repeat=k):
                prefix = "".join(prefix)
                members = [p for p, label in zip(c.points, c.labels) if label.startswith(prefix)]
                ratio = min_distance(np.array(members)) / parent
                assert abs(ratio - math.sqrt(2) ** k) < 1e-9, f"prefix {prefix}: ratio {ratio}"

    def test_set_partitioning_pam_splits_alternate_levels(self):
        """The first set-partitioning bit of 4-PAM selects every other level."""
        c = build_constellation("pam", 2, "set_partitioning")
        parent = min_distance(c.points)
        for b in (0, 1):
            assert abs(min_distance(subset(c, 1, b).points) / parent - 2) < 1e-9

    def test_binary_reflected_custom_default_is_gray(self):
        """Without a bit order, binary_reflected_custom equals Gray."""
        gray = build_constellation("qam", 4, "gray")
        custom = build_constellation("qam", 4, "binary_reflected_custom")
        np.testing.assert_array_equal(gray.points, custom.points)

    def test_binary_reflected_custom_permutes_bits(self):
        """A bit order permutes label positions of the Gray map."""
        gray = build_constellation("qam", 4, "gray")
        custom = build_constellation("qam", 4, "binary_reflected_custom", bit_order=[2, 3, 0, 1])
        for label, point in zip(gray.labels, gray.points):
            swapped = label[2:] + label[:2]
            assert abs(custom.points[custom.index_of(swapped)] - point) < 1e-12

    @pytest.mark.parametrize(
        "family,m,labeling,word",
        [
            ("qam", 3, "gray", "m=3"),
            ("hex", 2, "gray", "hex"),
            ("pam", 9, "gray", "m=9"),
            ("pam", 0, "gray", "m=0"),
            ("psk", 2, "natural", "natural"),
        ],
    )
    def test_unsupported_combinations(self, family, m, labeling, word):
        """Errors name the unsupported parameter."""
        with pytest.raises(ConstellationError, match=word):
            build_constellation(family, m, labeling)

    def test_bit_order_rejected_for_gray(self):
        """Only binary_reflected_custom accepts a bit order."""
        with pytest.raises(ConstellationError, match="bit_order"):
            build_constellation("qam", 4, "gray", bit_order=[0, 1, 2, 3])

    def test_bit_order_must_be_permutation(self):
        """A bit order that is not a permutation is rejected."""
        with pytest.raises(ConstellationError, match="bit_order"):
            build_constellation("qam", 4, "binary_reflected_custom", bit_order=[0, 0, 1, 2])


class TestSubset:
    """Subset extraction X_b^i."""

    def test_16qam_subset_size(self):
        """Each subset of 16-QAM has eight points."""
        c = build_constellation("qam", 4, "gray")
        assert len(subset(c, 1, 0)) == 8

    def test_bpsk_subset(self):
        """X_0^1 of BPSK is the single point +1."""
        c = build_constellation("pam", 1, "gray")
        sub = subset(c, 1, 0)
        np.testing.assert_allclose(sub.points, [1.0])
        assert sub.parent_size == 2

    def test_position_one_is_leftmost_bit(self):
        """Bit position 1 reads the first label character."""
        c = build_constellation("qam", 4, "gray")
        sub = c.subset(1, 1)
        expected = [p for p, label in zip(c.points, c.labels) if label[0] == "1"]
        np.testing.assert_array_equal(sub.points, expected)

    @pytest.mark.parametrize("family,m", BUILT_IN)
    def test_partition(self, family, m):
        """X_0^i and X_1^i partition the constellation for every i."""
        c = build_constellation(family, m, "gray")
        for i in range(1, m + 1):
            zero, one = subset(c, i, 0), subset(c, i, 1)
            assert len(zero) == len(one) == 2 ** (m - 1)
            merged = np.sort_complex(np.concatenate([zero.points, one.points]))
            np.testing.assert_array_equal(merged, np.sort_complex(c.points))

    def test_all_subsets_order(self):
        """all_subsets lists (1,0), (1,1), (2,0), ... ."""
        c = build_constellation("qam", 4, "gray")
        subsets = all_subsets(c)
        assert [(s.position, s.bit) for s in subsets] == [
            (i, b) for i in range(1, 5) for b in (0, 1)
        ]

    @pytest.mark.parametrize("i", [0, 5])
    def test_position_out_of_range(self, i):
        """Positions outside 1..m are rejected."""
        c = build_constellation("qam", 4, "gray")
        with pytest.raises(ConstellationError, match="position"):
            subset(c, i, 0)

    def test_bad_bit_value(self):
        """Bit values other than 0 and 1 are rejected."""
        c = build_constellation("pam", 1, "gray")
        with pytest.raises(ConstellationError):
            subset(c, 1, 2)


class TestLoadConstellation:
    """Constellation file parsing."""

    def test_bpsk_file(self):
        """Two lines give BPSK."""
        c = load_constellation(io.StringIO("1 0 0\n-1 0 1\n"))
        assert c.m == 1
        np.testing.assert_allclose(c.points, [1.0, -1.0])
        assert c.labels == ("0", "1")

    def test_comments_and_blank_lines(self):
        """'#' starts a comment; blank lines are skipped."""
        text = "# BPSK\n\n 1 0 0  # plus one\n-1 0 1\n"
        c = load_constellation(io.StringIO(text))
        assert c.size == 2

    def test_sixteen_points(self):
        """A 16-line file gives m = 4."""
        qam = build_constellation("qam", 4, "gray")
        text = "".join(f"{float(p.real)!r} {float(p.imag)!r} {label}\n" for p, label in zip(qam.points, qam.labels))
        c = load_constellation(io.StringIO(text))
        assert c.m == 4
        np.testing.assert_array_equal(c.points, qam.points)

    def test_not_normalized(self):
        """Loading keeps the amplitudes as written."""
        c = load_constellation(io.StringIO("3 0 0\n-3 0 1\n"))
        np.testing.assert_allclose(c.points, [3.0, -3.0])

    def test_duplicate_label(self):
        """Duplicate labels fail with the line number."""
        text = "1 0 00\n-1 0 01\n0 1 01\n0 -1 11\n"
        with pytest.raises(ConstellationParseError, match="duplicate") as info:
            load_constellation(io.StringIO(text))
        assert info.value.lineno == 3

    def test_not_power_of_two(self):
        """Three points cannot carry a labeling."""
        text = "1 0 00\n-1 0 01\n0 1 11\n"
        with pytest.raises(ConstellationParseError, match="power of two"):
            load_constellation(io.StringIO(text))

    @pytest.mark.parametrize(
        "text,lineno",
        [
            ("1 0\n-1 0 1\n", 1),
            ("1 0 0\nx 0 1\n", 2),
            ("1 0 0\n-1 0 2\n", 2),
            ("1 0 0\n-1 0 10\n", 2),
        ],
    )
    def test_malformed_lines(self, text, lineno):
        """Malformed lines report their line number."""
        with pytest.raises(ConstellationParseError) as info:
            load_constellation(io.StringIO(text))
        assert info.value.lineno == lineno
        assert str(info.value).startswith(f"line {lineno}:")

    def test_empty_file(self):
        """A file without points is rejected."""
        with pytest.raises(ConstellationParseError, match="no constellation points"):
            load_constellation(io.StringIO("# nothing\n"))


class TestNormalize:
    """Unit-energy scaling."""

    def test_scales_to_unit_energy(self):
        """{±3} becomes {±1}."""
        c = Constellation(np.array([3.0, -3.0]), ("0", "1"))
        np.testing.assert_allclose(normalize(c).points, [1.0, -1.0])

    def test_non_zero_mean(self):
        """{0, 2} has mean energy 2 and becomes {0, sqrt(2)}."""
        c = Constellation(np.array([0.0, 2.0]), ("0", "1"))
        np.testing.assert_allclose(normalize(c).points, [0.0, math.sqrt(2)])

    def test_labels_unchanged(self):
        """Normalization keeps labels."""
        c = Constellation(np.array([3.0, -3.0]), ("1", "0"))
        assert normalize(c).labels == ("1", "0")

    def test_all_zero(self):
        """An all-zero constellation cannot be normalized."""
        c = Constellation(np.array([0.0, 0.0]), ("0", "1"))
        with pytest.raises(ConstellationError, match="all-zero"):
            normalize(c)

    @settings(max_examples=50, deadline=None)
    @given(
        values=st.lists(
            st.tuples(
                st.floats(min_value=-10, max_value=10, allow_nan=False),
                st.floats(min_value=-10, max_value=10, allow_nan=False),
            ),
            min_size=4,
            max_size=4,
        )
    )
    def test_idempotent(self, values):
        """normalize(normalize(c)) equals normalize(c) within 1e-15."""
        points = np.array([complex(re, im) for re, im in values])
        assume(np.mean(np.abs(points) ** 2) > 1e-6)
        c = Constellation(points, ("00", "01", "10", "11"))
        once = normalize(c)
        twice = normalize(once)
        assert twice.labels == once.labels
        np.testing.assert_allclose(twice.points, once.points, rtol=0, atol=1e-15)


class TestResolveConstellation:
    """Built-in identifiers and file paths."""

    def test_builtin_identifier(self):
        """family,m,labeling resolves to a built-in constellation."""
        c = resolve_constellation("qam,4,set_partitioning")
        assert c.name == "qam,4,set_partitioning"
        assert c.size == 16

    def test_default_labeling(self):
        """The labeling defaults to Gray."""
        assert resolve_constellation("psk,2").name == "psk,2,gray"

    def test_bit_order_digits(self):
        """A fourth field gives the bit order."""
        c = resolve_constellation("qam,4,binary_reflected_custom,2301")
        ref = build_constellation("qam", 4, "binary_reflected_custom", bit_order=[2, 3, 0, 1])
        np.testing.assert_array_equal(c.points, ref.points)

    def test_file_is_normalized(self, tmp_path):
        """Constellation files are loaded and normalized."""
        path = tmp_path / "bpsk3.txt"
        path.write_text("3 0 0\n-3 0 1\n", encoding="utf-8")
        c = resolve_constellation(str(path))
        np.testing.assert_allclose(c.points, [1.0, -1.0])
        assert c.name == "bpsk3"

    def test_relative_to_base_dir(self, tmp_path):
        """Relative paths resolve against base_dir."""
        (tmp_path / "bpsk.txt").write_text("1 0 0\n-1 0 1\n", encoding="utf-8")
        c = resolve_constellation("bpsk.txt", base_dir=tmp_path)
        assert c.size == 2

    def test_missing_file(self, tmp_path):
        """Unknown identifiers that are not files are rejected."""
        with pytest.raises(ConstellationError, match="not found"):
            resolve_constellation(str(tmp_path / "missing.txt"))

    def test_bad_m(self):
        """A non-integer m is rejected."""
        with pytest.raises(ConstellationError, match="m="):
            resolve_constellation("qam,four,gray")


@settings(max_examples=30, deadline=None)
@given(
    choice=st.sampled_from(BUILT_IN),
    labeling=st.sampled_from(LABELINGS),
)
def test_labels_decode_losslessly(choice, labeling):
    """Label to index and back is the identity."""
    family, m = choice
    c = build_constellation(family, m, labeling)
    for k, label in enumerate(c.labels):
        assert c.index_of(label) == k
        assert "".join("1" if b else "0" for b in c.bits[k]) == label
