import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fadealloc.constellation import (ConstellationError, LabeledConstellation, bit_subset,
                                     builtin, gray_code, load_constellation, make_psk,
                                     make_qam, save_constellation)


def hamming(a: str, b: str) -> int:
    return sum(x != y for x, y in zip(a, b))


@pytest.mark.parametrize("M", range(1, 7))
def test_psk_unit_energy_and_gray_neighbours(M):
    k = make_psk(M)
    assert k.size == 2**M
    assert np.isclose(np.mean(np.abs(k.points) ** 2), 1.0, atol=1e-14)
    assert np.allclose(np.abs(k.points), 1.0)
    # points on the circle are listed in angle order; neighbours differ in one bit
    for i in range(k.size):
        assert hamming(k.labels[i], k.labels[(i + 1) % k.size]) == 1


def test_bpsk_and_qpsk_points_are_exact():
    assert np.array_equal(make_psk(1).points, np.array([1.0, -1.0]))
    q = make_psk(2).points * np.sqrt(1.0)
    assert set(np.round(q, 15).tolist()) == {1, 1j, -1, -1j}


@pytest.mark.parametrize("M", [2, 4, 6, 8])
def test_qam_energy_grid_and_gray(M):
    k = make_qam(M)
    assert np.isclose(np.mean(np.abs(k.points) ** 2), 1.0, atol=1e-13)
    d = np.abs(k.points[:, None] - k.points[None, :])
    dmin = d[d > 0].min()
    # nearest neighbours on the square grid differ in exactly one label bit
    for i, j in zip(*np.nonzero(np.isclose(d, dmin))):
        assert hamming(k.labels[i], k.labels[j]) == 1


def test_qam16_min_distance():
    k = make_qam(4)
    d = np.abs(k.points[:, None] - k.points[None, :])
    assert np.isclose(d[d > 0].min(), 2 / np.sqrt(10))


def test_gray_code():
    assert [gray_code(i) for i in range(8)] == [0, 1, 3, 2, 6, 7, 5, 4]


def test_bit_subsets_partition(qam16):
    for j in range(1, 5):
        s0 = bit_subset(qam16, j, 0).members
        s1 = bit_subset(qam16, j, 1).members
        assert len(s0) == len(s1) == 8
        assert sorted(s0 + s1) == list(range(16))
        assert all(qam16.labels[i][j - 1] == "0" for i in s0)


def test_bit_subset_bounds(qam16):
    with pytest.raises(ConstellationError):
        bit_subset(qam16, 0, 0)
    with pytest.raises(ConstellationError):
        bit_subset(qam16, 5, 0)
    with pytest.raises(ConstellationError):
        bit_subset(qam16, 1, 2)


@pytest.mark.parametrize("points, labels", [
    ([1, -1, 1j], ["00", "01", "10"]),              # not a power of two
    ([1, -1], ["0"]),                               # label count mismatch
    ([1, -1], ["0", "0"]),                          # labels not a bijection
    ([1, -1], ["0", "2"]),                          # not binary
    ([1, 1], ["0", "1"]),                           # coincident points
    ([0, 0], ["0", "1"]),                           # zero energy
    ([1], ["0"]),                                   # too small
])
def test_invariants_rejected(points, labels):
    with pytest.raises(ConstellationError):
        LabeledConstellation(np.array(points, dtype=complex), labels)


def test_points_are_read_only(qam16):
    with pytest.raises(ValueError):
        qam16.points[0] = 0


def test_json_round_trip(tmp_path, qam16):
    path = tmp_path / "k.json"
    save_constellation(qam16, path)
    back = load_constellation(path)
    assert back == qam16
    assert back.digest() == qam16.digest()


def test_json_declared_M_mismatch(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"name": "x", "M": 2, "points": [[1, 0], [-1, 0]],
                                "labels": ["0", "1"]}))
    with pytest.raises(ConstellationError):
        load_constellation(path)


def test_builtin_names():
    assert builtin("16qam") == builtin("qam16")
    assert builtin("BPSK").M == 1
    with pytest.raises(ConstellationError):
        builtin("qam32")


def test_digest_depends_on_labels():
    k = make_qam(2)
    swapped = LabeledConstellation(k.points, k.labels[::-1])
    assert swapped.digest() != k.digest()


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(-50, 50), st.integers(-50, 50)),
                min_size=4, max_size=4, unique=True).filter(lambda p: any(p_ != (0, 0) for p_ in p)))
def test_any_distinct_points_normalize(pairs):
    pts = np.array([complex(a, b) for a, b in pairs])
    k = LabeledConstellation(pts, ["00", "01", "10", "11"])
    assert abs(np.mean(np.abs(k.points) ** 2) - 1) <= 1e-12
