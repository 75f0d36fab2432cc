import json
import math

import numpy as np
import pytest

from fadealloc.constellation import builtin, make_psk
from fadealloc.curve import (CACHE_ENV, InfoCurve, InputModel, UnachievableRateError,
                             build_curve, cache_dir, get_curve)


def test_interpolation_matches_engine_off_grid(cm16, bicm16):
    for curve in (cm16, bicm16):
        for rho in (0.037, 0.41, 2.3, 7.7, 31.0, 120.0):
            info, mmse = curve.model.evaluate(rho)
            assert abs(curve.info(rho) - info) < 2e-6
            assert abs(curve.mmse(rho) - mmse) < 2e-6 * max(1.0, mmse) + 1e-3 * mmse


@pytest.mark.parametrize("which", ["cm16", "bicm16"])
def test_monotone_on_dense_grid(request, which):
    curve = request.getfixturevalue(which)
    r = np.concatenate([[0.0], np.geomspace(1e-4, 1e4, 20000)])
    i = curve.info(r)
    e = curve.mmse(r)
    assert np.all(np.diff(i) >= 0)
    assert np.all(np.diff(e) <= 0)
    assert i[0] == 0.0 and i[-1] <= curve.max_info


def test_inverses_round_trip(cm16, bicm16):
    for curve in (cm16, bicm16):
        r = np.geomspace(1e-3, 100.0, 400)
        assert np.allclose(curve.inverse_info(curve.info(r)), r, rtol=1e-9)
        assert np.allclose(curve.inverse_mmse(curve.mmse(r)), r, rtol=1e-11)
        R = np.linspace(0.01, curve.max_info - 0.01, 200)
        assert np.allclose(curve.info(curve.inverse_info(R)), R, atol=1e-13)


def test_inverse_beyond_grid_uses_tail(cm16):
    v = cm16.mmse_values[-1] / 100
    rho = cm16.inverse_mmse(v)
    assert rho > cm16.rho_max
    assert cm16.saturated(v)
    assert cm16.mmse(rho) == pytest.approx(v, rel=1e-9)


def test_inverse_mmse_clamps(cm16, bicm16):
    assert cm16.inverse_mmse(1.5) == 0.0
    assert bicm16.inverse_mmse(0.9) == 0.0          # above MMSE(0) = 0.8
    assert bicm16.mmse0 == pytest.approx(0.8, abs=1e-12)
    with pytest.raises(ValueError):
        cm16.inverse_mmse(0.0)


def test_unachievable_rate(cm16):
    with pytest.raises(UnachievableRateError):
        cm16.inverse_info(4.0)
    with pytest.raises(UnachievableRateError):
        cm16.inverse_info(5.0)


def test_gaussian_curve_exact(gauss_curve):
    assert gauss_curve.inverse_info(1.0) == pytest.approx(1.0)
    assert gauss_curve.inverse_mmse(0.25) == pytest.approx(3.0)
    assert gauss_curve.info(3.0) == pytest.approx(2.0)
    assert math.isinf(gauss_curve.max_info)


def test_bicm_below_cm_everywhere(cm16, bicm16):
    r = np.geomspace(1e-3, 1e3, 3000)
    assert np.all(bicm16.info(r) <= cm16.info(r) + 1e-9)


def test_derivative_consistency(cm16):
    # the interpolant of I carries MMSE/ln2 as its slope
    r = np.geomspace(0.05, 50, 40)
    h = 1e-6 * r
    fd = (cm16.info(r + h) - cm16.info(r - h)) / (2 * h)
    assert np.allclose(fd, cm16.mmse(r) / math.log(2), rtol=2e-4, atol=1e-6)


def test_save_load_round_trip(tmp_path, cm16):
    path = tmp_path / "curve.json"
    cm16.save(path)
    back = InfoCurve.load(path)
    assert back.digest() == cm16.digest()
    r = np.geomspace(1e-3, 300, 100)
    assert np.array_equal(back.info(r), cm16.info(r))


def test_load_rejects_tampered(tmp_path, cm16):
    path = tmp_path / "curve.json"
    cm16.save(path)
    data = json.loads(path.read_text())
    data["info"][5], data["info"][6] = data["info"][6] + 0.1, data["info"][5]
    path.write_text(json.dumps(data))
    with pytest.raises(ValueError):
        InfoCurve.load(path)


def test_cache_env(monkeypatch, tmp_path):
    monkeypatch.setenv(CACHE_ENV, str(tmp_path))
    assert cache_dir() == tmp_path
    curve = get_curve(InputModel.cm(make_psk(1)), knots=40)
    assert any(p.name.startswith("cm-bpsk") for p in tmp_path.iterdir())
    assert curve.info(1.0) == pytest.approx(InputModel.cm(make_psk(1)).evaluate(1.0)[0], abs=1e-5)
    monkeypatch.setenv(CACHE_ENV, "")
    assert cache_dir() is None


def test_build_is_deterministic():
    m = InputModel.cm(builtin("qpsk"))
    a = build_curve(m, knots=30)
    b = build_curve(m, knots=30)
    assert a.digest() == b.digest()
