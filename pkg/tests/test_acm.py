import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from acmbox.acm import EncodedAngle, decode, decode_full, encode, encode_full, fuse
from acmbox.errors import ZeroVector
from acmbox.geom import HALF_PI, PI, angular_error

GRID = np.arange(10_000) * (PI / 10_000)
theta_st = st.floats(0, PI, exclude_max=True)


@pytest.mark.parametrize("theta,omega,expected", [
    (0.0, 2, (1, 0)),
    (HALF_PI, 2, (-1, 0)),
    (PI / 4, 4, (-1, 0)),
    (PI / 3, 2, (-0.5, 0.8660254)),
])
def test_encode_examples(theta, omega, expected):
    assert encode(theta, omega) == pytest.approx(expected, abs=1e-7)


@pytest.mark.parametrize("fx,fy,omega,expected", [
    (1, 0, 2, 0.0),
    (-0.5, math.sqrt(3) / 2, 2, PI / 3),
    (0, -1, 2, 3 * PI / 4),
])
def test_decode_examples(fx, fy, omega, expected):
    assert decode(fx, fy, omega) == pytest.approx(expected, abs=1e-12)


def test_bad_omega():
    with pytest.raises(ValueError):
        encode(0.1, 3)
    with pytest.raises(ValueError):
        decode(1, 0, 8)


def test_zero_vector():
    with pytest.raises(ZeroVector):
        decode(1e-13, 0.0, 2)
    with pytest.raises(ZeroVector):
        decode_full((0.0, 0.0, 1.0, 0.0))
    # anything at or above the threshold still decodes
    assert decode(1e-12, 0.0, 2) == 0.0


@pytest.mark.parametrize("omega", [1, 2])
def test_round_trip(omega):
    back = decode(*encode(GRID, omega), omega)
    assert np.max(np.abs(back - GRID)) < 1e-9


def test_omega4_truncates_range():
    back = decode(*encode(GRID, 4), 4)
    low = GRID < HALF_PI
    assert np.max(np.abs(back[low] - GRID[low])) < 1e-9
    assert np.max(np.abs(back[~low] - (GRID[~low] - HALF_PI))) < 1e-9


@pytest.mark.parametrize("omega", [1, 2, 4])
def test_decode_range(omega):
    rng = np.random.default_rng(3)
    fx, fy = rng.normal(size=(2, 5000))
    t = decode(fx, fy, omega)
    assert np.all(t >= 0) and np.all(t < 2 * PI / omega)


@given(theta_st, st.sampled_from([1, 2, 4]))
def test_unit_norm(theta, omega):
    fx, fy = encode(theta, omega)
    assert abs(fx * fx + fy * fy - 1) < 1e-12


@given(st.floats(-5, 5), st.floats(-5, 5), st.sampled_from([1, 2, 4]))
def test_scale_invariance(fx, fy, omega):
    if math.hypot(fx, fy) < 1e-6:
        return
    ref = decode(fx, fy, omega)
    for c in (0.1, 1.0, 10.0):
        assert decode(c * fx, c * fy, omega) == pytest.approx(ref, abs=1e-12)


@given(theta_st, theta_st)
def test_omega2_lipschitz_across_boundary(a, b):
    d = angular_error(a, b, PI)
    gap = np.hypot(*(np.subtract(encode(a, 2), encode(b, 2))))
    assert gap <= 2 * d + 1e-12


def test_boundary_continuity():
    for eps in (1e-3, 1e-6, 1e-9):
        assert np.allclose(encode(PI - eps, 2), encode(0.0, 2), atol=2 * eps + 1e-15)
    # frequency 1 jumps: cos(pi - eps) is near -1, cos(0) is 1
    assert abs(encode(PI - 1e-9, 1)[0] - encode(0.0, 1)[0]) > 1.99


class TestFuse:
    @pytest.mark.parametrize("t2,t4,expected", [
        (0.7 * PI, 0.2 * PI, 0.7 * PI),
        (0.3 * PI, 0.3 * PI, 0.3 * PI),
        (0.52 * PI, 0.24 * PI, 0.74 * PI),
    ])
    def test_examples(self, t2, t4, expected):
        assert fuse(t2, t4) == pytest.approx(expected, abs=1e-12)
        assert fuse(t2, t4, wrap=False) == pytest.approx(expected, abs=1e-12)

    def test_exact_inputs(self):
        got = fuse(np.mod(GRID, PI), np.mod(GRID, HALF_PI))
        assert np.max(np.abs(got - GRID)) < 1e-9
        got = fuse(np.mod(GRID, PI), np.mod(GRID, HALF_PI), wrap=False)
        assert np.max(np.abs(got - GRID)) < 1e-9

    def test_coarse_wrap(self):
        # coarse estimate slipped past pi while the fine one sits near 0
        assert fuse(PI - 0.01, 0.005) == pytest.approx(0.005)
        assert fuse(PI - 0.01, 0.005, wrap=False) == pytest.approx(0.005 + HALF_PI)

    @given(st.floats(-PI, 2 * PI), st.floats(0, HALF_PI, exclude_max=True))
    def test_modes_agree_inside_window(self, t2, t4):
        if -PI / 4 + 1e-9 < t2 - t4 < 3 * PI / 4 - 1e-9:
            assert fuse(t2, t4) == fuse(t2, t4, wrap=False)


def test_full_round_trip():
    for t in (0.9 * PI, 0.25 * PI):
        assert decode_full(encode_full(t)) == pytest.approx(t, abs=1e-9)
    e = encode_full(0.3)
    assert isinstance(e, EncodedAngle) and isinstance(e.fx2, float)


def _worst_case_error(theta, delta):
    """Largest fused error over corner/edge noise patterns of amplitude ``delta``."""
    e = np.array(encode_full(theta))
    levels = np.linspace(-delta, delta, 5)
    mesh = np.stack(np.meshgrid(*[levels] * 4, indexing="ij"), -1).reshape(-1, 4)
    noisy = e[:, None] + mesh.T
    got = decode_full(tuple(noisy))
    return float(np.max(angular_error(got, theta, PI)))


def test_noise_bound_sampled():
    thetas = GRID[::97]
    assert max(_worst_case_error(t, 0.05) for t in thetas) < 0.08
