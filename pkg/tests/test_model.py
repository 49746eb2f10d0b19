import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from epbtopo.errors import SelfOrthogonal
from epbtopo.model import (
    ChainParamPoint,
    ModelKind,
    ParamPoint,
    SystemConstants,
    axis_splitting,
    build_hamiltonian,
    discriminant,
    discriminant_many,
    eigenvalues,
    eigenvalues_many,
    ep_locus_parabola,
    make_point,
    spectral_decomposition,
    spectral_many,
    zeta_from_position,
)

P, C = ModelKind.PARABOLA, ModelKind.CHAIN

# roots of det(w - H) from mpmath.polyroots at 50 digits, H assembled
# directly from the model definition; sorted by descending real part
MPMATH_EIGENVALUES = [
    (P, (0.14, -0.28, 0.0), [complex(19622.538683712243552, -106.31245026811974406), complex(19576.301316287756448, -171.26754973188025594)]),
    (P, (-0.24, 0.49, 0.54), [complex(19669.784985704891082, -146.88871832922222809), complex(19603.745014295108918, -93.831281670777771914)]),
    (P, (0.0, 0.36, -0.68), [complex(19650.575458039354672, -174.09747540141853349), complex(19610.344541960645328, -89.902524598581466513)]),
    (P, (-1.0, 0.0, 0.0), [complex(19661.5, -83.5), complex(19564.5, -83.5)]),
    (P, (0.3, -0.1, 0.9), [complex(19613.052323734121829, -84.172948506729382365), complex(19603.247676265878171, -208.92705149327061764)]),
    (C, (0.0, 0.5, -0.5), [complex(19643.303310891425589, -93.188234374324159671), complex(19582.696689108574411, -170.81176562567584033)]),
    (C, (0.25, -0.3, 0.8), [complex(19664.070622706016403, -109.85727606653342097), complex(19561.929377293983597, -178.39272393346657903)]),
]

coord = st.floats(-2.0, 2.0, allow_nan=False)
points3 = st.tuples(coord, coord, coord)


def _sorted(w):
    return sorted(w, key=lambda z: (-z.real, -z.imag))


@pytest.mark.parametrize("kind,x,expected", MPMATH_EIGENVALUES)
def test_eigenvalues_match_mpmath(c, kind, x, expected):
    w = _sorted(eigenvalues(kind, c, make_point(kind, x)))
    for a, b in zip(w, expected):
        assert abs(a - b) <= 1e-12 * abs(b)


def test_hamiltonian_examples(c):
    e = c.onsite
    k = c.kappa0
    H = build_hamiltonian(P, c, ParamPoint(-1, 0, 0))
    np.testing.assert_allclose(H, [[e, -k], [-k, e]], rtol=0, atol=1e-12)
    H = build_hamiltonian(P, c, ParamPoint(0, 0, 0))
    np.testing.assert_allclose(H, [[e, -k], [-k, e - 2j * k]], rtol=0, atol=1e-12)
    H = build_hamiltonian(C, c, ChainParamPoint(0, 0, 0))
    np.testing.assert_allclose(H, e * np.eye(2) + k * np.array([[0, -1], [-1, -2j]]), rtol=0, atol=1e-12)


def test_hamiltonian_rejects_wrong_point_type(c):
    with pytest.raises(TypeError):
        build_hamiltonian(P, c, ChainParamPoint(0, 0, 0))


@given(points3)
def test_hamiltonian_exactly_symmetric(x):
    c = SystemConstants()
    for kind in (P, C):
        H = build_hamiltonian(kind, c, make_point(kind, x))
        assert H[0, 1] == H[1, 0]


def test_eigenvalue_examples(c):
    e, k = c.onsite, c.kappa0
    wp, wm = eigenvalues(P, c, ParamPoint(-1, 0, 0))
    assert wp == pytest.approx(e + k, abs=1e-9)
    assert wm == pytest.approx(e - k, abs=1e-9)
    assert wp.imag == wm.imag == -c.gamma0
    wp, wm = eigenvalues(P, c, ParamPoint(0, 0, 0))
    assert wp == wm == pytest.approx(e - 1j * k, abs=1e-9)
    wn = eigenvalues(P, c, ParamPoint(-1, 0, 0), normalize=True)
    assert wn[0] == pytest.approx((e + k) / c.omega0, rel=1e-15)


def test_principal_branch_order(c):
    # (+, -) order follows the principal square root, not the real part
    x = np.array([[0.3, -0.1, 0.9]])
    w = eigenvalues_many(P, c, x)[0]
    h = -(1 - 0.81)
    g = -1j * (1 + 0.3 - 0.1j)
    s = np.sqrt(h * h + g * g + 0j)
    assert s.real >= 0
    assert w[0] == pytest.approx(c.onsite + c.kappa0 * (g + s), abs=1e-9)


def test_oracle_equivalence_random(c, rng):
    # quadratic formula on the assembled matrix, 10^4 points
    X = rng.uniform(-2, 2, size=(10_000, 3))
    for kind in (P, C):
        w = eigenvalues_many(kind, c, X)
        H = np.array([build_hamiltonian(kind, c, make_point(kind, x)) for x in X])
        tr = H[:, 0, 0] + H[:, 1, 1]
        det = H[:, 0, 0] * H[:, 1, 1] - H[:, 0, 1] * H[:, 1, 0]
        r = np.sqrt(tr * tr - 4 * det)
        roots = np.stack([(tr + r) / 2, (tr - r) / 2], axis=1)
        got = np.sort_complex(w)
        ref = np.sort_complex(roots)
        # tr**2 - 4 det cancels at omega0 >> kappa0; judge against |omega|
        assert np.max(np.abs(got - ref) / np.abs(ref)) < 1e-12


def test_discriminant_examples(c):
    assert discriminant(P, c, ParamPoint(-1, 0, 0)) == pytest.approx((2 * c.kappa0) ** 2, rel=1e-14)
    for z in (0.0, 0.3, 0.5, 0.9, 1.0):
        for xr in ep_locus_parabola(z):
            assert abs(discriminant(P, c, ParamPoint(xr, 0.0, z))) < 1e-10 * c.kappa0 ** 2


@given(points3)
def test_discriminant_is_squared_gap(x):
    c = SystemConstants()
    for kind in (P, C):
        p = make_point(kind, x)
        wp, wm = eigenvalues(kind, c, p)
        d = discriminant(kind, c, p)
        assert abs(d - (wp - wm) ** 2) <= 1e-12 * max(abs(d), 1e-6 * c.kappa0 ** 2) + 1e-9


def test_ep_locus_examples(c):
    assert ep_locus_parabola(0) == (0.0, -2.0)
    assert ep_locus_parabola(1) == (-1.0, -1.0)
    assert ep_locus_parabola(-1) == (-1.0, -1.0)
    xr = ep_locus_parabola(0.5)[0]
    wp, wm = eigenvalues(P, c, ParamPoint(xr, 0.0, 0.5))
    assert abs(wp - wm) < 1e-10 * c.omega0


def test_spectral_decomposition_hermitian_limit(c):
    sp = spectral_decomposition(P, c, ParamPoint(-1, 0, 0))
    e, k = c.onsite, c.kappa0
    for w, r in zip(sp.omega, sp.right):
        if abs(w - (e - k)) < 1e-9:
            assert abs(abs(np.vdot(r, [1, 1])) / math.sqrt(2) - 1) < 1e-12
        else:
            assert abs(w - (e + k)) < 1e-9
            assert abs(abs(np.vdot(r, [1, -1])) / math.sqrt(2) - 1) < 1e-12


@given(points3)
def test_spectral_pair_invariants(x):
    c = SystemConstants()
    for kind in (P, C):
        p = make_point(kind, x)
        h_s = abs(discriminant(kind, c, p)) ** 0.5 / c.kappa0
        assume(h_s > 1e-4)
        sp = spectral_decomposition(kind, c, p)
        H = build_hamiltonian(kind, c, p)
        np.testing.assert_allclose(sp.left @ sp.right.T, np.eye(2), atol=1e-10)
        for j in range(2):
            assert np.linalg.norm(sp.right[j]) == pytest.approx(1.0, abs=1e-14)
            res = np.linalg.norm(H @ sp.right[j] - sp.omega[j] * sp.right[j])
            assert res < 1e-10 * np.linalg.norm(H)
            # reciprocity: left is the transpose of right up to a scalar
            assert abs(sp.left[j][0] * sp.right[j][1] - sp.left[j][1] * sp.right[j][0]) < 1e-9 * sp.condition[j]


def test_self_orthogonal_at_ep(c):
    spectral_decomposition(P, c, ParamPoint(0.0, 0.0, 0.01))
    for p in (ParamPoint(0.0, 0.0, 0.0), ParamPoint(0.0, 0.0, 1e-12), ParamPoint(1e-17, 0.0, 0.0)):
        with pytest.raises(SelfOrthogonal):
            spectral_decomposition(P, c, p)
    with pytest.raises(SelfOrthogonal):
        spectral_decomposition(C, c, ChainParamPoint(0.0, 0.0, 0.0))


def test_rigidity_scales_as_sqrt_distance(c):
    d = np.array([1e-8, 1e-6, 1e-4])
    X = np.zeros((3, 3))
    X[:, 0] = d
    _, _, _, rig = spectral_many(P, c, X)
    slope = np.polyfit(np.log(d), np.log(rig[:, 0]), 1)[0]
    assert slope == pytest.approx(0.5, abs=0.01)


def test_axis_splitting(c):
    d = np.logspace(-6, -3, 13)
    gap = axis_splitting(c, "xi_r", d)
    slope = np.polyfit(np.log(d), np.log(np.abs(gap)), 1)[0]
    assert 0.49 <= slope <= 0.51
    z = np.array([0.01, 0.005, -0.003, 0.001])
    gz = axis_splitting(c, "zeta", z)
    assert np.all(np.abs(gz.real) < 1e-9 * np.abs(gz))
    ratio = np.abs(gz) / (2 * math.sqrt(2) * c.kappa0 * np.abs(z))
    assert np.all((ratio >= 0.99) & (ratio <= 1.01))
    gi = axis_splitting(c, "xi_i", [-1e-3, 1e-3])
    assert np.all(np.abs(gi.real) > 0)
    with pytest.raises(ValueError):
        axis_splitting(c, "omega", [0.1])


def test_zeta_from_position():
    assert zeta_from_position(0.0, 0.110) == 0.0
    assert zeta_from_position(0.3 / (2 * math.pi), 0.3) == pytest.approx(1.0, rel=1e-15)
    assert zeta_from_position(0.0175, 0.110) == pytest.approx(0.99960, abs=5e-6)
    with pytest.raises(ValueError):
        zeta_from_position(0.01, 0.0)


def test_validation():
    with pytest.raises(ValueError):
        ParamPoint(float("nan"), 0, 0)
    with pytest.raises(ValueError):
        ChainParamPoint(0, float("inf"), 0)
    with pytest.raises(ValueError):
        SystemConstants(kappa0=0)
    with pytest.raises(ValueError):
        SystemConstants(gamma0=-1)
    with pytest.raises(ValueError):
        ModelKind.parse("triangle")
    assert ModelKind.parse("Chain") is C
    assert ParamPoint(0.1, -0.2, 0.3).Xi == complex(0.1, -0.2)


def test_discriminant_many_matches_scalar(c, rng):
    X = rng.uniform(-1, 1, size=(50, 3))
    d = discriminant_many(P, c, X)
    for x, v in zip(X, d):
        assert v == discriminant(P, c, ParamPoint(*x))
