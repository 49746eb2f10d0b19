import math

import numpy as np
import pytest

from epbtopo.errors import SelfOrthogonal
from epbtopo.model import ModelKind, ParamPoint, SystemConstants, build_hamiltonian, make_point, spectral_decomposition
from epbtopo.retrieval.synth import (
    N_FREQ,
    OnsiteMode,
    PortGeometry,
    ResponseDataset,
    add_noise,
    cosine_modes,
    frequency_grid,
    green_function,
    onsite_pole,
    synthesize_field_dataset,
    synthesize_onsite,
    synthesize_spectrum,
)

P = ModelKind.PARABOLA

# (omega I - H)^-1 by mpmath at 30 digits, drive in A: (G00, G10)
MPMATH_GREEN = [
    ((0.14, -0.28, 0), 19590, complex(-0.0024020807726798482153, -0.0098743290194701646715), complex(0.0024792921464454585768, -0.00054713036967106106122)),
    ((0.14, -0.28, 0), 19640.5, complex(0.0025441713912923218381, -0.009902758661306884103), complex(0.0021269059488729139558, 0.001234794886866606997)),
    ((-0.24, 0.49, 0.54), 19590, complex(-0.0023863981108583179141, -0.010605025837528826091), complex(0.0017345080249553723313, -0.0012996138242851162857)),
    ((-0.24, 0.49, 0.54), 19640.5, complex(0.0031358983932242071817, -0.010021221497005908836), complex(0.0022408796703575041973, 0.00039979961619450812082)),
    ((0, 0.36, -0.68), 19590, complex(-0.0027264522371271936486, -0.010818403912416252786), complex(0.0013022701836078423566, -0.00081172251570374418622)),
    ((0, 0.36, -0.68), 19640.5, complex(0.0033004268144063466907, -0.010414024678956970862), complex(0.0015213550070154638813, 0.00041421359798365971788)),
]


@pytest.mark.parametrize("x,w,g00,g10", MPMATH_GREEN)
def test_green_matches_mpmath(c, x, w, g00, g10):
    s = synthesize_spectrum(P, c, ParamPoint(*x), [w])
    assert abs(s[0, 0] - g00) <= 1e-12 * abs(g00)
    assert abs(s[1, 0] - g10) <= 1e-12 * abs(g00)


def test_resolvent_identity_random(c, rng):
    # 10^3 points x 10 frequencies = 10^4 samples per model
    for kind in (ModelKind.PARABOLA, ModelKind.CHAIN):
        X = rng.uniform(-1.5, 1.5, size=(1000, 3))
        worst = 0.0
        for x in X:
            p = make_point(kind, x)
            w = rng.uniform(c.omega0 - 300, c.omega0 + 300, 10)
            G = green_function(kind, c, p, w)
            H = build_hamiltonian(kind, c, p)
            A = w[:, None, None] * np.eye(2) - H[None]
            det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
            inv = np.empty_like(A)
            inv[:, 0, 0] = A[:, 1, 1] / det
            inv[:, 1, 1] = A[:, 0, 0] / det
            inv[:, 0, 1] = -A[:, 0, 1] / det
            inv[:, 1, 0] = -A[:, 1, 0] / det
            scale = np.max(np.abs(inv), axis=(1, 2))
            worst = max(worst, float(np.max(np.abs(G - inv) / scale[:, None, None])))
        assert worst < 1e-12


def test_spectrum_shape_and_ep(c):
    f = frequency_grid(c)
    assert f.size == N_FREQ and np.all(np.diff(f) > 0)
    assert synthesize_spectrum(P, c, ParamPoint(0.1, 0.2, 0.3), f).shape == (2, N_FREQ)
    with pytest.raises(SelfOrthogonal):
        synthesize_spectrum(P, c, ParamPoint(0, 0, 0), f)


def test_hermitian_limit_split(c):
    f = np.linspace(19100.0, 20100.0, 20001)
    s = synthesize_spectrum(P, c, ParamPoint(-1, 0, 0), f)
    # |P_A| shows two peaks placed symmetrically about omega0
    a = np.abs(s[0])
    pk = f[np.flatnonzero((a[1:-1] > a[:-2]) & (a[1:-1] > a[2:])) + 1]
    assert len(pk) == 2
    assert pk[0] + pk[1] == pytest.approx(2 * c.omega0, abs=0.1)
    # overlapping lines pull the |P_A| maxima inward; the symmetric and
    # antisymmetric channels peak exactly at omega0 -+ kappa0
    for chan, w0 in ((s[0] + s[1], c.omega0 - c.kappa0), (s[0] - s[1], c.omega0 + c.kappa0)):
        assert f[np.argmax(np.abs(chan))] == pytest.approx(w0, abs=0.05)
        np.testing.assert_allclose(chan, 1.0 / (f - (w0 - 1j * c.gamma0)), rtol=1e-12)


def test_onsite_lorentzian(c):
    g = PortGeometry()
    m = cosine_modes(g)
    f = np.linspace(c.omega0 - 500, c.omega0 + 500, 100001)
    p = ParamPoint(-0.3, 0.2, 0.4)
    r = synthesize_onsite(P, c, p, m, g, f, 0)
    src = m.profile_a[g.source_port]
    np.testing.assert_allclose(r, (m.profile_a * src)[:, None] / (f - (c.omega0 - 1j * c.gamma0))[None], rtol=1e-14)
    amp = np.abs(r[g.source_port])
    assert f[np.argmax(amp)] == pytest.approx(c.omega0, abs=0.01)
    half = f[amp ** 2 >= 0.5 * amp.max() ** 2]
    assert 0.5 * (half[-1] - half[0]) == pytest.approx(c.gamma0, abs=0.02)
    # cavity B: pole omega0 - i gamma0 + 2 kappa0 g
    pb = onsite_pole(P, c, p, 1)
    assert pb == pytest.approx(c.onsite - 2j * c.kappa0 * (1 + complex(p.xi_r, p.xi_i)), abs=1e-9)


def test_field_dataset_matches_two_site_response(c):
    g = PortGeometry()
    m = cosine_modes(g)
    f = frequency_grid(c)
    p = ParamPoint(-0.24, 0.49, 0.54)
    fd = synthesize_field_dataset(P, c, p, m, g, f)
    two = synthesize_spectrum(P, c, p, f)
    n = g.ports_per_cavity
    assert fd.shape == (2 * n, f.size)
    src = m.profile_a[g.source_port]
    for cav in range(2):
        blk = fd[cav * n : (cav + 1) * n]
        phi = m.profile(cav)
        # port sum over the mode profile projects back onto the site amplitude
        proj = (phi.conj()[:, None] * blk).sum(axis=0) / src
        np.testing.assert_allclose(proj, two[cav], rtol=1e-12)


def _residues(resp, f, poles):
    A = 1.0 / (f[:, None] - np.asarray(poles)[None, :])
    coef, *_ = np.linalg.lstsq(A, resp.T, rcond=None)
    return coef  # (state, port)


def test_field_dataset_symmetry_hermitian_limit(c):
    g = PortGeometry()
    m = cosine_modes(g)
    f = frequency_grid(c)
    p = ParamPoint(-1, 0, 0)
    sp = spectral_decomposition(P, c, p)
    res = _residues(synthesize_field_dataset(P, c, p, m, g, f), f, sp.omega)
    n = g.ports_per_cavity
    for j, w in enumerate(sp.omega):
        a, b = res[j, :n], res[j, n:]
        sign = 1 if abs(w - (c.omega0 - c.kappa0 - 1j * c.gamma0)) < 1e-9 else -1
        np.testing.assert_allclose(a, sign * b, rtol=0, atol=1e-12 * np.max(np.abs(a)))
        assert np.max(np.abs(a)) > 0


def test_geometry():
    g = PortGeometry()
    z = g.positions
    assert len(z) == 7 and np.all(np.diff(z) > 0)
    assert np.all(np.abs(z) < g.height / 2)
    np.testing.assert_allclose(z, -z[::-1], atol=1e-17)
    assert g.port_ids() == [f"A{k}" for k in range(7)] + [f"B{k}" for k in range(7)]
    m = cosine_modes(g)
    assert np.linalg.norm(m.profile_a) == pytest.approx(1.0, abs=1e-15)
    for bad in (dict(ports_per_cavity=0), dict(height=0.0), dict(source_port=7)):
        with pytest.raises(ValueError):
            PortGeometry(**bad)
    with pytest.raises(ValueError):
        OnsiteMode(np.zeros(7), np.ones(7))


def _flat_dataset(n_points=1, n_ports=2, n_freq=5000):
    f = np.linspace(1.0, 2.0, n_freq)
    r = np.ones((n_points, n_ports, n_freq), dtype=complex)
    return ResponseDataset(f, r, [f"p{k}" for k in range(n_ports)], np.arange(n_points))


def test_noise_statistics():
    ds = _flat_dataset()
    noisy = add_noise(ds, 0.05, 11)
    rms = np.sqrt(np.mean(np.abs(noisy.responses - ds.responses) ** 2))
    assert 0.045 <= rms <= 0.055
    assert noisy.eta == 0.05 and noisy.seed == 11


def test_noise_zero_and_determinism():
    ds = _flat_dataset(3, 2, 40)
    z = add_noise(ds, 0.0, 5)
    np.testing.assert_array_equal(z.responses, ds.responses)
    assert z.responses is not ds.responses
    a = add_noise(ds, 0.05, 5)
    b = add_noise(ds, 0.05, 5)
    assert a.responses.tobytes() == b.responses.tobytes()
    assert not np.array_equal(add_noise(ds, 0.05, 6).responses, a.responses)
    assert not np.array_equal(add_noise(ds, 0.05, 5, stream=1).responses, a.responses)
    with pytest.raises(ValueError):
        add_noise(ds, -0.1, 5)


def test_noise_subset_independent():
    ds = _flat_dataset(5, 2, 40)
    full = add_noise(ds, 0.05, 9)
    sub = ResponseDataset(ds.freqs, ds.responses[[3, 1]], ds.port_ids, [3, 1])
    part = add_noise(sub, 0.05, 9)
    np.testing.assert_array_equal(part.responses, full.responses[[3, 1]])


def test_noise_scales_per_spectrum():
    ds = _flat_dataset(1, 2, 5000)
    ds.responses[0, 1] *= 100.0
    noisy = add_noise(ds, 0.05, 3)
    d = noisy.responses - ds.responses
    r0 = np.sqrt(np.mean(np.abs(d[0, 0]) ** 2))
    r1 = np.sqrt(np.mean(np.abs(d[0, 1]) ** 2)) / 100.0
    assert r0 == pytest.approx(0.05, rel=0.05) and r1 == pytest.approx(0.05, rel=0.05)


def test_dataset_validation():
    f = np.linspace(0, 1, 4)
    r = np.zeros((1, 2, 4), dtype=complex)
    ResponseDataset(f, r, ["a", "b"], [0])
    assert len(ResponseDataset(f, r[0], ["a", "b"], [0])) == 1
    with pytest.raises(ValueError, match="increasing"):
        ResponseDataset(f[::-1], r, ["a", "b"], [0])
    with pytest.raises(ValueError, match="shape"):
        ResponseDataset(f, r, ["a"], [0])
    bad = r.copy()
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError, match="finite"):
        ResponseDataset(f, bad, ["a", "b"], [0])


def test_frequency_grid_span(c):
    f = frequency_grid(c)
    span = 4 * c.kappa0 + 3 * c.gamma0
    assert f[0] == pytest.approx(c.omega0 - span) and f[-1] == pytest.approx(c.omega0 + span)
    assert math.isclose(f[N_FREQ // 2], c.omega0)
