"""Least-squares retrieval of constants, loop parameters, onsite modes and eigenfunctions.

Parameter fits use only ``|P|`` (port amplitudes of a drive in cavity A).
Those amplitudes depend on the Hamiltonian through ``a = omega0 - i gamma0``,
``b = a - 2i kappa0 (1 + Xi)`` and ``kappa0**2 (1 - zeta**2)**2``, five real
numbers for six parameters, so ``kappa0`` cannot be separated from the point
coordinates at a single unknown point. It is therefore calibrated once at a
reference configuration with known coordinates and held fixed afterwards;
``omega0`` and ``gamma0`` may still be refit per point.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .. import kernels
from ..errors import BadInitialization, NotConverged, RankDeficient
from ..model import ModelKind, ParamPoint, SystemConstants, eigenvalues_many
from .synth import OnsiteMode

REFERENCE_POINT = ParamPoint(-1.0, 0.0, 0.0)
XTOL = 1e-9
# central differences: error ~ step**2, roundoff ~ eps/step
JAC_STEP = 1e-5
MAX_ITER = 200
MIN_FREQS = 12
RANK_COND = 1e10


def _amplitudes(omega0, gamma0, kappa0, xi_r, xi_i, zeta_sq, freqs):
    return kernels.spectrum_amplitude(
        float(omega0), float(gamma0), float(kappa0), float(xi_r), float(xi_i), float(zeta_sq), freqs
    )


def _central_jacobian(fun, steps):
    """Central-difference Jacobian with fixed per-parameter steps."""

    def jac(x):
        cols = []
        for i, h in enumerate(steps):
            e = np.zeros_like(x)
            e[i] = h
            cols.append((fun(x + e) - fun(x - e)) / (2 * h))
        return np.stack(cols, axis=1)

    return jac


def _lm(fun, x0, x_scale):
    n = len(x0)
    x_scale = np.asarray(x_scale, dtype=float)
    return least_squares(
        fun,
        x0,
        jac=_central_jacobian(fun, JAC_STEP * x_scale),
        method="lm",
        x_scale=x_scale,
        xtol=XTOL,
        ftol=1e-12,
        gtol=1e-12,
        max_nfev=MAX_ITER * (n + 1),
    )


def _check_data(freqs, data):
    freqs = np.asarray(freqs, dtype=float)
    amp = np.abs(np.asarray(data))
    if amp.ndim != 2 or amp.shape[0] < 2:
        raise ValueError("parameter fits need at least 2 ports")
    if freqs.size < MIN_FREQS or amp.shape[1] != freqs.size:
        raise ValueError(f"parameter fits need at least {MIN_FREQS} frequencies matching the data")
    return freqs, amp[:2]


def _relative_residual(model, amp):
    return float(np.linalg.norm(model - amp) / np.linalg.norm(amp))


def _half_width(freqs, s, i):
    """Half width at half maximum of ``s**2`` around index ``i`` (linear interpolation)."""
    level = s[i] / math.sqrt(2)
    lo = i
    while lo > 0 and s[lo] > level:
        lo -= 1
    hi = i
    while hi < len(s) - 1 and s[hi] > level:
        hi += 1

    def cross(a, b):
        if s[a] == s[b]:
            return freqs[a]
        return freqs[a] + (level - s[a]) * (freqs[b] - freqs[a]) / (s[b] - s[a])

    return 0.5 * (cross(i, hi) - cross(lo, i) if lo < i < hi else freqs[1] - freqs[0])


def peak_guess(freqs, data):
    """Initial ``(omega0, gamma0, kappa0)`` from the peaks of ``|P|``.

    Two resolved peaks give ``omega0`` (their mean) and ``kappa0`` (half their
    splitting); a single merged peak gives ``omega0`` at the maximum and
    ``kappa0 = gamma0 * |P_B| / |P_A|`` there, exact for the symmetric
    reference configuration. ``gamma0`` comes from the half width.
    """
    freqs, amp = _check_data(freqs, data)
    s = amp[0]
    interior = np.flatnonzero((s[1:-1] > s[:-2]) & (s[1:-1] >= s[2:])) + 1
    peaks = sorted(interior, key=lambda i: -s[i])[:2]
    if not peaks:
        peaks = [int(np.argmax(s))]
    i = peaks[0]
    gamma0 = max(_half_width(freqs, s, i), freqs[1] - freqs[0])
    if len(peaks) == 2:
        omega0 = 0.5 * (freqs[peaks[0]] + freqs[peaks[1]])
        kappa0 = 0.5 * abs(freqs[peaks[0]] - freqs[peaks[1]])
    else:
        omega0 = freqs[i]
        kappa0 = gamma0 * amp[1, i] / amp[0, i]
    return float(omega0), float(gamma0), float(max(kappa0, 1e-3 * gamma0))


@dataclass
class FitResult:
    """Outcome of one amplitude fit.

    Attributes
    ----------
    constants : SystemConstants
    point : ParamPoint
        ``zeta`` carries the supplied sign and ``sqrt(max(zeta_sq, 0))``.
    zeta_sq : float
        Fitted ``zeta**2`` (folded into ``[0, 1]`` when noise allows).
    eigenvalues : ndarray, shape (2,)
        Closed-form pair at the fitted parameters.
    residual : float
        ``||(|P_fit| - |P|)|| / |||P|||``.
    """

    constants: SystemConstants
    point: ParamPoint
    zeta_sq: float
    eigenvalues: np.ndarray
    residual: float
    converged: bool
    iterations: int
    nfev: int
    cost: float
    start: int = 0
    right: np.ndarray = None
    left: np.ndarray = None
    extra: dict = field(default_factory=dict)

    def to_json(self):
        d = {
            "omega0": self.constants.omega0,
            "gamma0": self.constants.gamma0,
            "kappa0": self.constants.kappa0,
            "xi_r": self.point.xi_r,
            "xi_i": self.point.xi_i,
            "zeta": self.point.zeta,
            "zeta_sq": self.zeta_sq,
            "eigenvalues": [[w.real, w.imag] for w in self.eigenvalues],
            "residual": self.residual,
            "converged": self.converged,
            "iterations": self.iterations,
            "nfev": self.nfev,
        }
        if self.right is not None:
            d["right"] = [[[v.real, v.imag] for v in r] for r in self.right]
            d["left"] = [[[v.real, v.imag] for v in r] for r in self.left]
        d.update(self.extra)
        return d


def calibrate_constants(freqs, data, reference=REFERENCE_POINT, initial=None):
    """Fit ``(omega0, gamma0, kappa0)`` to amplitudes taken at a known configuration.

    Parameters
    ----------
    freqs : (F,) array
    data : (2, F) array
        Port responses (complex or amplitudes) at ``reference``.
    initial : SystemConstants, optional
        Starting guess; defaults to :func:`peak_guess`.
    """
    freqs, amp = _check_data(freqs, data)
    guess = np.array(peak_guess(freqs, amp) if initial is None else (initial.omega0, initial.gamma0, initial.kappa0))
    scale = max(np.max(amp), 1e-300)
    p = reference
    # omega0 is fitted as an offset from its guess so the relative-step test
    # is not diluted by its large absolute value
    x0 = np.array([0.0, guess[1], guess[2]])

    def res(x):
        return ((_amplitudes(guess[0] + x[0], x[1], x[2], p.xi_r, p.xi_i, p.zeta ** 2, freqs) - amp) / scale).ravel()

    r0 = res(x0)
    if not np.all(np.isfinite(r0)):
        raise BadInitialization(f"non-finite residual at initial constants {guess}")
    r = _lm(res, x0, np.array([guess[2], guess[1], guess[2]]))
    if r.status <= 0 or not np.all(np.isfinite(r.x)):
        raise NotConverged(f"calibration fit did not converge: {r.message}")
    w0, g0, k0 = guess[0] + float(r.x[0]), abs(float(r.x[1])), abs(float(r.x[2]))
    c = SystemConstants(w0, g0, k0)
    model = _amplitudes(w0, g0, k0, p.xi_r, p.xi_i, p.zeta ** 2, freqs)
    return FitResult(
        constants=c,
        point=p,
        zeta_sq=p.zeta ** 2,
        eigenvalues=eigenvalues_many(ModelKind.PARABOLA, c, [p.as_tuple()])[0],
        residual=_relative_residual(model, amp),
        converged=True,
        iterations=int(math.ceil(r.nfev / 4)),
        nfev=int(r.nfev),
        cost=float(r.cost),
    )


def _fold_zeta_sq(z2):
    # amplitudes see zeta only through (1 - zeta**2)**2
    return 2.0 - z2 if z2 > 1.0 else z2


def fit_parameters(
    freqs,
    data,
    constants,
    initial=None,
    starts=(),
    refit_constants=True,
    zeta_sign=1.0,
    n_jitter=8,
    seed=0,
):
    """Fit a point's coordinates (and optionally ``omega0``, ``gamma0``) to ``|P|``.

    Parameters
    ----------
    freqs : (F,) array
    data : (2, F) array
        Port responses, complex or amplitudes.
    constants : SystemConstants
        Calibrated constants; ``kappa0`` is always held at this value, and
        ``omega0, gamma0`` start here (and stay here unless ``refit_constants``).
    initial : sequence of 3 floats, optional
        Starting ``(xi_r, xi_i, zeta_sq)``; default ``(0, 0, 0)``.
    starts : iterable of 3-sequences
        Further starting points; the lowest-cost converged fit wins.
    refit_constants : bool
        Fit ``(omega0, gamma0, xi_r, xi_i, zeta_sq)`` rather than only the point.
    zeta_sign : float
        Sign given to ``zeta`` (amplitudes fix only ``zeta**2``).
    n_jitter : int
        Randomized restarts tried when no start converges.

    Raises
    ------
    BadInitialization
        If the first start gives a non-finite residual.
    NotConverged
        If no start (including jittered ones) converges.
    """
    freqs, amp = _check_data(freqs, data)
    c = constants
    scale = max(np.max(amp), 1e-300)
    k0 = c.kappa0

    if refit_constants:
        # omega0 enters as an offset, see calibrate_constants
        def unpack(x):
            return c.omega0 + x[0], x[1], x[2], x[3], x[4]

        def pack(pt):
            return np.array([0.0, c.gamma0, *pt], dtype=float)

        x_scale = np.array([k0, max(c.gamma0, 1e-3 * k0), 1.0, 1.0, 1.0])
    else:
        def unpack(x):
            return c.omega0, c.gamma0, x[0], x[1], x[2]

        def pack(pt):
            return np.array(pt, dtype=float)

        x_scale = np.ones(3)

    def res(x):
        w0, g0, xr, xi, z2 = unpack(x)
        return ((_amplitudes(w0, g0, k0, xr, xi, z2, freqs) - amp) / scale).ravel()

    band = freqs[-1] - freqs[0]

    def plausible(x):
        # a resonance inside the measured band, no wider than the band
        w0, g0 = unpack(x)[:2]
        return freqs[0] <= w0 <= freqs[-1] and abs(g0) <= band

    first = (0.0, 0.0, 0.0) if initial is None else tuple(initial)
    cand = [pack(first)] + [pack(s) for s in starts]
    if not np.all(np.isfinite(res(cand[0]))):
        raise BadInitialization(f"non-finite residual at initial guess {first}")
    if refit_constants and not plausible(cand[0]):
        # supplied constants put the resonance off the data; start from the peaks
        w_pk, g_pk, _ = peak_guess(freqs, amp)
        for x in cand:
            x[0], x[1] = w_pk - c.omega0, g_pk

    def run(starts_list, offset):
        best = None
        for k, x0 in enumerate(starts_list):
            if not np.all(np.isfinite(res(x0))):
                continue
            r = _lm(res, x0, x_scale)
            if r.status <= 0 or not np.all(np.isfinite(r.x)) or not plausible(r.x):
                continue
            if best is None or r.cost < best[0].cost:
                best = (r, offset + k)
        return best

    best = run(cand, 0)
    if best is None and n_jitter > 0:
        rng = np.random.default_rng([int(seed), 99])
        pts = [first] + [
            (rng.uniform(-1.2, 0.3), rng.uniform(-0.6, 0.6), rng.uniform(0.0, 1.0)) for _ in range(int(n_jitter))
        ]
        jit = [pack(pt) for pt in pts]
        if refit_constants:
            # peak-derived omega0, gamma0 recover from constants far off the data
            w_pk, g_pk, _ = peak_guess(freqs, amp)
            for x in jit:
                x[0], x[1] = w_pk - c.omega0, g_pk
        else:
            jit = jit[1:]
        best = run(jit, len(cand))
    if best is None:
        raise NotConverged("amplitude fit did not converge from any start")
    r, k = best
    w0, g0, xr, xi, z2 = (float(v) for v in unpack(r.x))
    if g0 < 0:
        # |P| is unchanged by (a, b) -> (conj a, conj b), i.e. gamma0 -> -gamma0
        # with 1 + xi_r -> -(1 + xi_r); keep the passive image
        g0, xr = -g0, -2.0 - xr
    z2 = _fold_zeta_sq(z2)
    fitted = SystemConstants(w0, g0, k0)
    zeta = math.copysign(math.sqrt(max(z2, 0.0)), zeta_sign)
    point = ParamPoint(xr, xi, zeta)
    h = -(1.0 - z2)
    g = -1j * (1.0 + xr + 1j * xi)
    s = np.sqrt(h * h + g * g + 0j)
    ev = fitted.onsite + k0 * np.array([g + s, g - s])
    model = _amplitudes(w0, g0, k0, xr, xi, z2, freqs)
    n = len(r.x)
    return FitResult(
        constants=fitted,
        point=point,
        zeta_sq=z2,
        eigenvalues=ev,
        residual=_relative_residual(model, amp),
        converged=True,
        iterations=int(math.ceil(r.nfev / (n + 1))),
        nfev=int(r.nfev),
        cost=float(r.cost),
        start=k,
    )


@dataclass
class OnsiteFit:
    modes: OnsiteMode
    poles: np.ndarray
    residual: float


def _fit_single_pole(freqs, data, source):
    """Variable-projection fit ``P_k = c_k / (w - p)``; returns ``(p, c, residual)``."""
    data = np.asarray(data, dtype=complex)
    w = np.asarray(freqs, dtype=float)

    def coeffs(p):
        u = 1.0 / (w - p)
        return data @ np.conj(u) / np.vdot(u, u).real, u

    def res(x):
        cvec, u = coeffs(complex(x[0], x[1]))
        r = data - cvec[:, None] * u[None, :]
        return np.concatenate([r.real.ravel(), r.imag.ravel()])

    s = np.sqrt(np.sum(np.abs(data) ** 2, axis=0))
    i = int(np.argmax(s))
    hw = _half_width(w, s, i)
    x0 = np.array([w[i], -hw])
    r = _lm(res, x0, np.array([hw, hw]))
    if r.status <= 0 or not np.all(np.isfinite(r.x)):
        raise NotConverged(f"onsite pole fit did not converge: {r.message}")
    p = complex(r.x[0], r.x[1])
    cvec, u = coeffs(p)
    resid = float(np.linalg.norm(data - cvec[:, None] * u[None, :]) / np.linalg.norm(data))
    return p, cvec, resid


def _profile_from_residues(cvec, source):
    # c_k = phi_k * phi_s, so phi is proportional to c; fix the phase at the source port
    phi = cvec / np.linalg.norm(cvec)
    ph = phi[source]
    return phi * (abs(ph) / ph) if ph != 0 else phi


def fit_onsite_modes(freqs, data_a, data_b, geometry):
    """Recover both cavities' mode profiles (and onsite poles) from isolated-cavity data.

    ``data_a`` and ``data_b`` have shape ``(ports_per_cavity, F)``; each cavity
    is driven at its own ``geometry.source_port``.
    """
    for d in (data_a, data_b):
        d = np.asarray(d)
        if d.shape[0] != geometry.ports_per_cavity or d.shape[1] < MIN_FREQS:
            raise ValueError(
                f"onsite data must be {geometry.ports_per_cavity} ports x >= {MIN_FREQS} frequencies"
            )
    pa, ca, ra = _fit_single_pole(freqs, data_a, geometry.source_port)
    pb, cb, rb = _fit_single_pole(freqs, data_b, geometry.source_port)
    modes = OnsiteMode(
        _profile_from_residues(ca, geometry.source_port),
        _profile_from_residues(cb, geometry.source_port),
    )
    return OnsiteFit(modes, np.array([pa, pb]), max(ra, rb))


@dataclass
class EigenfunctionFit:
    """Right/left eigenvector coefficients retrieved from a field map.

    ``right[j]`` is the unit right vector of the state with pole ``poles[j]``;
    ``left`` is the inverse of the right-vector matrix, so biorthonormality
    holds exactly. ``reciprocity_error`` measures how far ``left[j]`` is from
    ``right[j] / (right[j] @ right[j])``, which holds for noiseless data.
    """

    right: np.ndarray
    left: np.ndarray
    residues: np.ndarray
    condition: float
    residual: float
    reciprocity_error: float


def fit_eigenfunctions(freqs, data, poles, modes, geometry, rng=None):
    """Linear least squares for the per-state, per-cavity residues of a field map.

    The model is ``P(z_k in c, w) = phi_c(z_k) * sum_j rho_jc / (w - w_j)`` with
    the poles ``w_j`` held fixed; ``rho_jc`` is proportional to the cavity-c
    coefficient of state ``j``.

    Parameters
    ----------
    data : (2n, F) complex array
        Cavity A ports then cavity B ports.
    poles : (2,) complex
    rng : numpy.random.Generator, optional
        When given, each state picks up a random overall phase, as in
        independent stationary excitations.

    Raises
    ------
    RankDeficient
        If a per-cavity design matrix has condition number above 1e10.
    """
    data = np.asarray(data, dtype=complex)
    w = np.asarray(freqs, dtype=float)
    poles = np.asarray(poles, dtype=complex)
    n = geometry.ports_per_cavity
    if data.shape != (2 * n, w.size):
        raise ValueError(f"field data must have shape {(2 * n, w.size)}")
    rho = np.zeros((2, 2), dtype=complex)
    cond = 0.0
    sq = 0.0
    for cav in range(2):
        phi = modes.profile(cav)
        X = (phi[:, None, None] / (w[None, :, None] - poles[None, None, :])).reshape(-1, 2)
        y = data[cav * n:(cav + 1) * n].reshape(-1)
        cn = np.linalg.cond(X)
        cond = max(cond, cn)
        if not cn <= RANK_COND:
            raise RankDeficient(f"eigenfunction design matrix condition {cn:.3e} exceeds {RANK_COND:g}")
        sol, *_ = np.linalg.lstsq(X, y, rcond=None)
        rho[:, cav] = sol
        sq += float(np.sum(np.abs(X @ sol - y) ** 2))
    right = rho / np.linalg.norm(rho, axis=1)[:, None]
    idx = np.argmax(np.abs(right), axis=1)
    piv = right[np.arange(2), idx]
    right = right * (np.abs(piv) / piv)[:, None]
    if rng is not None:
        right = right * np.exp(1j * rng.uniform(0, 2 * math.pi, 2))[:, None]
    Rm = right.T  # columns are right vectors
    if not np.linalg.cond(Rm) <= RANK_COND:
        raise RankDeficient("retrieved right eigenvectors are parallel")
    left = np.linalg.inv(Rm)
    recip = right / np.sum(right * right, axis=1)[:, None]
    rec_err = float(np.max(np.linalg.norm(left - recip, axis=1) / np.linalg.norm(left, axis=1)))
    residual = math.sqrt(sq) / float(np.linalg.norm(data))
    return EigenfunctionFit(right, left, rho, cond, residual, rec_err)
