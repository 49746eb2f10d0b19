"""Green's-function response synthesis and measurement noise.

Responses are those of a drive in cavity A. In the two-site picture the
source is ``|s> = (1, 0)`` and the ports read ``<m| = (1, 0)`` or ``(0, 1)``;
in the field picture each cavity carries an onsite mode profile sampled at
``ports_per_cavity`` positions and the drive sits at port ``source_port`` of
cavity A.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..model import ModelKind, SystemConstants, reduced_couplings, spectral_decomposition

DEFAULT_HEIGHT = 0.110  # m
N_FREQ = 31


@dataclass(frozen=True)
class PortGeometry:
    """Measurement ports along the cavity axis.

    Ports sit at ``z_k = h*(k - (n-1)/2)/n``, i.e. ``h*(k - 3)/7`` for the
    default seven ports, symmetric about the mirror plane ``z = 0``.
    """

    ports_per_cavity: int = 7
    height: float = DEFAULT_HEIGHT
    source_port: int = 3

    def __post_init__(self):
        if self.ports_per_cavity < 1:
            raise ValueError("ports_per_cavity must be positive")
        if not self.height > 0:
            raise ValueError("height must be > 0")
        if not 0 <= self.source_port < self.ports_per_cavity:
            raise ValueError("source_port out of range")

    @property
    def positions(self):
        n = self.ports_per_cavity
        return self.height * (np.arange(n) - (n - 1) / 2) / n

    def port_ids(self):
        n = self.ports_per_cavity
        return [f"A{k}" for k in range(n)] + [f"B{k}" for k in range(n)]


@dataclass(frozen=True)
class OnsiteMode:
    """Unit-norm onsite mode profiles of the two cavities, sampled at the ports."""

    profile_a: np.ndarray
    profile_b: np.ndarray

    def __post_init__(self):
        for name in ("profile_a", "profile_b"):
            v = np.asarray(getattr(self, name), dtype=complex)
            nrm = np.linalg.norm(v)
            if not nrm > 0:
                raise ValueError(f"{name} must be nonzero")
            object.__setattr__(self, name, v / nrm)

    def profile(self, cavity):
        return self.profile_a if cavity == 0 else self.profile_b


def cosine_modes(geometry=None):
    """Second-order cavity modes ``cos(2*pi*z/h)`` at the port positions."""
    g = geometry or PortGeometry()
    prof = np.cos(2 * math.pi * g.positions / g.height)
    return OnsiteMode(prof, prof.copy())


def frequency_grid(c, n=N_FREQ):
    """``n`` equally spaced drive frequencies over ``omega0 +/- (4 kappa0 + 3 gamma0)``."""
    span = 4 * c.kappa0 + 3 * c.gamma0
    return np.linspace(c.omega0 - span, c.omega0 + span, int(n))


@dataclass
class ResponseDataset:
    """Complex responses ``responses[point, port, freq]``.

    ``meta`` carries free-form metadata (loop name, constants, geometry);
    ``eta`` and ``seed`` record the noise applied (``eta = 0`` for clean data).
    """

    freqs: np.ndarray
    responses: np.ndarray
    port_ids: list
    point_index: np.ndarray
    eta: float = 0.0
    seed: int = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=float)
        self.responses = np.asarray(self.responses, dtype=complex)
        if self.responses.ndim == 2:
            self.responses = self.responses[None]
        self.point_index = np.asarray(self.point_index, dtype=int).reshape(-1)
        self.port_ids = [str(p) for p in self.port_ids]
        P, M, F = self.responses.shape
        if np.any(np.diff(self.freqs) <= 0):
            raise ValueError("frequency grid must be strictly increasing")
        if F != self.freqs.size or M != len(self.port_ids) or P != self.point_index.size:
            raise ValueError(
                f"responses shape {self.responses.shape} does not match "
                f"{self.point_index.size} points x {len(self.port_ids)} ports x {self.freqs.size} freqs"
            )
        if not np.all(np.isfinite(self.responses)):
            raise ValueError("responses must be finite")

    def __len__(self):
        return self.responses.shape[0]


def green_function(kind, c, p, freqs):
    """Spectral-sum Green's function ``sum_j R_j L_j / (w - w_j)``, shape ``(F, 2, 2)``."""
    sp = spectral_decomposition(kind, c, p)
    # detuning from the onsite frequency first, then from each pole
    dw = np.asarray(freqs, dtype=float) - c.onsite
    G = np.zeros((dw.size, 2, 2), dtype=complex)
    for j in range(2):
        G += np.outer(sp.right[j], sp.left[j])[None] / (dw - sp.shift[j])[:, None, None]
    return G


def synthesize_spectrum(kind, c, p, freqs):
    """Two-port response ``<m|G|s>`` for ``m`` in (A, B), drive in A; shape ``(2, F)``."""
    return green_function(kind, c, p, freqs)[:, :, 0].T.copy()


def synthesize_field_dataset(kind, c, p, modes, geometry, freqs):
    """Response at all ``2 * ports_per_cavity`` ports, shape ``(2n, F)``.

    ``P(z_k in cavity c) = sum_j a_jc phi_c(z_k) * b_jA phi_A(z_s) / (w - w_j)``
    with ``a`` (``b``) the right (left) eigenvector coefficients.
    """
    sp = spectral_decomposition(kind, c, p)
    dw = np.asarray(freqs, dtype=float) - c.onsite
    src = modes.profile_a[geometry.source_port]
    out = []
    for cav in range(2):
        phi = modes.profile(cav)
        res = sp.right[:, cav] * sp.left[:, 0] * src  # one residue per state
        spec = (res[None, :] / (dw[:, None] - sp.shift[None, :])).sum(axis=1)
        out.append(phi[:, None] * spec[None, :])
    return np.concatenate(out, axis=0)


def onsite_pole(kind, c, p, cavity):
    """Resonance of one cavity with its partner detuned away (hopping off)."""
    if cavity == 0:
        return c.onsite
    _, g = reduced_couplings(kind, [p.as_tuple()])
    return c.onsite + 2.0 * c.kappa0 * complex(g[0])


def synthesize_onsite(kind, c, p, modes, geometry, freqs, cavity):
    """Single isolated cavity driven at its own source port, shape ``(n, F)``."""
    phi = modes.profile(cavity)
    pole = onsite_pole(kind, c, p, cavity)
    w = np.asarray(freqs, dtype=float)
    return (phi * phi[geometry.source_port])[:, None] / (w - pole)[None, :]


def add_noise(dataset, eta, seed, stream=0):
    """Additive complex Gaussian noise, ``E|n|**2 = (eta * max|P|)**2`` per spectrum.

    Each (point, port) spectrum draws from its own generator seeded with
    ``(seed, stream, point_index, port)``, so any subset or ordering of the
    work gives identical numbers.
    """
    if eta < 0:
        raise ValueError("eta must be >= 0")
    if eta == 0:
        return replace(dataset, responses=dataset.responses.copy(), eta=0.0, seed=seed)
    out = dataset.responses.copy()
    P, M, F = out.shape
    for i in range(P):
        for m in range(M):
            rng = np.random.default_rng([int(seed), int(stream), int(dataset.point_index[i]), m])
            sigma = eta * np.max(np.abs(out[i, m])) / math.sqrt(2)
            out[i, m] += sigma * (rng.standard_normal(F) + 1j * rng.standard_normal(F))
    return replace(dataset, responses=out, eta=float(eta), seed=int(seed))
