"""Two-state non-Hermitian Hamiltonians with an exceptional parabola.

Both models share the form ``H = (omega0 - i*gamma0) I + kappa0 * [[0, h], [h, 2g]]``
with reduced couplings

* parabola, point ``(xi_r, xi_i, zeta)``: ``h = -(1 - zeta**2)``, ``g = -i(1 + xi_r + i*xi_i)``
* chain, point ``(xi, zeta_r, zeta_i)``: ``h = -1 + (zeta_r + i*zeta_i)**2``, ``g = -i(1 + xi)``

so everything spectral follows from ``s = sqrt(h**2 + g**2)``:
``omega_pm = e + kappa0*(g +/- s)`` and the discriminant ``4*kappa0**2*s**2``.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import SelfOrthogonal

SELF_ORTHOGONAL_TOL = 1e-10


class ModelKind(str, enum.Enum):
    PARABOLA = "parabola"
    CHAIN = "chain"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown model kind {value!r}; expected 'parabola' or 'chain'") from None


@dataclass(frozen=True)
class SystemConstants:
    """Resonance frequency, onsite loss and maximal hopping, all in rad/s."""

    omega0: float = 19613.0
    gamma0: float = 83.5
    kappa0: float = 48.5

    def __post_init__(self):
        for name in ("omega0", "gamma0", "kappa0"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.omega0 <= 0:
            raise ValueError("omega0 must be > 0")
        if self.gamma0 < 0:
            raise ValueError("gamma0 must be >= 0")
        if self.kappa0 <= 0:
            raise ValueError("kappa0 must be > 0")

    @property
    def onsite(self):
        return complex(self.omega0, -self.gamma0)


def _check_finite(obj):
    for k, v in vars(obj).items():
        if not math.isfinite(v):
            raise ValueError(f"{k} must be finite, got {v}")


@dataclass(frozen=True)
class ParamPoint:
    """Parabola-model point; ``Xi = xi_r + i*xi_i`` is derived on demand."""

    xi_r: float
    xi_i: float
    zeta: float

    def __post_init__(self):
        _check_finite(self)

    @property
    def Xi(self):
        return complex(self.xi_r, self.xi_i)

    def as_tuple(self):
        return (self.xi_r, self.xi_i, self.zeta)


@dataclass(frozen=True)
class ChainParamPoint:
    """Chain-model point with complex hopping coordinate ``zeta_r + i*zeta_i``."""

    xi: float
    zeta_r: float
    zeta_i: float

    def __post_init__(self):
        _check_finite(self)

    def as_tuple(self):
        return (self.xi, self.zeta_r, self.zeta_i)


POINT_TYPES = {ModelKind.PARABOLA: ParamPoint, ModelKind.CHAIN: ChainParamPoint}
COORD_NAMES = {
    ModelKind.PARABOLA: ("xi_r", "xi_i", "zeta"),
    ModelKind.CHAIN: ("xi", "zeta_r", "zeta_i"),
}


def make_point(kind, coords):
    kind = ModelKind.parse(kind)
    return POINT_TYPES[kind](*(float(x) for x in coords))


def _check_point(kind, p):
    kind = ModelKind.parse(kind)
    if not isinstance(p, POINT_TYPES[kind]):
        raise TypeError(f"{kind.value} model needs a {POINT_TYPES[kind].__name__}, got {type(p).__name__}")
    return kind


@dataclass(frozen=True)
class SpectralPair:
    """Eigenvalues with biorthonormal right/left eigenvectors.

    ``right[j]`` and ``left[j]`` are the vectors of state ``j``; ``left[j] @ right[k]``
    is the biorthogonal overlap. ``condition[j] = 1/|right[j] @ right[j]|``.
    ``shift = omega - onsite`` is kept separately because ``omega`` itself
    is rounded at the scale of ``omega0``.
    """

    omega: np.ndarray
    right: np.ndarray
    left: np.ndarray
    condition: np.ndarray
    shift: np.ndarray = None


def reduced_couplings(kind, coords):
    """Reduced couplings ``(h, g)`` for an ``(n, 3)`` array of raw coordinates."""
    kind = ModelKind.parse(kind)
    x = np.atleast_2d(np.asarray(coords, dtype=float))
    if kind is ModelKind.PARABOLA:
        h = -(1.0 - x[:, 2] ** 2) + 0j
        g = -1j * (1.0 + x[:, 0] + 1j * x[:, 1])
    else:
        z = x[:, 1] + 1j * x[:, 2]
        h = -1.0 + z * z
        g = -1j * (1.0 + x[:, 0]) + 0j
    return h, g


def build_hamiltonian(kind, c, p):
    """2x2 complex Hamiltonian at point ``p`` (exactly symmetric)."""
    kind = _check_point(kind, p)
    h, g = reduced_couplings(kind, [p.as_tuple()])
    off = c.kappa0 * h[0]
    H = np.empty((2, 2), dtype=complex)
    H[0, 0] = c.onsite
    H[0, 1] = off
    H[1, 0] = off
    H[1, 1] = c.onsite + 2.0 * c.kappa0 * g[0]
    return H


def eigenvalues_many(kind, c, coords):
    """Eigenvalues ``(n, 2)`` in (+, -) principal-branch order."""
    h, g = reduced_couplings(kind, coords)
    s = np.sqrt(h * h + g * g)
    return c.onsite + c.kappa0 * np.stack([g + s, g - s], axis=-1)


def eigenvalues(kind, c, p, normalize=False):
    """Closed-form eigenvalue pair ``(omega_plus, omega_minus)``.

    Parameters
    ----------
    kind : ModelKind or str
    c : SystemConstants
    p : ParamPoint or ChainParamPoint
    normalize : bool, optional
        Divide by ``omega0``.
    """
    kind = _check_point(kind, p)
    w = eigenvalues_many(kind, c, [p.as_tuple()])[0]
    if normalize:
        w = w / c.omega0
    return complex(w[0]), complex(w[1])


def discriminant_many(kind, c, coords):
    """``(tr H)**2 - 4 det H`` for each row of ``coords``.

    Evaluated as ``4 kappa0**2 (h**2 + g**2)``, which avoids the cancellation
    of forming the trace and determinant at ``omega0 >> kappa0``.
    """
    h, g = reduced_couplings(kind, coords)
    return 4.0 * c.kappa0 ** 2 * (h * h + g * g)


def discriminant(kind, c, p):
    kind = _check_point(kind, p)
    return complex(discriminant_many(kind, c, [p.as_tuple()])[0])


def spectral_many(kind, c, coords):
    """Vectorized spectral data without the self-orthogonality check.

    Returns
    -------
    omega : (n, 2) complex
    right : (n, 2, 2) complex
        ``right[l, j]`` is the unit right vector of state ``j``.
    left : (n, 2, 2) complex
        ``right[l, j] / (right[l, j] @ right[l, j])``, so ``left @ right = 1``.
    rigidity : (n, 2) float
        ``|right @ right|`` before rescaling; vanishes at an EP.
    """
    h, g = reduced_couplings(kind, coords)
    mu, right, rigidity = kernels.eig2(h, g)
    omega = c.onsite + c.kappa0 * mu
    with np.errstate(divide="ignore", invalid="ignore"):
        left = right / np.sum(right * right, axis=-1)[..., None]
    return omega, right, left, rigidity


def spectral_decomposition(kind, c, p):
    """Eigenvalues and biorthonormal eigenvectors at ``p``.

    Raises
    ------
    SelfOrthogonal
        If ``|R^T R| < 1e-10`` for a unit right vector, i.e. ``p`` sits on
        (or numerically at) the EP locus.
    """
    kind = _check_point(kind, p)
    omega, right, left, rig = spectral_many(kind, c, [p.as_tuple()])
    h, g = reduced_couplings(kind, [p.as_tuple()])
    shift = c.kappa0 * kernels.eig2(h, g)[0][0]
    if np.min(rig[0]) < SELF_ORTHOGONAL_TOL:
        raise SelfOrthogonal(
            f"|R^T R| = {np.min(rig[0]):.3e} < {SELF_ORTHOGONAL_TOL:g} at {p}: point is at an exceptional point"
        )
    return SpectralPair(omega=omega[0], right=right[0], left=left[0], condition=1.0 / rig[0], shift=shift)


def ep_locus_parabola(zeta):
    """``xi_r`` of the two exact EP branches at ``xi_i = 0``.

    ``h**2 + g**2 = 0`` reduces to ``(1 + xi_r)**2 = (1 - zeta**2)**2``. Branch 1
    is the parabola with vertex at the origin, branch 2 its mirror about
    ``xi_r = -1``; they cross at ``zeta = +/-1``.
    """
    z2 = float(zeta) ** 2
    return -z2, z2 - 2.0


_AXES = {"xi_r": 0, "xi_i": 1, "zeta": 2}


def axis_splitting(c, axis, deltas):
    """Gap ``omega_plus - omega_minus`` along one axis through the vertex EP."""
    if axis not in _AXES:
        raise ValueError(f"axis must be one of {sorted(_AXES)}, got {axis!r}")
    d = np.asarray(deltas, dtype=float)
    coords = np.zeros((d.size, 3))
    coords[:, _AXES[axis]] = d.ravel()
    w = eigenvalues_many(ModelKind.PARABOLA, c, coords)
    return (w[:, 0] - w[:, 1]).reshape(d.shape)


def zeta_from_position(z, h):
    """Hopping coordinate ``2*pi*z/h`` of a coupling hole at signed height ``z``."""
    if not h > 0:
        raise ValueError("h must be > 0")
    return 2.0 * math.pi * z / h
