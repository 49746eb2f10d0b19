"""Loop invariants: vorticities, discriminant number, Berry phases, discriminant fields.

State labels ``j = 0, 1`` follow the model's ``(+, -)`` branch order at the
first loop point and are carried along by maximal biorthogonal overlap.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (
    AssociationAmbiguous,
    NotQuantized,
    SelfOrthogonal,
    SingularOverlapMatrix,
    ZeroOverlap,
)
from .model import COORD_NAMES, ModelKind, SELF_ORTHOGONAL_TOL, SystemConstants, discriminant_many, spectral_many
from .paths import SampledLoop, refine_adaptive

ASSOCIATION_THRESHOLD = 0.5
ASSOCIATION_MAX_RATIO = 0.5
DN_TOL = 1e-3
BERRY_TOL = 1e-3 * math.pi
OVERLAP_FLOOR = 1e-12
FIELD_STEP = 1e-6


def wrap_phase(x):
    """Map angles into (-pi, pi]."""
    x = np.asarray(x, dtype=float)
    y = -((-x + math.pi) % (2 * math.pi) - math.pi)
    return float(y) if y.ndim == 0 else y


def phase_distance(a, b):
    """Distance between two angles on the circle."""
    return abs(wrap_phase(a - b))


@dataclass
class EigenTrace:
    """Continuity-labelled spectral data along a closed loop.

    Attributes
    ----------
    loop : SampledLoop
    omega : ndarray, shape (n, 2)
        ``omega[l, j]`` is the eigenvalue of state ``j`` at point ``l``.
    right, left : ndarray, shape (n, 2, 2)
        Labelled right/left vectors, ``left[l, j] @ right[l, j] = 1``.
    labels : ndarray, shape (n + 1, 2)
        Raw input index carrying label ``j`` at each point; row ``n`` is the
        return to point 0.
    min_overlap : float
        Smallest association overlap met along the loop.
    max_ratio : float
        Largest competing/chosen overlap-product ratio along the loop.
    """

    loop: SampledLoop
    omega: np.ndarray
    right: np.ndarray
    left: np.ndarray
    labels: np.ndarray
    min_overlap: float
    max_ratio: float = 0.0

    def __len__(self):
        return self.omega.shape[0]

    @property
    def closing_perm(self):
        """``closing_perm[j]``: start label of the state that label ``j`` returns to."""
        return tuple(int(k) for k in self.labels[-1])


def assemble_trace(loop, omega, right, left, threshold=ASSOCIATION_THRESHOLD, max_ratio=ASSOCIATION_MAX_RATIO):
    """Associate states along the loop from any source of per-point spectra.

    ``omega``, ``right`` and ``left`` are raw per-point data (shapes ``(n, 2)``,
    ``(n, 2, 2)``, ``(n, 2, 2)``); state ``k`` at point ``l+1`` inherits the
    label of the state at ``l`` it overlaps most with.

    Raises
    ------
    AssociationAmbiguous
        If a chosen overlap ``|<L_j(l)|R_k(l+1)>|`` is ``<= threshold``, or the
        competing assignment's overlap product is at least ``max_ratio`` times
        the chosen one. Near an EP the left vectors grow large and both
        assignments overlap strongly, which only the second test detects.
    """
    omega = np.asarray(omega, dtype=complex)
    right = np.ascontiguousarray(right, dtype=complex)
    left = np.ascontiguousarray(left, dtype=complex)
    labels, min_ov, worst, bad = kernels.associate(left, right, threshold, max_ratio)
    if bad >= 0:
        raise AssociationAmbiguous(
            f"state association is not decisive at step {bad} of {len(omega)} "
            f"(min overlap {min_ov:.3g}, competing/chosen ratio {worst:.3g}); refine the loop"
        )
    idx = labels[:-1]
    rows = np.arange(len(omega))[:, None]
    return EigenTrace(
        loop=loop,
        omega=omega[rows, idx],
        right=right[rows, idx],
        left=left[rows, idx],
        labels=labels,
        min_overlap=min_ov,
        max_ratio=worst,
    )


def trace_eigensystem(loop, c=None, threshold=ASSOCIATION_THRESHOLD, max_ratio=ASSOCIATION_MAX_RATIO):
    """Closed-form spectra along ``loop`` with continuity labels."""
    c = c or SystemConstants()
    omega, right, left, rig = spectral_many(loop.kind, c, loop.coords)
    if np.min(rig) < SELF_ORTHOGONAL_TOL:
        l = int(np.argmin(np.min(rig, axis=1)))
        raise SelfOrthogonal(f"loop point {l} {tuple(loop.coords[l])} is at an exceptional point")
    return assemble_trace(loop, omega, right, left, threshold, max_ratio)


@dataclass
class VorticityResult:
    v: dict
    dn: float
    quantization_error: float

    @property
    def dn_int(self):
        return int(round(self.dn))


def _gap_sequence(trace, j, jp):
    w = trace.omega
    d = w[:, j] - w[:, jp]
    p = trace.closing_perm
    closing = w[0, p[j]] - w[0, p[jp]]
    return np.append(d, closing)


def vorticity(trace, j, jp):
    """Eigenvalue vorticity ``-(1/2pi) sum Im ln[dw(l+1)/dw(l)]`` of the gap ``omega_j - omega_jp``."""
    if j == jp:
        raise ValueError("vorticity needs two distinct states")
    d = _gap_sequence(trace, j, jp)
    return -float(np.sum(np.angle(d[1:] / d[:-1]))) / (2 * math.pi)


def discriminant_number(trace, tol=DN_TOL):
    """Sum of both vorticities.

    Raises
    ------
    NotQuantized
        If the sum is farther than ``tol`` from an integer.
    """
    v = {(0, 1): vorticity(trace, 0, 1), (1, 0): vorticity(trace, 1, 0)}
    dn = v[(0, 1)] + v[(1, 0)]
    qe = abs(dn - float(np.rint(dn)))
    if not qe <= tol:
        raise NotQuantized(f"discriminant number {dn:.6f} is not quantized (error {qe:.2e} > {tol:g})")
    return VorticityResult(v=v, dn=dn, quantization_error=qe)


class GapKind(str, enum.Enum):
    POINT = "point"
    LINE = "line"


def gap_classify(trace_or_result):
    """Point gap iff the discriminant number is nonzero."""
    r = trace_or_result
    if isinstance(r, EigenTrace):
        r = discriminant_number(r)
    return GapKind.POINT if r.dn_int != 0 else GapKind.LINE


def permutation_after_cycle(trace):
    """One-cycle state permutation and its order ``N``."""
    p = trace.closing_perm
    n, q = 1, p
    while q != tuple(range(len(p))):
        q = tuple(p[k] for k in q)
        n += 1
    return p, n


def gauge_fix(left, right, floor=OVERLAP_FLOOR):
    """Parallel-transport gauge of one state sequence.

    Parameters
    ----------
    left, right : array_like, shape (m, 2)
        Biorthonormal left/right vectors of one state at consecutive points.

    Returns
    -------
    left_fixed, right_fixed : ndarray
        First pair untouched; every later pair rotated by ``exp(-+i beta)`` so
        that each consecutive overlap ``left_fixed[l] @ right_fixed[l+1]`` is
        real positive.

    Raises
    ------
    ZeroOverlap
    """
    lf, rf, bad = kernels.gauge_fix(left, right, floor)
    if bad >= 0:
        raise ZeroOverlap(f"overlap between steps {bad} and {bad + 1} is below {floor:g}")
    return lf, rf


@dataclass
class BerryResult:
    """Berry phase of one state over ``cycles`` loop traversals.

    ``theta`` is defined modulo 2*pi and reported as the representative
    nearest its quantized multiple of pi, the class of +-pi being written as
    -pi (so ``-pi + 1e-5`` and ``pi - 1e-5`` both come out near ``-pi``).
    ``trace`` holds the running partial sum of ``-Im ln <L_l|R_l+1>`` over the
    gauge-fixed states (one entry per step, ``cycles * L`` entries) and ends
    at ``theta``.
    """

    theta: float
    cycles: int
    trace: np.ndarray
    permutation: tuple
    state: int = 0

    @property
    def quantized_pi(self):
        """``theta / pi`` rounded, with the class of +-pi reported as -1."""
        return quantize_pi(self.theta)

    @property
    def quantization_error(self):
        return phase_distance(self.theta, self.quantized_pi * math.pi)


def quantize_pi(theta):
    """Nearest multiple of pi modulo 2*pi: 0 or -1 (the class of +-pi)."""
    k = int(round(wrap_phase(theta) / math.pi))
    return -1 if k in (1, -1) else k


def berry_representative(theta):
    """``theta`` mod 2*pi, as the value nearest ``quantize_pi(theta) * pi``."""
    k = quantize_pi(theta)
    return k * math.pi + wrap_phase(theta - k * math.pi)


def _state_sequence(trace, state, cycles):
    """Concatenate ``cycles`` traversals of the state that starts with label ``state``."""
    p = trace.closing_perm
    lab = state
    L, R = [], []
    for _ in range(cycles):
        L.append(trace.left[:, lab])
        R.append(trace.right[:, lab])
        lab = p[lab]
    return np.concatenate(L), np.concatenate(R), lab


def _resolve_cycles(trace, cycles):
    perm, n = permutation_after_cycle(trace)
    if cycles is None:
        cycles = n
    cycles = int(cycles)
    if cycles < 1:
        raise ValueError("cycles must be a positive integer")
    return perm, cycles


def berry_parallel_transport(trace, state=0, cycles=None, floor=OVERLAP_FLOOR):
    """Berry phase from gauge-fixed states, closing against the untouched first state."""
    perm, cycles = _resolve_cycles(trace, cycles)
    L, R, _ = _state_sequence(trace, state, cycles)
    Lf, Rf = gauge_fix(L, R, floor)
    # the last step closes on the untouched initial state
    nxt = np.concatenate([Rf[1:], R[:1]])
    ov = np.einsum("li,li->l", Lf, nxt)
    if abs(ov[-1]) < floor:
        raise ZeroOverlap("closing overlap vanishes")
    steps = -np.angle(ov)
    # every intermediate gauge-fixed overlap is real positive, so the holonomy
    # is the closing phase alone
    theta = berry_representative(steps[-1])
    steps[-1] = theta - np.sum(steps[:-1])
    acc = np.cumsum(steps)
    acc[-1] = theta
    return BerryResult(theta=theta, cycles=cycles, trace=acc, permutation=perm, state=state)


def berry_wilson(trace, state=0, cycles=None, floor=OVERLAP_FLOOR):
    """Wilson-loop Berry phase ``-arg prod <L_l|R_l+1>`` (principal value)."""
    perm, cycles = _resolve_cycles(trace, cycles)
    L, R, _ = _state_sequence(trace, state, cycles)
    nxt = np.ascontiguousarray(np.concatenate([R[1:], R[:1]]))
    partial, _, bad = kernels.wilson_running(np.ascontiguousarray(L), nxt, floor)
    if bad >= 0:
        raise ZeroOverlap(f"overlap at step {bad} is below {floor:g}")
    return wrap_phase(partial[-1])


def berry_multiband(trace, floor=OVERLAP_FLOOR):
    """One-cycle multiband phase ``-sum Im ln det M(l)``, ``M = <L_j(l)|R_j'(l+1)>``."""
    Lc = trace.left
    Rn = np.concatenate([trace.right[1:], trace.right[:1][:, list(trace.closing_perm)]])
    M = np.einsum("lja,lka->ljk", Lc, Rn)
    det = M[:, 0, 0] * M[:, 1, 1] - M[:, 0, 1] * M[:, 1, 0]
    small = np.flatnonzero(np.abs(det) < floor)
    if small.size:
        raise SingularOverlapMatrix(f"|det M| < {floor:g} at step {int(small[0])}")
    return wrap_phase(-float(np.sum(np.angle(det))))


@dataclass(frozen=True)
class PlaneSpec:
    """A coordinate plane of the parameter space.

    ``axes`` names the two varying coordinates (model coordinate names), the
    third is held at ``fixed``.
    """

    kind: ModelKind
    axes: tuple
    fixed: float
    range1: tuple
    range2: tuple

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind.parse(self.kind))
        names = COORD_NAMES[self.kind]
        a = tuple(self.axes)
        if len(a) != 2 or a[0] == a[1] or any(x not in names for x in a):
            raise ValueError(f"plane axes must be two distinct names from {names}, got {self.axes}")
        object.__setattr__(self, "axes", a)
        for r in (self.range1, self.range2):
            if len(r) != 2 or not (np.isfinite(r).all() and r[0] < r[1]):
                raise ValueError(f"plane range must be (lo, hi) with lo < hi, got {r}")

    @property
    def indices(self):
        names = COORD_NAMES[self.kind]
        i1, i2 = names.index(self.axes[0]), names.index(self.axes[1])
        return i1, i2, 3 - i1 - i2

    def grid(self, n1, n2):
        if int(n1) < 1 or int(n2) < 1:
            raise ValueError("grid dimensions must be positive")
        p1 = np.linspace(*self.range1, int(n1))
        p2 = np.linspace(*self.range2, int(n2))
        return p1, p2

    def coords(self, p1, p2):
        P1, P2 = np.meshgrid(p1, p2, indexing="ij")
        i1, i2, i3 = self.indices
        out = np.empty(P1.shape + (3,))
        out[..., i1] = P1
        out[..., i2] = P2
        out[..., i3] = self.fixed
        return out


@dataclass
class FieldGrid:
    """Discriminant field ``D = grad Im ln Delta`` on a plane grid (``ij`` indexing)."""

    plane: PlaneSpec
    p1: np.ndarray
    p2: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    norm: np.ndarray = field(init=False)

    def __post_init__(self):
        self.norm = np.hypot(self.d1, self.d2)


def _arg_delta(kind, c, coords):
    flat = coords.reshape(-1, 3)
    return np.angle(discriminant_many(kind, c, flat)).reshape(coords.shape[:-1])


def _field_at(kind, c, coords, axes_idx, step=FIELD_STEP):
    out = []
    for i in axes_idx:
        e = np.zeros(3)
        e[i] = step
        a = _arg_delta(kind, c, coords + e)
        b = _arg_delta(kind, c, coords - e)
        out.append(wrap_phase(a - b) / (2 * step))
    return out


def discriminant_field(c, plane, n1, n2, step=FIELD_STEP):
    """Central-difference discriminant field on an ``n1 x n2`` grid of ``plane``."""
    c = c or SystemConstants()
    p1, p2 = plane.grid(n1, n2)
    X = plane.coords(p1, p2)
    i1, i2, _ = plane.indices
    d1, d2 = _field_at(plane.kind, c, X, (i1, i2), step)
    return FieldGrid(plane, p1, p2, np.asarray(d1), np.asarray(d2))


def plaquette_winding(c, plane, p1, p2):
    """Winding of ``Delta`` around each grid cell (counterclockwise in (p1, p2)).

    Returns an integer array of shape ``(len(p1) - 1, len(p2) - 1)``; a simple
    EP inside a cell gives +1.
    """
    X = plane.coords(np.asarray(p1), np.asarray(p2))
    a = _arg_delta(plane.kind, c, X)
    s = (
        wrap_phase(a[1:, :-1] - a[:-1, :-1])
        + wrap_phase(a[1:, 1:] - a[1:, :-1])
        + wrap_phase(a[:-1, 1:] - a[1:, 1:])
        + wrap_phase(a[:-1, :-1] - a[:-1, 1:])
    )
    return np.rint(s / (2 * math.pi)).astype(int)


def field_circulation(fg):
    """Trapezoidal circulation of ``D`` around each cell of a field grid (curl proxy)."""
    d1, d2 = fg.d1, fg.d2
    h1 = np.diff(fg.p1)[:, None]
    h2 = np.diff(fg.p2)[None, :]
    bottom = 0.5 * (d1[:-1, :-1] + d1[1:, :-1]) * h1
    right = 0.5 * (d2[1:, :-1] + d2[1:, 1:]) * h2
    top = 0.5 * (d1[:-1, 1:] + d1[1:, 1:]) * h1
    left = 0.5 * (d2[:-1, :-1] + d2[:-1, 1:]) * h2
    return bottom + right - top - left


def field_loop_integral(loop, c=None, step=FIELD_STEP):
    """``-(1/2pi) * loop integral of D . dlambda``; equals the discriminant number.

    Each step's phase increment of ``Delta`` is taken on the ``2*pi`` branch
    nearest the trapezoidal estimate ``(D_l + D_l+1)/2 . dlambda``, which
    makes the sum independent of principal-branch aliasing on coarse steps.
    """
    c = c or SystemConstants()
    X = loop.coords
    D = np.stack(_field_at(loop.kind, c, X, (0, 1, 2), step), axis=-1)
    dX = np.roll(X, -1, axis=0) - X
    est = 0.5 * np.sum((D + np.roll(D, -1, axis=0)) * dX, axis=1)
    a = np.angle(discriminant_many(loop.kind, c, X))
    inc = wrap_phase(np.roll(a, -1) - a)
    inc = inc + 2 * math.pi * np.round((est - inc) / (2 * math.pi))
    return -float(np.sum(inc)) / (2 * math.pi)


@dataclass
class LoopInvariants:
    name: str
    n_points: int
    vorticity: VorticityResult
    gap: GapKind
    permutation: tuple
    cycles: int
    berry: BerryResult
    berry_wilson: float
    berry_multiband: float
    field_dn: float

    def to_json(self):
        v = self.vorticity
        return {
            "loop": self.name,
            "dn": v.dn_int,
            "dn_raw": v.dn,
            "vorticities": {"12": v.v[(0, 1)], "21": v.v[(1, 0)]},
            "gap": self.gap.value,
            "permutation": list(self.permutation),
            "berry": {
                "state": self.berry.state + 1,
                "theta_rad": self.berry.theta,
                "theta_quantized_pi": self.berry.quantized_pi,
                "theta_wilson_rad": self.berry_wilson,
                "theta_multiband_rad": self.berry_multiband,
                "cycles": self.cycles,
            },
            "field_dn": self.field_dn,
            "n_points": self.n_points,
            "quantization_error": v.quantization_error,
        }


def analyze_loop(loop, c=None, state=0, cycles=None, refine=True, max_arg_step=math.pi / 2):
    """All invariants of a sampled loop (adaptively refined first by default)."""
    c = c or SystemConstants()
    if refine:
        loop = refine_adaptive(loop, c, max_arg_step)
    tr = trace_eigensystem(loop, c)
    vr = discriminant_number(tr)
    perm, n = permutation_after_cycle(tr)
    br = berry_parallel_transport(tr, state, cycles)
    return LoopInvariants(
        name=loop.name,
        n_points=len(loop),
        vorticity=vr,
        gap=gap_classify(vr),
        permutation=perm,
        cycles=br.cycles,
        berry=br,
        berry_wilson=berry_wilson(tr, state, br.cycles),
        berry_multiband=berry_multiband(tr),
        field_dn=field_loop_integral(loop, c),
    )
