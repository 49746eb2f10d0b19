"""Pure-Python/numpy implementations of the hot kernels.

Mirrors ``_ckernels.pyx`` function for function; ``epbtopo.kernels`` picks
whichever is available. Array conventions shared by both backends:

* ``h``, ``g`` -- reduced couplings, complex arrays of shape ``(n,)``; the
  Hamiltonian is ``e*I + kappa*[[0, h], [h, 2*g]]``.
* eigenvector arrays have shape ``(n, 2, 2)`` indexed ``[point, state, component]``.
* biorthogonal overlap is the bilinear product ``sum(left * right)`` (no
  conjugation: ``<L|`` is already a row vector).
"""

import numpy as np

BACKEND = "python"


def eig2(h, g):
    """Closed-form eigen-decomposition of ``[[0, h], [h, 2g]]`` for many points.

    Returns ``(mu, right, rigidity)``: eigenvalues ``g +/- sqrt(h**2 + g**2)``
    (principal root, ``+`` branch first), unit right eigenvectors with the
    largest-magnitude component made real positive, and ``|R^T R|``.
    """
    h = np.asarray(h, dtype=complex)
    g = np.asarray(g, dtype=complex)
    s = np.sqrt(h * h + g * g)
    mu = np.stack([g + s, g - s], axis=-1)
    hh = np.broadcast_to(h[:, None], mu.shape)
    cand1 = np.stack([hh, mu], axis=-1)
    cand2 = np.stack([mu - 2.0 * g[:, None], hh], axis=-1)
    n1 = np.linalg.norm(cand1, axis=-1)
    n2 = np.linalg.norm(cand2, axis=-1)
    use1 = n1 >= n2
    vec = np.where(use1[..., None], cand1, cand2)
    norm = np.where(use1, n1, n2)
    vec = vec / norm[..., None]
    # fix gauge: largest component real positive (first index on ties)
    idx = np.argmax(np.abs(vec), axis=-1)
    pivot = np.take_along_axis(vec, idx[..., None], axis=-1)[..., 0]
    vec = vec * (np.abs(pivot) / pivot)[..., None]
    rigidity = np.abs(np.sum(vec * vec, axis=-1))
    return mu, vec, rigidity


def associate(left, right, threshold, max_ratio):
    """Follow the two states around a closed loop by maximal overlap.

    ``labels[l, j]`` is the raw index of the state carrying label ``j`` at
    point ``l``; row ``n`` holds the labels on returning to point 0. Of the
    two possible bijections the one with the larger overlap product wins,
    ties keep the identity. A step is flagged when a chosen overlap is
    ``<= threshold`` or when the rejected bijection's product reaches
    ``max_ratio`` times the chosen one (no decisive winner, as next to an EP).
    Returns ``(labels, min_overlap, worst_ratio, first_bad)``.
    """
    n = left.shape[0]
    labels = np.zeros((n + 1, 2), dtype=np.int64)
    labels[0] = (0, 1)
    min_ov = np.inf
    worst = 0.0
    first_bad = -1
    for l in range(n):
        nxt = (l + 1) % n
        a, b = labels[l]
        m00 = abs(left[l, a] @ right[nxt, 0])
        m01 = abs(left[l, a] @ right[nxt, 1])
        m10 = abs(left[l, b] @ right[nxt, 0])
        m11 = abs(left[l, b] @ right[nxt, 1])
        keep = m00 * m11
        swap = m01 * m10
        if keep >= swap:
            labels[l + 1] = (0, 1)
            ov = min(m00, m11)
            ratio = swap / keep if keep > 0 else np.inf
        else:
            labels[l + 1] = (1, 0)
            ov = min(m01, m10)
            ratio = keep / swap
        min_ov = min(min_ov, ov)
        worst = max(worst, ratio)
        if (ov <= threshold or ratio >= max_ratio) and first_bad < 0:
            first_bad = l
    return labels, float(min_ov), float(worst), first_bad


def gauge_fix(left, right, floor):
    """Parallel-transport gauge for one state sequence (shape ``(m, 2)``).

    Returns ``(left_fixed, right_fixed, first_bad)``.
    """
    left = np.array(left, dtype=complex)
    right = np.array(right, dtype=complex)
    first_bad = -1
    for l in range(left.shape[0] - 1):
        ov = left[l] @ right[l + 1]
        if abs(ov) < floor:
            first_bad = l
            break
        phase = ov / abs(ov)
        right[l + 1] /= phase
        left[l + 1] *= phase
    return left, right, first_bad


def wilson_running(left, right_next, floor):
    """Running Wilson-loop phase ``-arg(prod_l <L_l|R_{l+1}>)``.

    ``right_next[l]`` is the right vector paired with ``left[l]``. The running
    product is renormalized to unit modulus at every step; the discarded
    magnitudes are accumulated as ``log_modulus``.
    Returns ``(partial_phases, log_modulus, first_bad)``; ``first_bad`` is the
    first step whose overlap modulus is below ``floor`` (-1 if none).
    """
    ov = np.einsum("li,li->l", left, right_next)
    mag = np.abs(ov)
    zero = np.flatnonzero(mag < floor)
    if zero.size:
        return np.zeros(ov.shape[0]), -np.inf, int(zero[0])
    prod = np.cumprod(ov / mag)
    return -np.angle(prod), float(np.sum(np.log(mag))), -1


def spectrum_amplitude(omega0, gamma0, kappa0, xi_r, xi_i, zeta_sq, freqs):
    """``|P|`` at the two cavity ports for a drive in cavity A, shape ``(2, F)``."""
    a = omega0 - 1j * gamma0
    b = a - 2j * kappa0 * (1.0 + xi_r + 1j * xi_i)
    t = -kappa0 * (1.0 - zeta_sq)
    da = freqs - a
    db = freqs - b
    det = da * db - t * t
    return np.abs(np.stack([db / det, t / det]))
