"""Backend selection for the hot kernels.

The compiled extension ``_ckernels`` is used when it was built; otherwise the
numpy implementation in ``_pykernels`` is used. Set ``EPBTOPO_PURE_PYTHON=1``
to force the fallback.
"""

import os

_impl = None
if os.environ.get("EPBTOPO_PURE_PYTHON", "").lower() not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = None
if _impl is None:
    from . import _pykernels as _impl

BACKEND = _impl.BACKEND

eig2 = _impl.eig2
associate = _impl.associate
gauge_fix = _impl.gauge_fix
wilson_running = _impl.wilson_running
spectrum_amplitude = _impl.spectrum_amplitude

__all__ = [
    "BACKEND",
    "eig2",
    "associate",
    "gauge_fix",
    "wilson_running",
    "spectrum_amplitude",
]
