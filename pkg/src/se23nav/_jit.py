"""Optional numba acceleration.

Kernels are decorated with :func:`njit`. When numba is unavailable, or when the
environment variable ``SE23NAV_DISABLE_NUMBA`` is set to a truthy value, the
decorator returns the plain Python function and the kernels run on numpy.

numba's on-disk cache is keyed on the file of the compiled function only, so a
kernel that inlines a kernel from another module keeps the stale callee after
that module is edited. The cache is therefore tied to a fingerprint of every
source file in the package and dropped when the fingerprint changes.
"""
from __future__ import annotations

import hashlib
import os
from pathlib import Path

_FLAG = os.environ.get("SE23NAV_DISABLE_NUMBA", "").strip().lower()
DISABLED = _FLAG in ("1", "true", "yes", "on")

try:
    if DISABLED:
        raise ImportError("numba disabled by SE23NAV_DISABLE_NUMBA")
    from numba import njit as _numba_njit

    NUMBA_ENABLED = True
except ImportError:  # pragma: no cover - depends on environment
    _numba_njit = None
    NUMBA_ENABLED = False

_ROOT = Path(__file__).resolve().parent
_STAMP = "se23nav-kernels.sha256"


def source_fingerprint() -> str:
    """SHA-256 over the package's Python sources (path and content)."""
    h = hashlib.sha256()
    for f in sorted(_ROOT.rglob("*.py")):
        h.update(f.relative_to(_ROOT).as_posix().encode())
        h.update(f.read_bytes())
    return h.hexdigest()


def _refresh_cache() -> None:
    cache = _ROOT / "__pycache__"
    stamp = cache / _STAMP
    digest = source_fingerprint()
    try:
        if stamp.read_text() == digest:
            return
    except OSError:
        pass
    try:
        for d in [cache, *(p / "__pycache__" for p in _ROOT.iterdir() if p.is_dir())]:
            for f in list(d.glob("*.nbi")) + list(d.glob("*.nbc")):
                f.unlink(missing_ok=True)
        cache.mkdir(exist_ok=True)
        stamp.write_text(digest)
    except OSError:  # read-only install: numba falls back to its own checks
        pass


if NUMBA_ENABLED:
    _refresh_cache()


def njit(fn=None, **kwargs):
    """Compile with ``numba.njit(cache=True)`` if enabled, else return ``fn`` as is."""
    if not NUMBA_ENABLED:
        return fn if fn is not None else (lambda f: f)
    kwargs.setdefault("cache", True)
    if fn is None:
        return _numba_njit(**kwargs)
    return _numba_njit(**kwargs)(fn)
