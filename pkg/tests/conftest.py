"""Shared test fixtures and a disk cache for expensive paper-profile runs.

The acceptance suite re-runs multi-minute forward integrations.  Their
results are cached under tests/_cache, keyed by a hash of the package
sources, so repeated pytest invocations are cheap while any code change
invalidates every cached artifact.  Set L96_NO_CACHE=1 to force
recomputation.
"""

from __future__ import annotations

import hashlib
import os
from pathlib import Path

import numpy as np
import pytest

CACHE_DIR = Path(__file__).parent / "_cache"
SRC_DIR = Path(__file__).parent.parent / "src" / "l96calib"


def _src_hash() -> str:
    h = hashlib.sha256()
    for p in sorted(SRC_DIR.rglob("*.py")):
        h.update(str(p.relative_to(SRC_DIR)).encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:12]


def cached_arrays(key: str, compute) -> dict[str, np.ndarray]:
    """Run compute() -> dict of arrays, memoized on disk per source hash."""
    CACHE_DIR.mkdir(exist_ok=True)
    path = CACHE_DIR / f"{key}-{_src_hash()}.npz"
    if path.exists() and os.environ.get("L96_NO_CACHE") != "1":
        with np.load(path) as z:
            return {k: z[k] for k in z.files}
    data = compute()
    tmp = path.with_suffix(".tmp.npz")
    np.savez(tmp, **data)
    tmp.replace(path)
    return data
