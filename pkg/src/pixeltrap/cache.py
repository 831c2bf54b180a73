"""Disk cache for solved charge bases, keyed by layout content.

Solving the panel influence matrix dominates the runtime of every
workflow, while everything downstream (voltage fits, site analysis,
trajectories) is cheap in comparison.  The cache key is a hash of the
electrode outlines and the meshing parameters, so any geometry change
invalidates the entry and a hit reproduces the fresh solve bit for bit.
"""

from __future__ import annotations

import hashlib
import os
from pathlib import Path

import numpy as np

from .bem import ChargeBasis, solve_basis
from .geometry import ElectrodeLayout, PanelMesh, mesh_layout

# bump when meshing or solving changes in a way that alters results
_CACHE_VERSION = b"pixeltrap-basis-v1"


def layout_key(layout: ElectrodeLayout, target_panels: int) -> str:
    """Content hash of the electrode outlines plus meshing parameters."""
    h = hashlib.sha256(_CACHE_VERSION)
    h.update(np.int64(target_panels).tobytes())
    for el in sorted(layout, key=lambda e: e.id):
        h.update(el.id.encode())
        h.update(el.group.encode())
        h.update(np.ascontiguousarray(el.polygon, dtype=np.float64).tobytes())
    return h.hexdigest()[:24]


def default_cache_dir() -> Path:
    env = os.environ.get("PIXELTRAP_CACHE")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "pixeltrap"


def cached_basis(
    layout: ElectrodeLayout,
    target_panels: int,
    cache_dir=None,
    refresh: bool = False,
) -> tuple[ChargeBasis, bool]:
    """Mesh the layout and solve (or reload) its charge basis.

    Returns (basis, hit); ``hit`` reports whether the cache supplied the
    result.  ``refresh`` forces a re-solve and overwrites the entry.
    """
    cache_dir = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    path = cache_dir / f"basis_{layout_key(layout, target_panels)}.npz"
    if path.exists() and not refresh:
        return ChargeBasis.load(path), True
    mesh = mesh_layout(layout, target_panels)
    basis = solve_basis(mesh)
    cache_dir.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp.npz")
    basis.save(tmp)
    os.replace(tmp, path)
    return basis, False
