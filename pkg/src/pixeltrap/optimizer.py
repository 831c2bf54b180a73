"""Voltage synthesis by regularized least squares, plus transport plans.

The potential is affine in the electrode voltages, so hitting a target
potential is a linear problem: stack the weighted response matrix on top
of a Tikhonov block and solve.  Voltage bounds are handled by active-set
clipping (pin violators to the nearest bound, re-solve the rest, repeat).
Transport sequences are generated by solving a moving and elongating
quadrupole target in three phases: widen the start well into a corridor,
translate the corridor, recompress at the destination.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field as dc_field

import numpy as np

from .analysis import BemField, MagneticField, eigenfrequencies, stationary_point
from .bem import ChargeBasis, electrode_response, hessian_at
from .constants import ParticleSpecies
from .errors import ComputationError, InputError

SQRT3 = math.sqrt(3.0)


class BoundsError(InputError):
    """Voltage bounds cannot be met without ruining the fit."""


class PathError(InputError):
    """No adjacency path between the requested pixels."""


class ConfinementError(ComputationError):
    """A transport waypoint lost its confining site."""


class SitesMergeError(ComputationError):
    """Crystal stationary points coalesced."""


class RidgeError(ComputationError):
    """Racetrack ridge crest missing on at least one ray."""


class HeightError(ComputationError):
    """Requested axial minimum height could not be realized."""


# ---------------------------------------------------------------------------
# targets


def _fit_stencil(halfwidth: float) -> np.ndarray:
    """3x3x3 cube of sample offsets plus six face points at double range."""
    g = np.array([-1.0, 0.0, 1.0]) * halfwidth
    cube = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    faces = 2.0 * halfwidth * np.array(
        [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]],
        dtype=float,
    )
    return np.vstack([cube, faces])


@dataclass
class TargetSpec:
    """Sampled potential values the optimizer should reproduce."""

    points: np.ndarray
    values: np.ndarray
    weights: np.ndarray | None = None
    center: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.values = np.atleast_1d(np.asarray(self.values, dtype=float))
        if self.points.shape != (len(self.values), 3):
            raise InputError("target needs matching (P, 3) points and P values")
        if len(self.values) < 1:
            raise InputError("target needs at least one sample point")
        if self.weights is None:
            self.weights = np.ones(len(self.values))
        else:
            self.weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
            if self.weights.shape != self.values.shape:
                raise InputError("weights must match the sample count")
            if np.any(self.weights < 0.0) or not np.any(self.weights > 0.0):
                raise InputError("weights must be nonnegative and not all zero")
        if self.center is not None:
            self.center = np.asarray(self.center, dtype=float)

    @classmethod
    def quadrupole(cls, center, curvatures, axes=None, halfwidth=30e-6):
        """Local quadratic target 0.5 * sum_i k_i u_i^2 around a center.

        ``curvatures`` are the three principal second derivatives in V/m^2
        and should sum to about zero (a harmonic function).  ``axes`` rows
        are the principal directions; default is the coordinate frame.
        The sample stencil is a 3x3x3 cube of the given half-width plus
        six face points at twice that range, which pins the curvature
        without reaching into anharmonic territory.
        """
        center = np.asarray(center, dtype=float)
        k = np.asarray(curvatures, dtype=float)
        if axes is None:
            axes = np.eye(3)
        axes = np.asarray(axes, dtype=float)
        offs = _fit_stencil(halfwidth)
        points = center[None, :] + offs
        u = offs @ axes.T
        values = 0.5 * (u**2 @ k)
        return cls(points, values, center=center)

    @classmethod
    def harmonic_well(cls, center, axial_curvature, halfwidth=30e-6):
        """Axially confining quadrupole: d2/dz2 = k, radial = -k/2 each."""
        k = float(axial_curvature)
        return cls.quadrupole(center, (-0.5 * k, -0.5 * k, k), halfwidth=halfwidth)


@dataclass
class RegularizationConfig:
    """Tikhonov weight, voltage box bounds and hard-wired electrodes."""

    lam: float = 0.0
    voltage_bounds: tuple[float, float] | None = None
    fixed_electrodes: dict[str, float] | None = None

    def __post_init__(self):
        if self.lam < 0.0:
            raise InputError("regularization weight must be >= 0")
        if self.voltage_bounds is not None:
            lo, hi = self.voltage_bounds
            if not lo < hi:
                raise InputError("voltage_bounds must satisfy min < max")


# ---------------------------------------------------------------------------
# least-squares solve


def response_matrix(basis: ChargeBasis, points, free_electrodes) -> np.ndarray:
    """Potential at each point per unit voltage on each free electrode."""
    ids = basis.electrode_ids
    cols = []
    for e in free_electrodes:
        if e not in ids:
            raise InputError(f"unknown electrode id {e!r}")
        cols.append(ids.index(e))
    full = electrode_response(basis, points)
    return full[:, cols]


@dataclass
class VoltageSolution:
    """Solved voltage set plus the fit diagnostics."""

    voltages: dict[str, float]
    residual_rms: float
    lam: float
    active_bounds: dict[str, float] = dc_field(default_factory=dict)
    curvature_zz: float | None = None
    offset: float | None = None

    def report(self) -> dict:
        rep = {
            "voltages_v": dict(self.voltages),
            "residual_rms_v": self.residual_rms,
            "lambda": self.lam,
            "active_bounds_v": dict(self.active_bounds),
        }
        if self.curvature_zz is not None:
            rep["curvature_zz_v_per_m2"] = self.curvature_zz
        if self.offset is not None:
            rep["offset_v"] = self.offset
        return rep

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.report(), fh, indent=2)
            fh.write("\n")


def _weighted_rms(weights: np.ndarray, resid: np.ndarray) -> float:
    return float(np.sqrt(weights @ resid**2 / np.sum(weights)))


def _pinned_lstsq(A, t, lam, lo_hi, max_passes=20):
    """Tikhonov solve with active-set clipping to box bounds.

    Returns the solution and the set of pinned columns.  Columns pinned at
    a bound are moved to the right-hand side and the rest re-solved, up to
    ``max_passes`` times.
    """
    n = A.shape[1]
    v = np.zeros(n)
    free = np.ones(n, dtype=bool)
    pinned_value = np.zeros(n)
    for _ in range(max_passes):
        cols = np.flatnonzero(free)
        if cols.size == 0:
            break
        rhs = t - A[:, ~free] @ pinned_value[~free]
        Af = A[:, cols]
        if lam > 0.0:
            Af = np.vstack([Af, lam * np.eye(cols.size)])
            rhs = np.concatenate([rhs, np.zeros(cols.size)])
        sol = np.linalg.lstsq(Af, rhs, rcond=None)[0]
        v[cols] = sol
        if lo_hi is None:
            break
        lo, hi = lo_hi
        too_lo = free & (v < lo)
        too_hi = free & (v > hi)
        if not (np.any(too_lo) or np.any(too_hi)):
            break
        pinned_value[too_lo] = lo
        pinned_value[too_hi] = hi
        v[too_lo] = lo
        v[too_hi] = hi
        free &= ~(too_lo | too_hi)
    return v, ~free


def solve_voltages(
    target: TargetSpec,
    reg: RegularizationConfig,
    basis: ChargeBasis,
    free_electrodes=None,
    groups: dict[str, list[str]] | None = None,
    free_offset: bool = False,
) -> VoltageSolution:
    """Minimize ||W (A v - t)||^2 + lam^2 ||v||^2 subject to box bounds.

    ``groups`` maps a group name to a list of electrode ids driven by one
    shared unknown (ring-symmetric ansatz and the like); when given it
    replaces ``free_electrodes``.  ``free_offset`` adds an unregularized
    constant column so only the shape of the target matters, not its gauge.
    Electrode ids in ``reg.fixed_electrodes`` are held at their given value
    and excluded from the unknowns.
    """
    ids = basis.electrode_ids
    fixed = dict(reg.fixed_electrodes or {})
    for e in fixed:
        if e not in ids:
            raise InputError(f"unknown fixed electrode id {e!r}")

    if groups is None:
        if free_electrodes is None:
            free_electrodes = [e for e in ids if e not in fixed]
        groups = {e: [e] for e in free_electrodes}
    names = list(groups)
    if not names:
        raise InputError("no free electrodes to solve for")
    members: list[list[str]] = []
    for name in names:
        sub = list(groups[name])
        for e in sub:
            if e not in ids:
                raise InputError(f"unknown electrode id {e!r}")
            if e in fixed:
                raise InputError(f"electrode {e!r} is both free and fixed")
        members.append(sub)

    full = electrode_response(basis, target.points)
    col = {e: i for i, e in enumerate(ids)}
    A = np.column_stack(
        [full[:, [col[e] for e in sub]].sum(axis=1) for sub in members]
    )
    t = target.values.copy()
    for e, val in fixed.items():
        t -= full[:, col[e]] * val

    w = np.sqrt(target.weights / np.max(target.weights))
    Aw = A * w[:, None]
    tw = t * w
    ww = float(w @ w)

    def run(bounds):
        if free_offset:
            # the gauge constant is never bounded or regularized; project
            # it out of both sides, solve for the voltages, recover it last
            pA = Aw - np.outer(w, w @ Aw) / ww
            pt = tw - w * (w @ tw) / ww
            vv, pin = _pinned_lstsq(pA, pt, reg.lam, bounds)
            return vv, pin, float(w @ (tw - Aw @ vv)) / ww
        vv, pin = _pinned_lstsq(Aw, tw, reg.lam, bounds)
        return vv, pin, 0.0

    v, pinned, c = run(None)
    resid_unc = _weighted_rms(target.weights, A @ v - t + c)
    resid = resid_unc
    if reg.voltage_bounds is not None:
        v, pinned, c = run(reg.voltage_bounds)
        resid = _weighted_rms(target.weights, A @ v - t + c)
        if np.any(pinned) and resid > 10.0 * max(resid_unc, 1e-15):
            raise BoundsError(
                f"voltage bounds {reg.voltage_bounds} leave residual "
                f"{resid:.3g} V, more than 10x the unconstrained "
                f"{resid_unc:.3g} V"
            )

    voltages = dict(fixed)
    active: dict[str, float] = {}
    for name, sub, val, pin in zip(names, members, v, pinned):
        for e in sub:
            voltages[e] = float(val)
        if pin:
            active[name] = float(val)
    for e in ids:
        voltages.setdefault(e, 0.0)

    curv = None
    if target.center is not None:
        curv = float(hessian_at(target.center[None, :], voltages, basis)[0, 2, 2])
    return VoltageSolution(
        voltages,
        resid,
        reg.lam,
        active,
        curv,
        c if free_offset else None,
    )


def lambda_sweep(target: TargetSpec, basis: ChargeBasis, lambdas, reg=None):
    """Solution norm and residual for each Tikhonov weight, for L-curves."""
    base = reg or RegularizationConfig()
    norms, resids = [], []
    for lam in lambdas:
        cfg = RegularizationConfig(float(lam), base.voltage_bounds, base.fixed_electrodes)
        sol = solve_voltages(target, cfg, basis)
        vals = np.array([sol.voltages[e] for e in basis.electrode_ids])
        norms.append(float(np.linalg.norm(vals)))
        resids.append(sol.residual_rms)
    return np.array(norms), np.array(resids)


# ---------------------------------------------------------------------------
# pixel lattice bookkeeping


def electrode_centers(mesh) -> dict[str, np.ndarray]:
    """Area-weighted centroid (x, y) of each electrode's panels."""
    v = mesh.vertices
    rolled = np.roll(v, -1, axis=1)
    cross = v[:, :, 0] * rolled[:, :, 1] - v[:, :, 1] * rolled[:, :, 0]
    areas = 0.5 * cross.sum(axis=1)
    cxy = ((v + rolled) * cross[:, :, None]).sum(axis=1) / (6.0 * areas[:, None])
    out = {}
    for k, e in enumerate(mesh.electrode_ids):
        sel = mesh.electrode_index == k
        a = areas[sel]
        out[e] = (cxy[sel] * a[:, None]).sum(axis=0) / a.sum()
    return out


def _pixel_set(mesh, pixel_ids=None) -> list[str]:
    if pixel_ids is not None:
        return list(pixel_ids)
    pix = [e for e in mesh.electrode_ids if re.match(r"pix(_|\b)", e)]
    if not pix:
        raise InputError("mesh has no pixel electrodes (ids starting with 'pix')")
    return pix


def _pixel_pitch(centers: dict[str, np.ndarray]) -> float:
    pts = np.array(list(centers.values()))
    if len(pts) < 2:
        raise InputError("need at least two pixels to define a pitch")
    d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    return float(np.min(d[d > 0.0]))

def pixel_rings(mesh, pixel_ids=None) -> dict[str, int]:
    """Hexagonal ring index of each pixel, recovered from panel centroids."""
    pix = _pixel_set(mesh, pixel_ids)
    centers = {e: c for e, c in electrode_centers(mesh).items() if e in pix}
    pitch = _pixel_pitch(centers) if len(pix) > 1 else 1.0
    rings = {}
    for e, c in centers.items():
        j = round(c[1] / (pitch * SQRT3 / 2.0))
        i = round(c[0] / pitch - 0.5 * j)
        rings[e] = max(abs(i), abs(j), abs(i + j))
    return rings


def pixel_path(mesh, from_pixel: str, to_pixel: str, pixel_ids=None) -> list[str]:
    """Shortest flat-to-flat adjacency path between two pixels (BFS)."""
    pix = _pixel_set(mesh, pixel_ids)
    for e in (from_pixel, to_pixel):
        if e not in pix:
            raise InputError(f"{e!r} is not a pixel electrode of this mesh")
    centers = {e: c for e, c in electrode_centers(mesh).items() if e in pix}
    pitch = _pixel_pitch(centers)
    order = sorted(pix)
    adj = {e: [] for e in order}
    for a in order:
        for b in order:
            if a < b and np.linalg.norm(centers[a] - centers[b]) < 1.3 * pitch:
                adj[a].append(b)
                adj[b].append(a)
    prev = {from_pixel: None}
    queue = [from_pixel]
    while queue:
        cur = queue.pop(0)
        if cur == to_pixel:
            break
        for nxt in adj[cur]:
            if nxt not in prev:
                prev[nxt] = cur
                queue.append(nxt)
    if to_pixel not in prev:
        raise PathError(f"no adjacency path from {from_pixel!r} to {to_pixel!r}")
    path = [to_pixel]
    while prev[path[-1]] is not None:
        path.append(prev[path[-1]])
    return path[::-1]


# ---------------------------------------------------------------------------
# transport plans


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


@dataclass
class TransportPlan:
    """Ordered voltage waypoints with timestamps for adiabatic execution."""

    waypoints: list[dict[str, float]]
    timestamps: np.ndarray
    start_site: np.ndarray
    end_site: np.ndarray
    sites: np.ndarray | None = None
    mode_frequencies: np.ndarray | None = None

    def __post_init__(self):
        self.timestamps = np.atleast_1d(np.asarray(self.timestamps, dtype=float))
        if len(self.waypoints) != len(self.timestamps):
            raise InputError("waypoint and timestamp counts differ")
        if len(self.waypoints) < 1:
            raise InputError("plan needs at least one waypoint")
        if np.any(np.diff(self.timestamps) <= 0.0):
            raise InputError("timestamps must be strictly increasing")
        self.start_site = np.asarray(self.start_site, dtype=float)
        self.end_site = np.asarray(self.end_site, dtype=float)

    @property
    def duration(self) -> float:
        return float(self.timestamps[-1] - self.timestamps[0])

    def voltages_at(self, t: float) -> dict[str, float]:
        """Linear interpolation between the bracketing waypoints."""
        ts = self.timestamps
        if t <= ts[0] or len(ts) == 1:
            return dict(self.waypoints[0])
        if t >= ts[-1]:
            return dict(self.waypoints[-1])
        i = int(np.searchsorted(ts, t, side="right") - 1)
        f = (t - ts[i]) / (ts[i + 1] - ts[i])
        a, b = self.waypoints[i], self.waypoints[i + 1]
        return {e: (1.0 - f) * a[e] + f * b[e] for e in a}

    def adiabaticity(self) -> float:
        """max over intervals of |d omega / dt| / omega_min^2 (0 if static)."""
        if self.mode_frequencies is None or len(self.timestamps) < 2:
            return 0.0
        w = self.mode_frequencies
        dt = np.diff(self.timestamps)
        dw = np.max(np.abs(np.diff(w, axis=0)), axis=1)
        wmin = np.minimum(w[:-1].min(axis=1), w[1:].min(axis=1))
        return float(np.max(dw / dt / wmin**2))

    def max_step_voltage(self) -> float:
        if len(self.waypoints) < 2:
            return 0.0
        ids = list(self.waypoints[0])
        arr = np.array([[wp[e] for e in ids] for wp in self.waypoints])
        return float(np.max(np.abs(np.diff(arr, axis=0))))

    def save(self, path) -> None:
        doc = {
            "waypoints": [dict(wp) for wp in self.waypoints],
            "timestamps_s": self.timestamps.tolist(),
            "start_site_m": self.start_site.tolist(),
            "end_site_m": self.end_site.tolist(),
        }
        if self.sites is not None:
            doc["sites_m"] = np.asarray(self.sites).tolist()
        if self.mode_frequencies is not None:
            doc["mode_frequencies_rad_s"] = np.asarray(self.mode_frequencies).tolist()
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "TransportPlan":
        with open(path) as fh:
            doc = json.load(fh)
        return cls(
            [dict(wp) for wp in doc["waypoints"]],
            np.asarray(doc["timestamps_s"], dtype=float),
            np.asarray(doc.get("start_site_m", [0.0, 0.0, 0.0])),
            np.asarray(doc.get("end_site_m", [0.0, 0.0, 0.0])),
            np.asarray(doc["sites_m"]) if "sites_m" in doc else None,
            np.asarray(doc["mode_frequencies_rad_s"])
            if "mode_frequencies_rad_s" in doc
            else None,
        )


def _verify_waypoint(basis, voltages, seed, species, b_field, index):
    """Stationary point, eigenfrequencies and axial curvature of a waypoint."""
    provider = BemField(basis, voltages)
    try:
        pos = stationary_point(provider, seed)
    except (InputError, ComputationError) as exc:
        raise ConfinementError(
            f"waypoint {index}: no stationary point near {np.round(seed * 1e6, 1)} um "
            f"({exc})"
        ) from None
    H = provider.hessian(pos[None, :])[0]
    freqs, stable = eigenfrequencies(H, species, b_field)
    kz = species.charge * H[2, 2]
    if not stable or kz <= 0.0:
        raise ConfinementError(
            f"waypoint {index}: site at {np.round(pos * 1e6, 1)} um is not confining"
        )
    wz = math.sqrt(kz / species.mass)
    return pos, freqs, wz


def _phase_times(sites, freqs, phase_of, margin, accel_tol, wz_ref,
                 drift_tol):
    """Uniform per-phase step durations meeting the pacing contracts."""
    n = len(sites)
    dt = np.zeros(n - 1)
    for p in range(3):
        idx = [i for i in range(n - 1) if phase_of[i] == p]
        if not idx:
            continue
        need = 0.0
        for i in idx:
            wmin = min(freqs[i].min(), freqs[i + 1].min())
            dw = np.max(np.abs(freqs[i + 1] - freqs[i]))
            need = max(need, dw / (margin * wmin**2))
        wslow = min(min(freqs[i].min(), freqs[i + 1].min()) for i in idx)
        travel = sum(np.linalg.norm(sites[i + 1] - sites[i]) for i in idx)
        if travel > 0.0:
            # well acceleration must not pump the axial mode above the
            # residual-amplitude budget
            t_total = math.sqrt(6.0 * travel / (accel_tol * wz_ref**2))
            # the guiding center trails the moving well by v / omega_slow;
            # that lag bounds the magnetron ring left after the move, so
            # cap it at drift_tol (smoothstep peak speed is 1.5 L / T)
            t_total = max(t_total, 1.5 * travel / (drift_tol * wslow))
            need = max(need, t_total / len(idx))
        need = max(need, 3.0 * (2.0 * math.pi / wslow) / len(idx))
        for i in idx:
            dt[i] = need
    return dt


def lateral_transport_plan(
    from_pixel: str,
    to_pixel: str,
    n_steps: int,
    basis: ChargeBasis,
    species: ParticleSpecies,
    b_field: MagneticField,
    omega_z: float = 2.0 * math.pi * 1.0e6,
    height: float | None = None,
    reg: RegularizationConfig | None = None,
    elongation: float = 0.5,
    accel_tol: float = 5e-8,
    drift_tol: float = 1.5e-7,
    margin: float = 5e-3,
    dv_max: float = 1.0,
    pixel_ids=None,
) -> TransportPlan:
    """Widen, translate and recompress a well between two pixels.

    The well is an axially confining quadrupole with axial curvature set
    by ``omega_z``; during the corridor phase its radial curvature along
    the path direction is relaxed by the ``elongation`` factor while the
    transverse one stiffens to keep the trace zero.  Waypoints follow a
    smoothstep schedule in each phase, so uniform per-phase timestamps
    give smooth well motion.  ``accel_tol`` is the residual axial
    amplitude budget in meters used to pace the translation and
    ``drift_tol`` the matching cap on the radial guiding-center lag,
    which is what the magnetron mode keeps after the move.
    """
    if n_steps < 4:
        raise InputError("n_steps must be at least 4")
    # the corridor target has a nearly flat direction; a firm Tikhonov
    # weight keeps the solution path from swinging between waypoints
    reg = reg or RegularizationConfig(lam=1e-3)
    kz = species.mass * omega_z**2 / species.charge
    centers = electrode_centers(basis.mesh)
    path = pixel_path(basis.mesh, from_pixel, to_pixel, pixel_ids)
    pitch = _pixel_pitch({e: centers[e] for e in _pixel_set(basis.mesh, pixel_ids)})
    if height is None:
        height = pitch

    def well(center3, e, axis):
        perp = np.array([-axis[1], axis[0], 0.0])
        curv = (-0.5 * kz * (1.0 - e), -0.5 * kz * (1.0 + e), kz)
        return TargetSpec.quadrupole(
            center3, curv, axes=np.array([axis, perp, [0.0, 0.0, 1.0]]),
            halfwidth=0.25 * pitch,
        )

    if from_pixel == to_pixel:
        c = np.array([centers[from_pixel][0], centers[from_pixel][1], height])
        sol = solve_voltages(well(c, 0.0, np.array([1.0, 0.0, 0.0])), reg, basis,
                             free_offset=True)
        pos, freqs, _ = _verify_waypoint(basis, sol.voltages, c, species, b_field, 0)
        return TransportPlan([sol.voltages], np.array([0.0]), pos, pos,
                             pos[None, :], freqs[None, :])

    node_xy = np.array([centers[e] for e in path])
    seg = np.diff(node_xy, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    arel = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = arel[-1]

    def along(f):
        s = f * total
        i = min(int(np.searchsorted(arel, s, side="right")) - 1, len(seg) - 1)
        xy = node_xy[i] + seg[i] * ((s - arel[i]) / seg_len[i])
        axis = np.array([seg[i][0], seg[i][1], 0.0]) / seg_len[i]
        return np.array([xy[0], xy[1], height]), axis

    # schedule parameter s in [0, 3]: widen, translate, recompress
    svals = np.linspace(0.0, 3.0, n_steps)
    phase_of = [min(int(s), 2) for s in svals[:-1]]

    def schedule(s):
        if s <= 1.0:
            e = elongation * float(_smoothstep(s))
            c3, axis = along(0.0)
        elif s <= 2.0:
            e = elongation
            c3, axis = along(float(_smoothstep(s - 1.0)))
        else:
            e = elongation * float(1.0 - _smoothstep(s - 2.0))
            c3, axis = along(1.0)
        return e, c3, axis

    def run(corrections):
        waypoints, sites, freq_rows, wz_rows = [], [], [], []
        seed = np.array([node_xy[0][0], node_xy[0][1], height])
        for j, s in enumerate(svals):
            e, c3, axis = schedule(s)
            sol = solve_voltages(well(c3 - corrections[j], e, axis), reg,
                                 basis, free_offset=True)
            pos, freqs, wz = _verify_waypoint(basis, sol.voltages, seed,
                                              species, b_field, j)
            waypoints.append(sol.voltages)
            sites.append(pos)
            freq_rows.append(freqs)
            wz_rows.append(wz)
            seed = pos
        return waypoints, np.array(sites), np.array(freq_rows), wz_rows

    # two passes: the elongated well realizes its stationary point slightly
    # off the requested center, so measure that bias once and re-solve with
    # the request shifted to cancel it
    zero = np.zeros((n_steps, 3))
    _, sites, _, _ = run(zero)
    bias = sites - np.array([schedule(s)[1] for s in svals])
    bias[:, 2] = 0.0
    waypoints, sites, freq_rows, wz_rows = run(bias)
    wz_end = min(wz_rows[0], wz_rows[-1])
    if min(wz_rows) < 0.5 * wz_end or max(wz_rows) > 1.5 * wz_end:
        raise ConfinementError(
            "axial frequency wandered outside [0.5, 1.5] x endpoint value"
        )
    step_v = TransportPlan(
        waypoints, np.arange(n_steps, dtype=float), sites[0], sites[-1]
    ).max_step_voltage()
    if step_v > dv_max:
        raise InputError(
            f"waypoint voltage step {step_v:.2f} V exceeds {dv_max} V; "
            f"increase n_steps (roughly x{math.ceil(step_v / dv_max)})"
        )
    # monotone site motion along the straight start-to-end direction
    direction = sites[-1] - sites[0]
    direction /= np.linalg.norm(direction)
    proj = sites @ direction
    if np.any(np.diff(proj) < -0.002 * pitch):
        raise ConfinementError("stationary point backtracked along the path")
    if np.max(np.abs(np.diff(proj))) > 0.26 * pitch:
        raise InputError("site moves more than pitch/4 per step; increase n_steps")

    dt = _phase_times(sites, freq_rows, phase_of, margin, accel_tol, wz_end,
                      drift_tol)
    times = np.concatenate([[0.0], np.cumsum(dt)])
    return TransportPlan(waypoints, times, sites[0], sites[-1], sites, freq_rows)


def vertical_transport_plan(
    heights,
    basis: ChargeBasis,
    species: ParticleSpecies,
    b_field: MagneticField | None = None,
    omega_z: float = 2.0 * math.pi * 5.0e5,
    reg: RegularizationConfig | None = None,
    accel_tol: float = 5e-8,
    margin: float = 5e-3,
    pixel_ids=None,
) -> TransportPlan:
    """Ring-symmetric waypoints walking the axial minimum through heights.

    Pixels in the same hexagonal ring share one unknown per waypoint, so
    every waypoint is rotationally symmetric by construction.  Heights are
    sorted ascending; each solved waypoint must place its axial minimum
    within 5% of the request, else a HeightError reports what was reached.
    """
    heights = np.sort(np.atleast_1d(np.asarray(heights, dtype=float)))
    pix = _pixel_set(basis.mesh, pixel_ids)
    centers = electrode_centers(basis.mesh)
    radius = max(np.linalg.norm(centers[e]) for e in pix)
    if len(pix) > 1:
        radius += 0.5 * _pixel_pitch({e: centers[e] for e in pix})
    if np.any(heights < 0.05 * radius) or np.any(heights > 2.0 * radius):
        raise InputError(
            f"heights must lie within [0.05, 2] x array radius ({radius:.3g} m)"
        )
    reg = reg or RegularizationConfig(lam=1e-6)
    rings = pixel_rings(basis.mesh, pixel_ids)
    groups: dict[str, list[str]] = {}
    for e, r in sorted(rings.items()):
        groups.setdefault(f"ring{r}", []).append(e)
    others = [e for e in basis.electrode_ids if e not in rings]
    fams: dict[str, list[str]] = {}
    for e in others:
        fams.setdefault(e.rstrip("0123456789_q"), []).append(e)
    groups.update(fams)

    kz = species.mass * omega_z**2 / species.charge
    b = b_field or MagneticField(1.0)
    waypoints, sites, freq_rows, wz_rows = [], [], [], []
    for j, h in enumerate(heights):
        target = TargetSpec.harmonic_well(
            np.array([0.0, 0.0, h]), kz, halfwidth=max(0.1 * h, 20e-6)
        )
        sol = solve_voltages(target, reg, basis, groups=groups, free_offset=True)
        seed = np.array([0.0, 0.0, h])
        pos, freqs, wz = _verify_waypoint(basis, sol.voltages, seed, species, b, j)
        if abs(pos[2] - h) > 0.05 * h:
            raise HeightError(
                f"requested minimum at {h * 1e3:.3f} mm, reached "
                f"{pos[2] * 1e3:.3f} mm (5% tolerance)"
            )
        waypoints.append(sol.voltages)
        sites.append(pos)
        freq_rows.append(freqs)
        wz_rows.append(wz)

    if len(heights) == 1:
        return TransportPlan(waypoints, np.array([0.0]), sites[0], sites[0],
                             np.array(sites), np.array(freq_rows))
    sites = np.array(sites)
    freq_rows = np.array(freq_rows)
    dt = np.zeros(len(heights) - 1)
    for i in range(len(dt)):
        wmin = min(freq_rows[i].min(), freq_rows[i + 1].min())
        dw = np.max(np.abs(freq_rows[i + 1] - freq_rows[i]))
        dt[i] = dw / (margin * wmin**2)
        # keep the well slow enough that stopping cannot ring the axial mode
        wz = min(wz_rows[i], wz_rows[i + 1])
        dt[i] = max(dt[i], abs(sites[i + 1, 2] - sites[i, 2]) / (accel_tol * wz),
                    2.0 * math.pi / wmin)
    times = np.concatenate([[0.0], np.cumsum(dt)])
    return TransportPlan(waypoints, times, sites[0], sites[-1], sites, freq_rows)


# ---------------------------------------------------------------------------
# crystals and rings


@dataclass
class CrystalSolution:
    """Voltage set realizing several sites, plus per-site diagnostics."""

    voltages: dict[str, float]
    positions: np.ndarray
    omega_z: np.ndarray
    depths_ev: np.ndarray | None
    residual_rms: float

    def report(self) -> dict:
        rep = {
            "voltages_v": dict(self.voltages),
            "positions_m": self.positions.tolist(),
            "omega_z_hz": (self.omega_z / (2.0 * math.pi)).tolist(),
            "residual_rms_v": self.residual_rms,
        }
        if self.depths_ev is not None:
            rep["depths_ev"] = self.depths_ev.tolist()
        return rep


def crystal_voltages(
    n_sites: int,
    ring_radius: float,
    basis: ChargeBasis,
    species: ParticleSpecies,
    height: float | None = None,
    omega_z: float = 2.0 * math.pi * 8.0e5,
    phase: float = 0.0,
    reg: RegularizationConfig | None = None,
    with_depth: bool = False,
) -> CrystalSolution:
    """Solve for n wells spaced evenly on a ring (an artificial crystal).

    The target superposes one axially confining quadrupole per site; the
    n-fold symmetry of the targets carries over to the sites up to mesh
    and guard discreteness.  Raises SitesMergeError when two of the found
    stationary points land closer than half the nominal spacing.
    """
    from .analysis import trap_depth  # local import to avoid a cycle at load

    if n_sites < 2:
        raise InputError("a crystal needs at least two sites")
    pix = _pixel_set(basis.mesh)
    centers = electrode_centers(basis.mesh)
    pitch = _pixel_pitch({e: centers[e] for e in pix})
    array_radius = max(np.linalg.norm(centers[e]) for e in pix) + 0.5 * pitch
    if ring_radius <= 0.0 or ring_radius > array_radius:
        raise InputError("ring_radius must fit inside the pixel array")
    if height is None:
        height = pitch
    reg = reg or RegularizationConfig(lam=1e-6)
    kz = species.mass * omega_z**2 / species.charge

    ang = phase + 2.0 * math.pi * np.arange(n_sites) / n_sites
    site_centers = np.column_stack(
        [ring_radius * np.cos(ang), ring_radius * np.sin(ang), np.full(n_sites, height)]
    )
    half = min(30e-6, 0.2 * ring_radius)
    parts = [TargetSpec.harmonic_well(c, kz, halfwidth=half) for c in site_centers]
    points = np.vstack([p.points for p in parts])
    values = np.concatenate([p.values for p in parts])
    target = TargetSpec(points, values, center=site_centers[0])

    sol = solve_voltages(target, reg, basis, free_offset=True)
    provider = BemField(basis, sol.voltages)
    found, wz = [], []
    for c in site_centers:
        try:
            pos = stationary_point(provider, c)
        except (InputError, ComputationError) as exc:
            raise SitesMergeError(f"no site near {np.round(c * 1e6)} um: {exc}") from None
        H = provider.hessian(pos[None, :])[0]
        kzz = species.charge * H[2, 2]
        if kzz <= 0.0:
            raise SitesMergeError(f"site near {np.round(c * 1e6)} um not confining")
        found.append(pos)
        wz.append(math.sqrt(kzz / species.mass))
    found = np.array(found)
    spacing = 2.0 * ring_radius * math.sin(math.pi / n_sites)
    d = np.linalg.norm(found[:, None, :] - found[None, :, :], axis=-1)
    np.fill_diagonal(d, np.inf)
    if d.min() < 0.5 * spacing:
        raise SitesMergeError(
            f"stationary points merged: min separation {d.min() * 1e6:.1f} um "
            f"vs nominal {spacing * 1e6:.1f} um"
        )

    depths = None
    if with_depth:
        from .analysis import characterize_site

        depths = []
        for c in site_centers:
            site = characterize_site(sol.voltages, basis, species,
                                     MagneticField(1.0), c, with_depth=True)
            depths.append(site.depth_ev)
        depths = np.array(depths)
    return CrystalSolution(sol.voltages, found, np.array(wz), depths,
                           sol.residual_rms)


@dataclass
class RacetrackSolution:
    """Ring-trap voltage set and the measured crest geometry."""

    voltages: dict[str, float]
    crest_radii: np.ndarray
    azimuths: np.ndarray
    omega_z: np.ndarray
    heights: np.ndarray
    residual_rms: float

    def report(self) -> dict:
        return {
            "voltages_v": dict(self.voltages),
            "crest_radius_mean_m": float(np.mean(self.crest_radii)),
            "crest_radii_m": self.crest_radii.tolist(),
            "azimuths_rad": self.azimuths.tolist(),
            "omega_z_hz": (self.omega_z / (2.0 * math.pi)).tolist(),
            "residual_rms_v": self.residual_rms,
        }


def _ray_crest_scan(provider, species, theta, r_lo, r_hi, h_lo, h_hi, nr=48, nz=28):
    """Crest of the axially minimized potential energy along one ray.

    Returns (radius, height, omega_z) or None when the scan sees no
    interior maximum.
    """
    rr = np.linspace(r_lo, r_hi, nr)
    zz = np.linspace(h_lo, h_hi, nz)
    pts = np.zeros((nr * nz, 3))
    pts[:, 0] = np.repeat(rr, nz) * math.cos(theta)
    pts[:, 1] = np.repeat(rr, nz) * math.sin(theta)
    pts[:, 2] = np.tile(zz, nr)
    u = (species.charge * provider.potential(pts)).reshape(nr, nz)
    kz = np.argmin(u, axis=1)
    if np.any(kz == 0) or np.any(kz == nz - 1):
        # axial minimum ran off the search window on part of the ray
        interior = (kz > 0) & (kz < nz - 1)
        if interior.sum() < 5:
            return None
        rr, u, kz = rr[interior], u[interior], kz[interior]
    umin = u[np.arange(len(rr)), kz]
    i = int(np.argmax(umin))
    if i == 0 or i == len(rr) - 1:
        return None
    # parabolic refinement of the crest radius
    a, b, c = umin[i - 1], umin[i], umin[i + 1]
    denom = a - 2.0 * b + c
    frac = 0.0 if denom == 0.0 else 0.5 * (a - c) / denom
    dr = rr[1] - rr[0]
    r_star = rr[i] + frac * dr
    z_star = zz[kz[i]]
    p = np.array([r_star * math.cos(theta), r_star * math.sin(theta), z_star])
    pos = stationary_point_along_z(provider, p)
    H = provider.hessian(pos[None, :])[0]
    kzz = species.charge * H[2, 2]
    if kzz <= 0.0:
        return None
    return float(r_star), float(pos[2]), math.sqrt(kzz / species.mass)


def stationary_point_along_z(provider, seed, iters=40):
    """Newton refinement of the axial minimum at fixed (x, y)."""
    p = np.asarray(seed, dtype=float).copy()
    for _ in range(iters):
        g = -provider.field(p[None, :])[0][2]
        H = provider.hessian(p[None, :])[0][2, 2]
        if H == 0.0:
            break
        step = -g / H
        step = max(min(step, 0.2 * p[2]), -0.2 * p[2])
        p[2] += step
        if abs(step) < 1e-12:
            break
    return p


def racetrack_voltages(
    ring_diameter: float,
    basis: ChargeBasis,
    species: ParticleSpecies,
    height: float | None = None,
    omega_z: float = 2.0 * math.pi * 5.0e5,
    reg: RegularizationConfig | None = None,
    n_rays: int = 36,
    pixel_ids=None,
) -> RacetrackSolution:
    """Ring-symmetric voltage set whose radial crest is a closed ring.

    The target is the toroidal quadrupole 0.5 k ((z - h)^2 - (rho - R)^2)
    sampled on a ring of stencils; pixels are grouped by hexagonal ring
    index (one unknown per ring) which enforces the discrete rotational
    symmetry.  The crest is then measured on ``n_rays`` azimuthal rays and
    a RidgeError raised when any ray lacks an interior crest.
    """
    R = 0.5 * ring_diameter
    pix = _pixel_set(basis.mesh, pixel_ids)
    centers = electrode_centers(basis.mesh)
    pitch = _pixel_pitch({e: centers[e] for e in pix})
    array_radius = max(np.linalg.norm(centers[e]) for e in pix) + 0.5 * pitch
    if not 0.0 < R < array_radius:
        raise InputError("ring must fit inside the pixel array")
    if height is None:
        height = 0.6 * pitch
    reg = reg or RegularizationConfig(lam=1e-6)

    rings = pixel_rings(basis.mesh, pixel_ids)
    groups: dict[str, list[str]] = {}
    for e, r in sorted(rings.items()):
        groups.setdefault(f"ring{r}", []).append(e)
    fams: dict[str, list[str]] = {}
    for e in basis.electrode_ids:
        if e not in rings:
            fams.setdefault(e.rstrip("0123456789_q"), []).append(e)
    groups.update(fams)

    k = species.mass * omega_z**2 / abs(species.charge)
    half = min(0.35 * height, 0.3 * (array_radius - R), 0.25 * R)
    azims = 2.0 * math.pi * np.arange(12) / 12
    # planar stencil in (rho, z): 3x3 cross of the half-width plus four
    # face points at twice the range
    g = np.array([-1.0, 0.0, 1.0]) * half
    dr, dz = [a.ravel() for a in np.meshgrid(g, g, indexing="ij")]
    dr = np.concatenate([dr, [2 * half, -2 * half, 0.0, 0.0]])
    dz = np.concatenate([dz, [0.0, 0.0, 2 * half, -2 * half]])
    pts, vals = [], []
    for th in azims:
        radial = np.array([math.cos(th), math.sin(th), 0.0])
        base = np.array([R * radial[0], R * radial[1], height])
        p = base[None, :] + dr[:, None] * radial[None, :]
        p[:, 2] += dz
        pts.append(p)
        vals.append(0.5 * k * (dz**2 - dr**2))
    target = TargetSpec(np.vstack(pts), np.concatenate(vals))

    sol = solve_voltages(target, reg, basis, groups=groups, free_offset=True)
    provider = BemField(basis, sol.voltages)
    thetas = 2.0 * math.pi * np.arange(n_rays) / n_rays
    radii, heights_out, wz = [], [], []
    for th in thetas:
        hit = _ray_crest_scan(
            provider, species, th, max(0.35 * R, pitch * 0.25), min(1.8 * R, 0.98 * array_radius),
            0.35 * height, 2.2 * height,
        )
        if hit is None:
            raise RidgeError(
                f"no interior crest on the ray at {math.degrees(th):.0f} deg"
            )
        radii.append(hit[0])
        heights_out.append(hit[1])
        wz.append(hit[2])
    return RacetrackSolution(
        sol.voltages,
        np.array(radii),
        thetas,
        np.array(wz),
        np.array(heights_out),
        sol.residual_rms,
    )
