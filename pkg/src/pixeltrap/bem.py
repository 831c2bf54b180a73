"""Boundary-element electrostatics on flat panels in the z = 0 plane.

Each panel carries a uniform surface charge density.  The potential of
such a panel has a closed form built from per-edge terms: with t0 the
in-plane distance from the field point's projection to the edge line
(positive on the interior side), s-/s+ the edge endpoint coordinates
relative to the foot of that perpendicular, R-/R+ the 3D distances to
the endpoints and h the height above the plane,

    Int dA / R = sum_edges [ t0 * ln((R+ + s+)/(R- + s-)) ] - |h| * Omega

where Omega (the subtended solid angle) collects per-edge arctangent
terms.  Gradients and second derivatives of the edge terms are also in
closed form, so fields and Hessians need no finite differencing.  The
Hessian zz component follows from the Laplace equation, which makes the
returned Hessian exactly traceless.

Collocation at panel centroids with these exact integrals (including the
exact self term on the diagonal) gives the influence matrix; a dense LU
factorisation solved once per electrode yields the unit-voltage charge
basis that everything downstream reuses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .constants import eps0
from .errors import ComputationError, InputError
from .geometry import MeshError, PanelMesh

FOUR_PI_EPS0 = 4.0 * math.pi * eps0

MAX_DENSE_PANELS = 20000

VOLTAGE_SANITY_BOUND = 1000.0  # volts; far above any surface-breakdown level

_TINY = 1e-30


class SolveError(ComputationError):
    """The boundary condition solve did not reach the required residual."""


class ConductorEvaluationError(InputError):
    """Potential or field requested at z = 0 inside an electrode."""


def _edge_geometry(verts: np.ndarray, points: np.ndarray):
    """Per-edge quantities for a block of panels and evaluation points.

    verts: (B, 4, 2) panel vertices (triangles repeat the first vertex),
    points: (P, 3).  Yields one tuple per edge k with arrays of shape
    (P, B): t0, s1, s2, R1, R2, plus the edge unit vector (B, 2) and a
    validity mask for degenerate (zero length) edges.
    """
    px = points[:, 0][:, None]
    py = points[:, 1][:, None]
    h = points[:, 2][:, None]
    for k in range(4):
        a = verts[:, k]
        b = verts[:, (k + 1) % 4]
        e = b - a
        length = np.hypot(e[:, 0], e[:, 1])
        ok = length > _TINY
        inv = np.where(ok, 1.0 / np.maximum(length, _TINY), 0.0)
        ex = e[:, 0] * inv
        ey = e[:, 1] * inv
        dxa = px - a[None, :, 0]
        dya = py - a[None, :, 1]
        dxb = px - b[None, :, 0]
        dyb = py - b[None, :, 1]
        # inward normal of a CCW polygon is z_hat x e_hat = (-ey, ex)
        t0 = -dxa * ey[None, :] + dya * ex[None, :]
        s1 = -(dxa * ex[None, :] + dya * ey[None, :])
        s2 = -(dxb * ex[None, :] + dyb * ey[None, :])
        R1 = np.sqrt(dxa * dxa + dya * dya + h * h)
        R2 = np.sqrt(dxb * dxb + dyb * dyb + h * h)
        yield ok, ex, ey, t0, s1, s2, R1, R2, h


def _log_term(t0, s1, s2, R1, R2):
    """t0 * ln((R2+s2)/(R1+s1)) with the t0 -> 0 limit taken safely."""
    num = np.maximum(R2 + s2, _TINY)
    den = np.maximum(R1 + s1, _TINY)
    ln = np.log(num / den)
    return np.where(np.abs(t0) > _TINY, t0 * ln, 0.0), ln


def _atan_term(t0, s1, s2, R1, R2, h):
    """Per-edge solid-angle contribution (arctangent difference)."""
    ah = np.abs(h)
    r0sq = t0 * t0 + h * h
    d2 = r0sq + ah * R2
    d1 = r0sq + ah * R1
    with np.errstate(invalid="ignore", divide="ignore"):
        b2 = np.arctan2(t0 * s2, d2)
        b1 = np.arctan2(t0 * s1, d1)
    beta = b2 - b1
    return np.where(r0sq > _TINY * _TINY, beta, 0.0)


def panel_potential_integrals(verts: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Int dA'/|r - r'| over each panel, at each point.  Shape (P, B)."""
    points = np.atleast_2d(points)
    total = np.zeros((points.shape[0], verts.shape[0]))
    omega = np.zeros_like(total)
    ah = np.abs(points[:, 2])[:, None]
    for ok, ex, ey, t0, s1, s2, R1, R2, h in _edge_geometry(verts, points):
        term, _ = _log_term(t0, s1, s2, R1, R2)
        beta = _atan_term(t0, s1, s2, R1, R2, h)
        total += np.where(ok[None, :], term, 0.0)
        omega += np.where(ok[None, :], beta, 0.0)
    return total - ah * omega


def panel_field_integrals(verts: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Gradient of the potential integral w.r.t. the point.  Shape (P, B, 3).

    The z component on the panel plane itself (h = 0) is returned as the
    principal value (zero); field evaluation on the electrode surface is
    not meaningful for a charged sheet.
    """
    points = np.atleast_2d(points)
    P, B = points.shape[0], verts.shape[0]
    grad = np.zeros((P, B, 3))
    omega = np.zeros((P, B))
    for ok, ex, ey, t0, s1, s2, R1, R2, h in _edge_geometry(verts, points):
        _, ln = _log_term(t0, s1, s2, R1, R2)
        ln = np.where(ok[None, :], ln, 0.0)
        beta = np.where(ok[None, :], _atan_term(t0, s1, s2, R1, R2, h), 0.0)
        # in-plane gradient: sum of inward normals times the edge log
        grad[..., 0] += (-ey)[None, :] * ln
        grad[..., 1] += ex[None, :] * ln
        omega += beta
    grad[..., 2] = -np.sign(points[:, 2])[:, None] * omega
    return grad


def panel_hessian_integrals(verts: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Second derivatives of the potential integral.  Shape (P, B, 3, 3).

    Off-plane points only (|z| > 0); the mixed z derivatives come from
    differentiating the edge logs in z and the zz component closes the
    trace, so the result is exactly symmetric and traceless.
    """
    points = np.atleast_2d(points)
    P, B = points.shape[0], verts.shape[0]
    H = np.zeros((P, B, 3, 3))
    for ok, ex, ey, t0, s1, s2, R1, R2, h in _edge_geometry(verts, points):
        num = np.maximum(R2 + s2, _TINY)
        den = np.maximum(R1 + s1, _TINY)
        invR2 = 1.0 / np.maximum(R2, _TINY)
        invR1 = 1.0 / np.maximum(R1, _TINY)
        # grad ln(R + s) = ((r - v)/R - e_hat) / (R + s) at each endpoint v;
        # the in-plane part of r - v is -s * e_hat + t0 * n_hat_in
        rbx = -s2 * ex[None, :] + t0 * (-ey[None, :])
        rby = -s2 * ey[None, :] + t0 * ex[None, :]
        rax = -s1 * ex[None, :] + t0 * (-ey[None, :])
        ray = -s1 * ey[None, :] + t0 * ex[None, :]
        gx2 = (rbx * invR2 - ex[None, :]) / num
        gy2 = (rby * invR2 - ey[None, :]) / num
        gx1 = (rax * invR1 - ex[None, :]) / den
        gy1 = (ray * invR1 - ey[None, :]) / den
        gz2 = h * invR2 / num
        gz1 = h * invR1 / den
        dlnx = np.where(ok[None, :], gx2 - gx1, 0.0)
        dlny = np.where(ok[None, :], gy2 - gy1, 0.0)
        dlnz = np.where(ok[None, :], gz2 - gz1, 0.0)
        nx = (-ey)[None, :]
        ny = ex[None, :]
        H[..., 0, 0] += nx * dlnx
        H[..., 0, 1] += 0.5 * (nx * dlny + ny * dlnx)
        H[..., 1, 1] += ny * dlny
        H[..., 0, 2] += nx * dlnz
        H[..., 1, 2] += ny * dlnz
    H[..., 1, 0] = H[..., 0, 1]
    H[..., 2, 0] = H[..., 0, 2]
    H[..., 2, 1] = H[..., 1, 2]
    H[..., 2, 2] = -(H[..., 0, 0] + H[..., 1, 1])
    return H


# ---------------------------------------------------------------------------
# influence matrix and charge basis


def _panel_blocks(n: int, per_block: int):
    for start in range(0, n, per_block):
        yield start, min(start + per_block, n)


def assemble(mesh: PanelMesh) -> np.ndarray:
    """Dense influence matrix A with A[i, j] = potential at centroid i of a
    unit total charge spread uniformly over panel j (V/C)."""
    n = len(mesh)
    if n > MAX_DENSE_PANELS:
        raise MeshError(
            f"dense influence matrix limited to {MAX_DENSE_PANELS} panels, got {n}"
        )
    pts = np.column_stack([mesh.centroids, np.zeros(n)])
    A = np.empty((n, n))
    per_block = max(1, int(4e6 / max(n, 1)))
    for lo, hi in _panel_blocks(n, per_block):
        I = panel_potential_integrals(mesh.vertices[lo:hi], pts)
        A[:, lo:hi] = I / (FOUR_PI_EPS0 * mesh.areas[lo:hi])[None, :]
    return A


@dataclass
class ChargeBasis:
    """Unit-voltage charge solutions, one column per electrode.

    charges[:, k] is the panel charge vector (coulombs) that sets
    electrode k to 1 V and all others to 0 V.
    """

    mesh: PanelMesh
    charges: np.ndarray  # (N, K)
    residual: float

    @property
    def electrode_ids(self) -> list[str]:
        return self.mesh.electrode_ids

    def charge_vector(self, voltages: dict[str, float]) -> np.ndarray:
        """Panel charges for an arbitrary voltage assignment."""
        v = voltage_vector(voltages, self.electrode_ids)
        return self.charges @ v

    def capacitance_matrix(self) -> np.ndarray:
        """(K, K) matrix of total electrode charge per unit voltage."""
        inc = self.mesh.incidence_matrix()
        return inc.T @ self.charges

    def save(self, path) -> None:
        np.savez_compressed(
            path,
            vertices=self.mesh.vertices,
            nvert=self.mesh.nvert,
            electrode_index=self.mesh.electrode_index,
            electrode_ids=np.array(self.mesh.electrode_ids),
            edge_flags=self.mesh.edge_flags,
            charges=self.charges,
            residual=self.residual,
        )

    @classmethod
    def load(cls, path) -> "ChargeBasis":
        with np.load(path, allow_pickle=False) as d:
            mesh = PanelMesh(
                d["vertices"],
                d["nvert"],
                d["electrode_index"],
                [str(s) for s in d["electrode_ids"]],
                d["edge_flags"],
            )
            return cls(mesh, d["charges"], float(d["residual"]))


def solve_basis(mesh: PanelMesh, matrix: np.ndarray | None = None) -> ChargeBasis:
    """Solve the collocation system once per electrode.

    Returns the charge basis; raises SolveError if the boundary-condition
    residual exceeds 1e-10 V even after one step of iterative refinement.
    """
    A = assemble(mesh) if matrix is None else matrix
    rhs = mesh.incidence_matrix()
    lu, piv = scipy.linalg.lu_factor(A)
    q = scipy.linalg.lu_solve((lu, piv), rhs)
    resid = A @ q - rhs
    worst = float(np.max(np.abs(resid)))
    if worst > 1e-10:
        q -= scipy.linalg.lu_solve((lu, piv), resid)
        worst = float(np.max(np.abs(A @ q - rhs)))
        if worst > 1e-10:
            raise SolveError(f"boundary residual {worst:.3e} V exceeds 1e-10 V")
    return ChargeBasis(mesh, q, worst)


def voltage_vector(
    voltages: dict[str, float],
    electrode_ids: list[str],
    default: float | None = None,
) -> np.ndarray:
    """Order a voltage mapping along electrode_ids, validating the names."""
    unknown = set(voltages) - set(electrode_ids)
    if unknown:
        raise InputError(
            f"voltage set names unknown electrode(s): {sorted(unknown)}"
        )
    out = np.empty(len(electrode_ids))
    for k, eid in enumerate(electrode_ids):
        if eid in voltages:
            out[k] = float(voltages[eid])
        elif default is not None:
            out[k] = default
        else:
            raise InputError(f"voltage set is missing electrode {eid!r}")
    if np.any(np.abs(out) > VOLTAGE_SANITY_BOUND):
        worst = float(np.max(np.abs(out)))
        raise InputError(
            f"voltage magnitude {worst:.1f} V exceeds the "
            f"{VOLTAGE_SANITY_BOUND:.0f} V sanity bound"
        )
    return out


# ---------------------------------------------------------------------------
# evaluation


def _check_off_conductor(mesh: PanelMesh, points: np.ndarray) -> None:
    """Reject points that sit at z = 0 inside an electrode panel."""
    on_plane = np.nonzero(points[:, 2] == 0.0)[0]
    if on_plane.size == 0:
        return
    pts = points[on_plane, :2]
    for lo, hi in _panel_blocks(len(mesh), 2048):
        v = mesh.vertices[lo:hi]
        e = np.roll(v, -1, axis=1) - v
        rel = pts[:, None, None, :] - v[None, :, :, :]
        cross = e[None, :, :, 0] * rel[..., 1] - e[None, :, :, 1] * rel[..., 0]
        inside = np.all(cross >= 0.0, axis=2)
        if np.any(inside):
            k = on_plane[np.nonzero(np.any(inside, axis=1))[0][0]]
            raise ConductorEvaluationError(
                f"point {points[k].tolist()} lies on an electrode surface"
            )


def _charge_weighted(kernel, mesh: PanelMesh, charges: np.ndarray, points: np.ndarray,
                     extra_shape=()):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.zeros((points.shape[0],) + extra_shape)
    weights = charges / (FOUR_PI_EPS0 * mesh.areas)
    per_block = max(16, int(2e6 / max(points.shape[0], 1)))
    for lo, hi in _panel_blocks(len(mesh), per_block):
        vals = kernel(mesh.vertices[lo:hi], points)
        out += np.tensordot(vals, weights[lo:hi], axes=([1], [0]))
    return out


class BemField:
    """Potential, field and Hessian for one voltage assignment.

    This is the reference (exact) evaluation path: every panel uses the
    analytic integrals at every point.
    """

    def __init__(self, basis: ChargeBasis, voltages: dict[str, float]):
        self.basis = basis
        self.voltages = dict(voltages)
        self._q = basis.charge_vector(voltages)

    def potential(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        _check_off_conductor(self.basis.mesh, points)
        return _charge_weighted(
            panel_potential_integrals, self.basis.mesh, self._q, points
        )

    def field(self, points) -> np.ndarray:
        """Electric field E = -grad(phi) in V/m, shape (P, 3)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        _check_off_conductor(self.basis.mesh, points)
        g = _charge_weighted(
            panel_field_integrals, self.basis.mesh, self._q, points, (3,)
        )
        return -g

    def hessian(self, points) -> np.ndarray:
        """Second-derivative matrix of the potential, shape (P, 3, 3)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        _check_off_conductor(self.basis.mesh, points)
        return _charge_weighted(
            panel_hessian_integrals, self.basis.mesh, self._q, points, (3, 3)
        )


def potential_at(points, voltages: dict[str, float], basis: ChargeBasis) -> np.ndarray:
    """Potential (V) at one or more (x, y, z) points."""
    return BemField(basis, voltages).potential(points)


def field_at(points, voltages: dict[str, float], basis: ChargeBasis) -> np.ndarray:
    return BemField(basis, voltages).field(points)


def hessian_at(points, voltages: dict[str, float], basis: ChargeBasis) -> np.ndarray:
    return BemField(basis, voltages).hessian(points)


def electrode_response(basis: ChargeBasis, points) -> np.ndarray:
    """(P, K) matrix: potential at each point per unit electrode voltage."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    mesh = basis.mesh
    weights = basis.charges / (FOUR_PI_EPS0 * mesh.areas)[:, None]
    out = np.zeros((points.shape[0], basis.charges.shape[1]))
    per_block = max(16, int(2e6 / max(points.shape[0], 1)))
    for lo, hi in _panel_blocks(len(mesh), per_block):
        I = panel_potential_integrals(mesh.vertices[lo:hi], points)
        out += I @ weights[lo:hi]
    return out


def electrode_field_response(basis: ChargeBasis, points) -> np.ndarray:
    """(P, K, 3) electric field at each point per unit electrode voltage."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    mesh = basis.mesh
    weights = basis.charges / (FOUR_PI_EPS0 * mesh.areas)[:, None]
    out = np.zeros((points.shape[0], basis.charges.shape[1], 3))
    per_block = max(16, int(1e6 / max(points.shape[0], 1)))
    for lo, hi in _panel_blocks(len(mesh), per_block):
        g = panel_field_integrals(mesh.vertices[lo:hi], points)
        out += np.einsum("pbc,bk->pkc", -g, weights[lo:hi])
    return out


# ---------------------------------------------------------------------------
# grid sampling


@dataclass
class PotentialGrid:
    """Potential sampled on a regular cartesian grid."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    phi: np.ndarray  # shape (len(x), len(y), len(z))

    def save_csv(self, path) -> None:
        xx, yy, zz = np.meshgrid(self.x, self.y, self.z, indexing="ij")
        table = np.column_stack(
            [xx.ravel(), yy.ravel(), zz.ravel(), self.phi.ravel()]
        )
        np.savetxt(path, table, delimiter=",", header="x,y,z,phi", comments="")

    def save_binary(self, path) -> None:
        """Raw float64 row-major dump plus a JSON sidecar with the axes."""
        import json

        path = str(path)
        self.phi.astype(np.float64).tofile(path)
        sidecar = {
            "shape": list(self.phi.shape),
            "order": "row-major",
            "dtype": "float64",
            "x": self.x.tolist(),
            "y": self.y.tolist(),
            "z": self.z.tolist(),
        }
        with open(path + ".json", "w") as fh:
            json.dump(sidecar, fh)


def grid_sample(
    region: tuple[tuple[float, float], tuple[float, float], tuple[float, float]],
    resolution: tuple[int, int, int],
    voltages: dict[str, float],
    basis: ChargeBasis,
) -> PotentialGrid:
    """Sample the potential on a regular grid over an axis-aligned box.

    region is ((xlo, xhi), (ylo, yhi), (zlo, zhi)); the box must not dip
    below the electrode plane.  resolution gives the number of samples
    per axis (1 collapses that axis to its lower bound).
    """
    if region[2][0] < 0.0:
        raise InputError("grid region extends below the electrode plane")
    axes = []
    for (lo, hi), n in zip(region, resolution):
        n = int(n)
        if n < 1:
            raise InputError("grid resolution must be at least 1 per axis")
        if hi < lo:
            raise InputError("grid region must have hi >= lo on every axis")
        axes.append(np.linspace(lo, hi, n) if n > 1 else np.array([lo]))
    x, y, z = axes
    xx, yy, zz = np.meshgrid(x, y, z, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])
    fld = BemField(basis, voltages)
    phi = np.empty(pts.shape[0])
    chunk = 4096
    for lo_i in range(0, pts.shape[0], chunk):
        hi_i = min(lo_i + chunk, pts.shape[0])
        phi[lo_i:hi_i] = fld.potential(pts[lo_i:hi_i])
    return PotentialGrid(x, y, z, phi.reshape(len(x), len(y), len(z)))
