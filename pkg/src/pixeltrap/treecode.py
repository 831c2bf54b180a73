"""Hierarchical multipole evaluation of centroid point-charge sums.

The electrode panels all lie in the z = 0 plane, so a quadtree over the
panel centroids is the natural clustering.  Each node carries a solid
harmonic multipole expansion of its charges about the node centre; a
target point accepts a node when side / distance <= theta and otherwise
descends, falling back to direct 1/r summation at the leaves.

This approximates the *point-charge* representation (all of a panel's
charge at its centroid), which is the summation the dense evaluation
path refines with finite-panel corrections.  theta -> 0 therefore
reproduces the direct centroid sum exactly, not the exact-panel result.

Using Schmidt seminormalized associated Legendre functions removes every
4*pi factor: with regular solids T_lm (sources) and irregular solids
U_lm (targets) about a common centre,

    1/|t - s| = sum_l sum_{m>=0} eps_m Re( T_lm(s)* U_lm(t) ),

eps_0 = 1, eps_m = 2.  Both families follow stable two-term recurrences
in cartesian components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bem import FOUR_PI_EPS0, ChargeBasis
from .errors import InputError

_LEAF_SIZE = 64
_MAX_ORDER = 28
_TARGET_EPS = 1e-7


def expansion_order(theta: float) -> int:
    """Multipole order needed for ~1e-7 truncation error at this theta.

    The worst-case source/target distance ratio under the acceptance
    test side/d <= theta is theta/sqrt(2); the geometric tail of the
    expansion then bounds the error by ratio^(p+1) / (1 - ratio).
    """
    ratio = min(theta / math.sqrt(2.0), 0.75)
    if ratio <= 0.0:
        return 2
    p_plus_1 = math.ceil(math.log(_TARGET_EPS * (1.0 - ratio)) / math.log(ratio))
    return int(min(max(p_plus_1 - 1, 2), _MAX_ORDER))


def _regular_solids(rel: np.ndarray, order: int) -> np.ndarray:
    """Regular solid harmonics T_lm for points rel (n, 3), shape (L, L, n).

    Only m >= 0 is stored; index [l, m].  L = order + 1.
    """
    n = rel.shape[0]
    L = order + 1
    T = np.zeros((L, L, n), dtype=np.complex128)
    x, y, z = rel[:, 0], rel[:, 1], rel[:, 2]
    w = x + 1j * y
    r2 = x * x + y * y + z * z
    T[0, 0] = 1.0
    for m in range(1, L):
        T[m, m] = math.sqrt((2 * m - 1) / (2.0 * m)) * w * T[m - 1, m - 1]
    for m in range(0, L - 1):
        T[m + 1, m] = math.sqrt(2 * m + 1) * z * T[m, m]
        for l in range(m + 1, L - 1):
            c1 = 2 * l + 1
            c2 = math.sqrt(l * l - m * m)
            c3 = math.sqrt((l + 1) ** 2 - m * m)
            T[l + 1, m] = (c1 * z * T[l, m] - c2 * r2 * T[l - 1, m]) / c3
    return T


def _irregular_solids(rel: np.ndarray, order: int) -> np.ndarray:
    """Irregular solid harmonics U_lm for points rel (n, 3)."""
    n = rel.shape[0]
    L = order + 1
    U = np.zeros((L, L, n), dtype=np.complex128)
    x, y, z = rel[:, 0], rel[:, 1], rel[:, 2]
    w = x + 1j * y
    r2 = x * x + y * y + z * z
    inv_r2 = 1.0 / r2
    U[0, 0] = np.sqrt(inv_r2)
    for m in range(1, L):
        U[m, m] = math.sqrt((2 * m - 1) / (2.0 * m)) * w * U[m - 1, m - 1] * inv_r2
    for m in range(0, L - 1):
        U[m + 1, m] = math.sqrt(2 * m + 1) * z * U[m, m] * inv_r2
        for l in range(m + 1, L - 1):
            c1 = 2 * l + 1
            c2 = math.sqrt(l * l - m * m)
            c3 = math.sqrt((l + 1) ** 2 - m * m)
            U[l + 1, m] = (c1 * z * U[l, m] - c2 * U[l - 1, m]) * inv_r2 / c3
    return U


@dataclass
class _Node:
    center: np.ndarray  # (2,)
    side: float
    lo: int
    hi: int
    children: list = field(default_factory=list)
    moments: np.ndarray | None = None  # (L, L) complex
    index: int = -1

    @property
    def is_leaf(self) -> bool:
        return not self.children


class ChargeTree:
    """Quadtree over in-plane source points with per-node multipoles."""

    def __init__(self, xy: np.ndarray, leaf_size: int = _LEAF_SIZE):
        self.xy = np.asarray(xy, dtype=float)
        n = self.xy.shape[0]
        self.perm = np.arange(n)
        lo_corner = self.xy.min(axis=0)
        hi_corner = self.xy.max(axis=0)
        center = 0.5 * (lo_corner + hi_corner)
        side = float(np.max(hi_corner - lo_corner)) * 1.0000001 + 1e-300
        self.root = _Node(center, side, 0, n)
        self.leaf_size = leaf_size
        self._split(self.root)
        self.sorted_xy = self.xy[self.perm]
        self._charges: np.ndarray | None = None
        self._order: int | None = None

    def _split(self, node: _Node) -> None:
        count = node.hi - node.lo
        if count <= self.leaf_size or node.side < 1e-15:
            return
        idx = self.perm[node.lo:node.hi]
        pts = self.xy[idx]
        right = pts[:, 0] >= node.center[0]
        up = pts[:, 1] >= node.center[1]
        quad = right.astype(int) + 2 * up.astype(int)
        order = np.argsort(quad, kind="stable")
        self.perm[node.lo:node.hi] = idx[order]
        counts = np.bincount(quad, minlength=4)
        offsets = node.lo + np.concatenate([[0], np.cumsum(counts)])
        half = 0.5 * node.side
        for q in range(4):
            if counts[q] == 0:
                continue
            cx = node.center[0] + (0.25 if q & 1 else -0.25) * node.side
            cy = node.center[1] + (0.25 if q & 2 else -0.25) * node.side
            child = _Node(np.array([cx, cy]), half, offsets[q], offsets[q + 1])
            self._split(child)
            node.children.append(child)

    def _all_nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(node.children)

    def set_charges(self, charges: np.ndarray, order: int) -> None:
        """Compute every node's multipole moments for this charge vector.

        One batched pass: every (node, member source) pair contributes a
        regular solid harmonic; a per-pair node id then scatters the
        charge-weighted harmonics into the node moment table.
        """
        charges = np.asarray(charges, dtype=float)
        sorted_q = charges[self.perm]
        nodes = list(self._all_nodes())
        rel_parts, seg_parts, q_parts = [], [], []
        for k, node in enumerate(nodes):
            node.index = k
            pts = self.sorted_xy[node.lo:node.hi]
            rel_parts.append(pts - node.center)
            seg_parts.append(np.full(pts.shape[0], k))
            q_parts.append(sorted_q[node.lo:node.hi])
        rel = np.concatenate(rel_parts)
        seg = np.concatenate(seg_parts)
        qw = np.concatenate(q_parts)
        T = _regular_solids(
            np.column_stack([rel, np.zeros(rel.shape[0])]), order
        )
        L = order + 1
        moments = np.zeros((len(nodes), L, L), dtype=np.complex128)
        for l in range(L):
            for m in range(0, l + 1):
                if (l + m) % 2:
                    continue  # coplanar sources: odd l+m moments vanish
                tv = T[l, m]
                moments[:, l, m] = np.bincount(
                    seg, weights=qw * tv.real, minlength=len(nodes)
                ) - 1j * np.bincount(seg, weights=qw * tv.imag, minlength=len(nodes))
        for k, node in enumerate(nodes):
            node.moments = moments[k]
        self._node_moments = moments
        self._node_list = nodes
        self._charges = sorted_q
        self._order = order

    def potential(self, points: np.ndarray, theta: float) -> np.ndarray:
        """Sum of q_j / |r - r_j| for every target (no 4*pi*eps0 factor)."""
        if self._charges is None:
            raise RuntimeError("set_charges must run before evaluation")
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(points.shape[0])
        far_rel, far_seg, far_tgt = [], [], []
        leaf_pairs = []
        self._classify(
            self.root, points, np.arange(points.shape[0]), theta,
            far_rel, far_seg, far_tgt, leaf_pairs,
        )
        if far_rel:
            rel = np.concatenate(far_rel)
            seg = np.concatenate(far_seg)
            tgt = np.concatenate(far_tgt)
            U = _irregular_solids(rel, self._order)
            contrib = np.zeros(rel.shape[0])
            mom = self._node_moments
            for l in range(self._order + 1):
                for m in range(0, l + 1, 1):
                    if (l + m) % 2:
                        continue
                    w = 1.0 if m == 0 else 2.0
                    mr = mom[:, l, m].real[seg]
                    mi = mom[:, l, m].imag[seg]
                    contrib += w * (mr * U[l, m].real - mi * U[l, m].imag)
            out += np.bincount(tgt, weights=contrib, minlength=points.shape[0])
        for node, idx in leaf_pairs:
            pts = points[idx]
            src = self.sorted_xy[node.lo:node.hi]
            q = self._charges[node.lo:node.hi]
            dx = pts[:, 0][:, None] - src[:, 0][None, :]
            dy = pts[:, 1][:, None] - src[:, 1][None, :]
            r = np.sqrt(dx * dx + dy * dy + pts[:, 2][:, None] ** 2)
            out[idx] += (q[None, :] / r).sum(axis=1)
        return out

    def _classify(self, node, points, idx, theta,
                  far_rel, far_seg, far_tgt, leaf_pairs):
        rel = points[idx] - np.array([node.center[0], node.center[1], 0.0])
        d2 = np.einsum("ij,ij->i", rel, rel)
        far = d2 * theta * theta >= node.side * node.side
        if np.any(far):
            far_rel.append(rel[far])
            far_seg.append(np.full(int(far.sum()), node.index))
            far_tgt.append(idx[far])
            near = ~far
            if not np.any(near):
                return
            idx = idx[near]
        if node.is_leaf:
            leaf_pairs.append((node, idx))
        else:
            for child in node.children:
                self._classify(child, points, idx, theta,
                               far_rel, far_seg, far_tgt, leaf_pairs)


def direct_potential(
    xy: np.ndarray, charges: np.ndarray, points: np.ndarray
) -> np.ndarray:
    """Reference centroid point-charge sum, chunked, in volts * 4*pi*eps0."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.zeros(points.shape[0])
    chunk = max(1, int(4e6 / max(xy.shape[0], 1)))
    for lo in range(0, points.shape[0], chunk):
        hi = min(lo + chunk, points.shape[0])
        p = points[lo:hi]
        dx = p[:, 0][:, None] - xy[:, 0][None, :]
        dy = p[:, 1][:, None] - xy[:, 1][None, :]
        r = np.sqrt(dx * dx + dy * dy + p[:, 2][:, None] ** 2)
        out[lo:hi] = (charges[None, :] / r).sum(axis=1)
    return out


class TreecodeField:
    """Fast potential evaluator for one voltage assignment."""

    def __init__(self, basis: ChargeBasis, voltages: dict[str, float],
                 theta: float = 0.5):
        if not 0.0 < theta <= 1.0:
            raise InputError("theta must satisfy 0 < theta <= 1")
        self.theta = theta
        self.order = expansion_order(theta)
        self.charges = basis.charge_vector(voltages)
        self.tree = ChargeTree(basis.mesh.centroids)
        self.tree.set_charges(self.charges, self.order)

    def potential(self, points) -> np.ndarray:
        return self.tree.potential(points, self.theta) / FOUR_PI_EPS0


def treecode_potential_at(
    points,
    voltages: dict[str, float],
    basis: ChargeBasis,
    theta: float = 0.5,
) -> np.ndarray:
    """Multipole-accelerated potential of the centroid charge sum."""
    return TreecodeField(basis, voltages, theta).potential(points)
