"""Electrode layouts and panel meshes for planar pixel traps.

The trap surface is a plane (z = 0) tiled with electrodes: a hexagonal
array of pixel electrodes, a quartered guard annulus around it and an
outer plane split into four segments.  All lengths are metres.

Polygons are stored counter-clockwise as (n, 2) float arrays.  Adjacent
electrodes are separated by a uniform fabrication gap: hexagons are the
lattice cells shrunk by half a gap, annular electrodes are cut along the
lines x = +-gap/2 and y = +-gap/2 so that facing edges are exactly one
gap apart.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

SQRT3 = math.sqrt(3.0)


class LayoutError(InputError):
    """Invalid layout geometry or layout file contents."""


class MeshError(InputError):
    """A panel mesh cannot be built under the requested constraints."""


# ---------------------------------------------------------------------------
# polygons


def polygon_area(poly: np.ndarray) -> float:
    """Signed shoelace area of a closed polygon given as (n, 2) vertices."""
    x = poly[:, 0]
    y = poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_centroid(poly: np.ndarray) -> np.ndarray:
    """Area centroid of a simple polygon."""
    x = poly[:, 0]
    y = poly[:, 1]
    xn = np.roll(x, -1)
    yn = np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * np.sum(cross)
    if abs(a) < 1e-300:
        return poly.mean(axis=0)
    cx = np.sum((x + xn) * cross) / (6.0 * a)
    cy = np.sum((y + yn) * cross) / (6.0 * a)
    return np.array([cx, cy])


def _ensure_ccw(poly: np.ndarray) -> np.ndarray:
    return poly if polygon_area(poly) > 0.0 else poly[::-1].copy()


# ---------------------------------------------------------------------------
# electrodes and layouts


@dataclass
class Electrode:
    """A single planar electrode: identifier, group tag and outline."""

    id: str
    group: str
    polygon: np.ndarray

    def __post_init__(self):
        poly = np.asarray(self.polygon, dtype=float)
        if poly.ndim != 2 or poly.shape[1] != 2 or poly.shape[0] < 3:
            raise LayoutError(f"electrode {self.id!r}: polygon must be (n>=3, 2)")
        if abs(polygon_area(poly)) < 1e-300:
            raise LayoutError(f"electrode {self.id!r}: degenerate polygon")
        self.polygon = _ensure_ccw(poly)

    @property
    def area(self) -> float:
        return polygon_area(self.polygon)

    @property
    def centroid(self) -> np.ndarray:
        return polygon_centroid(self.polygon)


@dataclass
class ElectrodeLayout:
    """A set of electrodes plus the lattice parameters they were built from."""

    electrodes: list[Electrode]
    circumcircle_diameter: float
    gap_width: float
    n_pixel_rings: int = 0

    def __post_init__(self):
        seen = set()
        for el in self.electrodes:
            if el.id in seen:
                raise LayoutError(f"duplicate electrode id {el.id!r}")
            seen.add(el.id)

    def __iter__(self):
        return iter(self.electrodes)

    def __len__(self):
        return len(self.electrodes)

    @property
    def ids(self) -> list[str]:
        return [el.id for el in self.electrodes]

    def by_id(self, electrode_id: str) -> Electrode:
        for el in self.electrodes:
            if el.id == electrode_id:
                return el
        raise KeyError(electrode_id)

    def group_ids(self, group: str) -> list[str]:
        return [el.id for el in self.electrodes if el.group == group]

    @property
    def pixel_ids(self) -> list[str]:
        return self.group_ids("pixel")

    def pixel_ring(self, electrode_id: str) -> int:
        """Ring index of a pixel electrode (0 = centre)."""
        el = self.by_id(electrode_id)
        if el.group != "pixel":
            raise KeyError(f"{electrode_id!r} is not a pixel electrode")
        pitch = SQRT3 * 0.5 * self.circumcircle_diameter
        c = el.centroid
        # invert the axial lattice coordinates from the centre position
        j = round(c[1] / (pitch * SQRT3 / 2.0))
        i = round(c[0] / pitch - 0.5 * j)
        return max(abs(i), abs(j), abs(i + j))

    def pixel_array_radius(self) -> float:
        """Largest vertex distance from the origin over all pixel electrodes."""
        r = 0.0
        for el in self.electrodes:
            if el.group == "pixel":
                r = max(r, float(np.max(np.hypot(el.polygon[:, 0], el.polygon[:, 1]))))
        return r


# ---------------------------------------------------------------------------
# hexagonal lattice

# axial lattice basis; neighbours sit across hexagon flats
_HEX_DELTAS = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)]


def hex_ring_count(n_rings: int) -> int:
    """Number of hexagons in a filled array with the given ring count."""
    return 1 + 3 * n_rings * (n_rings + 1)


def hex_ring_coords(ring: int) -> list[tuple[int, int]]:
    """Axial (i, j) coordinates of the hexagons in one lattice ring."""
    if ring == 0:
        return [(0, 0)]
    coords = []
    i, j = ring, 0  # start at the +x corner, walk counter-clockwise
    for k in range(6):
        di, dj = _HEX_DELTAS[(k + 2) % 6]
        for _ in range(ring):
            coords.append((i, j))
            i, j = i + di, j + dj
    return coords


def hex_center(i: int, j: int, pitch: float) -> np.ndarray:
    """Cartesian centre of lattice cell (i, j) for centre-to-centre pitch."""
    x = pitch * (i + 0.5 * j)
    y = pitch * (SQRT3 / 2.0) * j
    return np.array([x, y])


def hexagon_vertices(center: np.ndarray, circumradius: float) -> np.ndarray:
    """Vertices of a regular hexagon with flats facing the lattice axes."""
    ang = np.deg2rad(30.0 + 60.0 * np.arange(6))
    return np.column_stack(
        [center[0] + circumradius * np.cos(ang), center[1] + circumradius * np.sin(ang)]
    )


def _arc(r: float, t0: float, t1: float, n: int) -> np.ndarray:
    t = np.linspace(t0, t1, n + 1)
    return np.column_stack([r * np.cos(t), r * np.sin(t)])


def annular_sector_polygon(
    r_in: float, r_out: float, quadrant: int, cut_halfwidth: float, n_arc: int = 48
) -> np.ndarray:
    """Quarter-annulus outline with straight cuts parallel to the axes.

    The sector for quadrant q is the annulus r_in <= r <= r_out clipped to
    the region beyond the lines x = +-cut_halfwidth and y = +-cut_halfwidth,
    rotated by q * 90 degrees.  Facing cut edges of neighbouring quadrants
    are therefore exactly 2 * cut_halfwidth apart.
    """
    if not (0.0 < r_in < r_out):
        raise LayoutError("annular sector needs 0 < r_in < r_out")
    if cut_halfwidth >= r_in:
        raise LayoutError("cut half-width exceeds the inner radius")
    a_in = math.asin(cut_halfwidth / r_in)
    b_in = math.acos(cut_halfwidth / r_in)
    a_out = math.asin(cut_halfwidth / r_out)
    b_out = math.acos(cut_halfwidth / r_out)
    outer = _arc(r_out, a_out, b_out, n_arc)
    inner = _arc(r_in, b_in, a_in, n_arc)  # walked back for a CCW outline
    poly = np.vstack([outer, inner])
    if quadrant % 4:
        rot = quadrant % 4
        c, s = math.cos(rot * math.pi / 2.0), math.sin(rot * math.pi / 2.0)
        poly = poly @ np.array([[c, s], [-s, c]])
    return poly


def build_pixel_layout(
    n_rings: int,
    circumcircle_diameter: float,
    gap_width: float,
    guard_inner_radius: float | None = None,
    guard_outer_radius: float | None = None,
    plane_outer_radius: float | None = None,
    arc_segments: int = 48,
) -> ElectrodeLayout:
    """Build the standard layout: pixel array, quartered guard, outer plane.

    Radii default to guard_inner = 1.05 * pixel array radius, guard_outer =
    2 * guard_inner and plane_outer = 2 * guard_outer.  Pass explicit values
    to override.  Gaps between all adjacent electrodes equal ``gap_width``.
    """
    if n_rings < 0:
        raise LayoutError("n_rings must be >= 0")
    if circumcircle_diameter <= 0.0:
        raise LayoutError("circumcircle_diameter must be positive")
    if not (0.0 < gap_width < circumcircle_diameter / 4.0):
        raise LayoutError("gap_width must lie in (0, circumcircle_diameter / 4)")

    a0 = circumcircle_diameter / 2.0
    a_eff = a0 - gap_width / SQRT3  # shrink each hexagon by half a gap
    pitch = SQRT3 * a0

    electrodes: list[Electrode] = []
    for ring in range(n_rings + 1):
        for n, (i, j) in enumerate(hex_ring_coords(ring)):
            c = hex_center(i, j, pitch)
            electrodes.append(
                Electrode(f"pix_r{ring}_{n:02d}", "pixel", hexagon_vertices(c, a_eff))
            )

    array_radius = 0.0
    for el in electrodes:
        array_radius = max(array_radius, float(np.max(np.hypot(*el.polygon.T))))

    if guard_inner_radius is None:
        guard_inner_radius = 1.05 * array_radius
    if guard_outer_radius is None:
        guard_outer_radius = 2.0 * guard_inner_radius
    if plane_outer_radius is None:
        plane_outer_radius = 2.0 * guard_outer_radius

    if guard_inner_radius <= array_radius + gap_width:
        raise LayoutError(
            "guard annulus overlaps the pixel array: guard_inner_radius "
            f"{guard_inner_radius:g} <= array radius {array_radius:g} + gap"
        )
    if not (guard_inner_radius < guard_outer_radius < plane_outer_radius):
        raise LayoutError("need guard_inner < guard_outer < plane_outer")

    half_gap = gap_width / 2.0
    for q in range(4):
        electrodes.append(
            Electrode(
                f"guard_q{q}",
                "guard",
                annular_sector_polygon(
                    guard_inner_radius, guard_outer_radius, q, half_gap, arc_segments
                ),
            )
        )
    for q in range(4):
        electrodes.append(
            Electrode(
                f"outer_q{q}",
                "plane",
                annular_sector_polygon(
                    guard_outer_radius + gap_width,
                    plane_outer_radius,
                    q,
                    half_gap,
                    arc_segments,
                ),
            )
        )
    return ElectrodeLayout(electrodes, circumcircle_diameter, gap_width, n_rings)


# ---------------------------------------------------------------------------
# layout files


def save_layout(layout: ElectrodeLayout, path) -> None:
    """Write a layout to JSON (lengths in metres)."""
    doc = {
        "circumcircle_diameter": layout.circumcircle_diameter,
        "gap_width": layout.gap_width,
        "n_pixel_rings": layout.n_pixel_rings,
        "electrodes": [
            {"id": el.id, "group": el.group, "polygon": el.polygon.tolist()}
            for el in layout.electrodes
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_layout(path) -> ElectrodeLayout:
    """Read a layout from JSON, validating ids and polygon shapes."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise LayoutError(f"{path}: not valid JSON ({exc})") from exc
    for key in ("circumcircle_diameter", "gap_width", "electrodes"):
        if key not in doc:
            raise LayoutError(f"{path}: missing required field {key!r}")
    electrodes = []
    for k, entry in enumerate(doc["electrodes"]):
        for key in ("id", "group", "polygon"):
            if key not in entry:
                raise LayoutError(f"{path}: electrodes[{k}] missing field {key!r}")
        try:
            electrodes.append(
                Electrode(entry["id"], entry["group"], np.asarray(entry["polygon"], float))
            )
        except (LayoutError, ValueError) as exc:
            raise LayoutError(f"{path}: electrodes[{k}] ({entry.get('id')!r}): {exc}") from exc
    return ElectrodeLayout(
        electrodes,
        float(doc["circumcircle_diameter"]),
        float(doc["gap_width"]),
        int(doc.get("n_pixel_rings", 0)),
    )


# ---------------------------------------------------------------------------
# panel meshes


@dataclass
class PanelMesh:
    """Flat panels (triangles and quadrilaterals) tiling the electrodes.

    Stored in columnar form.  ``vertices[i]`` holds 4 vertex pairs; for a
    triangle the last vertex repeats the first.  ``edge_flags`` marks panels
    that touch the boundary of their electrode.
    """

    vertices: np.ndarray        # (N, 4, 2)
    nvert: np.ndarray           # (N,) 3 or 4
    electrode_index: np.ndarray  # (N,) index into electrode_ids
    electrode_ids: list[str]
    edge_flags: np.ndarray      # (N,) bool
    centroids: np.ndarray = field(init=False)
    areas: np.ndarray = field(init=False)

    def __post_init__(self):
        v = self.vertices
        x, y = v[..., 0], v[..., 1]
        xn, yn = np.roll(x, -1, axis=1), np.roll(y, -1, axis=1)
        cross = x * yn - xn * y
        self.areas = 0.5 * np.sum(cross, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            cx = np.sum((x + xn) * cross, axis=1) / (6.0 * self.areas)
            cy = np.sum((y + yn) * cross, axis=1) / (6.0 * self.areas)
        self.centroids = np.column_stack([cx, cy])
        if np.any(self.areas <= 0.0):
            raise MeshError("mesh contains degenerate or misoriented panels")

    def __len__(self) -> int:
        return self.vertices.shape[0]

    @property
    def panel_count(self) -> int:
        return len(self)

    def panels_of(self, electrode_id: str) -> np.ndarray:
        k = self.electrode_ids.index(electrode_id)
        return np.nonzero(self.electrode_index == k)[0]

    def electrode_area(self, electrode_id: str) -> float:
        return float(np.sum(self.areas[self.panels_of(electrode_id)]))

    def incidence_matrix(self) -> np.ndarray:
        """(N, K) matrix with 1 where panel i belongs to electrode k."""
        m = np.zeros((len(self), len(self.electrode_ids)))
        m[np.arange(len(self)), self.electrode_index] = 1.0
        return m

    def save(self, path) -> None:
        """Write the mesh to a compressed npz archive."""
        np.savez_compressed(
            path,
            vertices=self.vertices,
            nvert=self.nvert,
            electrode_index=self.electrode_index,
            electrode_ids=np.array(self.electrode_ids),
            edge_flags=self.edge_flags,
        )

    @classmethod
    def load(cls, path) -> "PanelMesh":
        with np.load(path, allow_pickle=False) as d:
            try:
                return cls(
                    vertices=d["vertices"],
                    nvert=d["nvert"],
                    electrode_index=d["electrode_index"],
                    electrode_ids=[str(s) for s in d["electrode_ids"]],
                    edge_flags=d["edge_flags"],
                )
            except KeyError as exc:
                raise MeshError(f"mesh file is missing array {exc}") from None


def _quad_cells(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Turn an (nu+1, nv+1, 2) point lattice into quad panels.

    Cells with a collapsed first row (fan apex) become triangles.
    Returns (vertices (N,4,2), nvert (N,)).
    """
    p00 = points[:-1, :-1]
    p10 = points[1:, :-1]
    p11 = points[1:, 1:]
    p01 = points[:-1, 1:]
    verts = np.stack([p00, p10, p11, p01], axis=2).reshape(-1, 4, 2)
    d = np.linalg.norm(verts[:, 0] - verts[:, 3], axis=1)
    scale = np.linalg.norm(verts[:, 1] - verts[:, 0], axis=1) + d + 1e-300
    nvert = np.full(verts.shape[0], 4, dtype=np.int8)
    collapsed = d / scale < 1e-12
    if np.any(collapsed):
        # p01 == p00: drop the duplicate corner
        verts[collapsed, 3] = verts[collapsed, 0]
        nvert[collapsed] = 3
    return verts, nvert


def _graded_breaks(n: int, fine_lo: bool, fine_hi: bool) -> np.ndarray:
    """Breakpoints on [0, 1] for n cells, refined 2:1 twice at marked ends."""
    need = 2 * fine_lo + 2 * fine_hi + 1
    if n <= need:
        sizes = np.ones(max(n, 1))
    else:
        sizes = np.ones(n - 2 * fine_lo - 2 * fine_hi)
        if fine_lo:
            sizes = np.concatenate([[0.25, 0.5], sizes])
        if fine_hi:
            sizes = np.concatenate([sizes, [0.5, 0.25]])
    breaks = np.concatenate([[0.0], np.cumsum(sizes)])
    return breaks / breaks[-1]


def _mesh_hexagon(poly: np.ndarray, n: int):
    """Six-fold symmetric kite mesh of a regular hexagon, n x n per kite."""
    center = polygon_centroid(poly)
    mids = 0.5 * (poly + np.roll(poly, -1, axis=0))
    xi = _graded_breaks(n, False, True)
    eta = _graded_breaks(n, False, True)
    verts_all, nvert_all, edge_all = [], [], []
    for k in range(6):
        a = center
        b = mids[k - 1]
        c = poly[k]
        d = mids[k]
        # bilinear map of the unit square onto kite (a, b, c, d)
        gx = np.outer(1 - xi, 1 - eta)
        g10 = np.outer(xi, 1 - eta)
        g11 = np.outer(xi, eta)
        g01 = np.outer(1 - xi, eta)
        pts = (
            gx[..., None] * a + g10[..., None] * b + g11[..., None] * c + g01[..., None] * d
        )
        v, nv = _quad_cells(pts)
        edge = np.zeros((n, n), dtype=bool)
        edge[-1, :] = True
        edge[:, -1] = True
        verts_all.append(v)
        nvert_all.append(nv)
        edge_all.append(edge.reshape(-1))
    return np.concatenate(verts_all), np.concatenate(nvert_all), np.concatenate(edge_all)


def _split_chains(poly: np.ndarray):
    """Split an annular-sector outline into its outer and inner arc chains.

    Relies on the construction order of ``annular_sector_polygon``: the
    first half of the vertices is the outer arc, the second the inner arc
    walked backwards.
    """
    m = poly.shape[0]
    if m % 2:
        return None
    half = m // 2
    outer = poly[:half]
    inner = poly[half:][::-1]
    r_out = np.hypot(*outer.T)
    r_in = np.hypot(*inner.T)
    if np.ptp(r_out) > 1e-9 * r_out.mean() or np.ptp(r_in) > 1e-9 * r_in.mean():
        return None
    if r_in.mean() >= r_out.mean():
        return None
    return inner, outer


def _chain_points(chain: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Points along a uniform polyline at fractional positions u in [0, 1]."""
    nseg = chain.shape[0] - 1
    t = np.clip(u * nseg, 0.0, nseg)
    k = np.minimum(t.astype(int), nseg - 1)
    f = (t - k)[:, None]
    return chain[k] * (1.0 - f) + chain[k + 1] * f


def _sector_u_breaks(n_chords: int, stride: int, graded: bool) -> np.ndarray:
    """Chord-aligned angular breakpoints; optional 2-level end grading."""
    if stride > 1:
        idx = np.arange(0, n_chords + 1, stride, dtype=float)
        if idx[-1] != n_chords:
            idx = np.append(idx, n_chords)
        return idx / n_chords
    u = [0.0]
    if graded and n_chords >= 3:
        u += [0.25, 0.75, 1.0]
    else:
        u += [1.0]
    u += list(range(2, n_chords))
    if graded and n_chords >= 3:
        u += [n_chords - 1 + 0.25, n_chords - 1 + 0.75, float(n_chords)]
    else:
        u += [float(n_chords)]
    return np.unique(np.asarray(u)) / n_chords


def _mesh_annular_sector(poly: np.ndarray, target: int):
    """Transfinite mesh between the two arc chains of a quarter annulus.

    A very low panel budget decimates the arc chords (stride > 1), which
    cuts the corners of the outline; when the covered area drifts past
    0.5% the stride is walked back toward 1 so coarse meshes stay valid
    at a few extra panels.
    """
    chains = _split_chains(poly)
    if chains is None:
        raise MeshError("polygon is not an annular sector outline")
    inner, outer = chains
    n_chords = inner.shape[0] - 1
    graded = target >= 2 * (n_chords + 4)
    stride = 1
    if target < n_chords:
        stride = max(1, int(math.ceil(n_chords / max(target, 3))))
    mesh_area = polygon_area(poly)
    while True:
        u = _sector_u_breaks(n_chords, stride, graded)
        nu = len(u) - 1
        nv = max(1, round(target / nu))
        v = _graded_breaks(nv, graded, graded)

        pin = _chain_points(inner, u)
        pout = _chain_points(outer, u)
        # first lattice axis radial (inner -> outer), second angular, so the
        # bilinear cells inherit a counter-clockwise winding
        pts = pin[None, :, :] * (1.0 - v)[:, None, None] \
            + pout[None, :, :] * v[:, None, None]
        verts, nvert = _quad_cells(pts)
        cell_area = _total_area(verts)
        if abs(cell_area - mesh_area) <= 0.005 * abs(mesh_area):
            break
        if stride <= 1:
            raise MeshError(
                "annular sector mesh cannot respect the outline area "
                f"(off by {abs(cell_area / mesh_area - 1.0):.2%})"
            )
        stride //= 2
    edge = np.zeros((len(v) - 1, nu), dtype=bool)
    edge[0, :] = edge[-1, :] = True
    edge[:, 0] = edge[:, -1] = True
    return verts, nvert, edge.reshape(-1)


def _total_area(verts: np.ndarray) -> float:
    x, y = verts[..., 0], verts[..., 1]
    xn, yn = np.roll(x, -1, axis=1), np.roll(y, -1, axis=1)
    return float(np.sum(0.5 * (x * yn - xn * y)))


def _mesh_quadrilateral(poly: np.ndarray, target: int):
    """Structured bilinear grid on an arbitrary quadrilateral electrode."""
    la = np.linalg.norm(poly[1] - poly[0]) + np.linalg.norm(poly[3] - poly[2])
    lb = np.linalg.norm(poly[2] - poly[1]) + np.linalg.norm(poly[0] - poly[3])
    aspect = la / lb
    nu = max(1, round(math.sqrt(target * aspect)))
    nv = max(1, round(target / nu))
    graded = min(nu, nv) >= 6
    u = _graded_breaks(nu, graded, graded)
    v = _graded_breaks(nv, graded, graded)
    a, b, c, d = poly[0], poly[1], poly[2], poly[3]
    uu, vv = np.meshgrid(u, v, indexing="ij")
    pts = (
        ((1 - uu) * (1 - vv))[..., None] * a
        + (uu * (1 - vv))[..., None] * b
        + (uu * vv)[..., None] * c
        + ((1 - uu) * vv)[..., None] * d
    )
    verts, nvert = _quad_cells(pts)
    edge = np.zeros((len(u) - 1, len(v) - 1), dtype=bool)
    edge[0, :] = edge[-1, :] = True
    edge[:, 0] = edge[:, -1] = True
    return verts, nvert, edge.reshape(-1)


def _mesh_convex_fan(poly: np.ndarray, target: int):
    """Fan a convex polygon from its centroid into layered sectors."""
    m = poly.shape[0]
    center = polygon_centroid(poly)
    per_sector = max(1, round(target / m))
    n_r = max(1, round(math.sqrt(per_sector)))
    n_t = max(1, round(per_sector / n_r))
    r = _graded_breaks(n_r, False, n_r >= 4)
    t = np.linspace(0.0, 1.0, n_t + 1)
    verts_all, nvert_all, edge_all = [], [], []
    for k in range(m):
        a, b = poly[k], poly[(k + 1) % m]
        chord = a[None, :] * (1.0 - t)[:, None] + b[None, :] * t[:, None]
        pts = center[None, None, :] + r[:, None, None] * (chord[None, :, :] - center)
        v, nv = _quad_cells(pts)
        edge = np.zeros((n_r, n_t), dtype=bool)
        edge[-1, :] = True
        verts_all.append(v)
        nvert_all.append(nv)
        edge_all.append(edge.reshape(-1))
    return np.concatenate(verts_all), np.concatenate(nvert_all), np.concatenate(edge_all)


def _is_convex(poly: np.ndarray) -> bool:
    d = np.roll(poly, -1, axis=0) - poly
    cross = d[:, 0] * np.roll(d, -1, axis=0)[:, 1] - d[:, 1] * np.roll(d, -1, axis=0)[:, 0]
    return bool(np.all(cross > -1e-12 * np.max(np.abs(cross))))


def _is_regular_hexagon(poly: np.ndarray) -> bool:
    if poly.shape[0] != 6:
        return False
    c = polygon_centroid(poly)
    r = np.hypot(*(poly - c).T)
    return bool(np.ptp(r) < 1e-9 * r.mean()) and _is_convex(poly)


def _electrode_budgets(layout: ElectrodeLayout, target: int) -> dict[str, float]:
    """Panel budget per electrode: area weighted, biased toward the centre.

    The weight divides the area by 1 + (r / r_pix)^2 so that distant
    electrodes get coarser panels (their fields at the trap region are
    smooth), while electrodes near the pixel array stay finely resolved.
    Rotation-equivalent electrodes receive identical budgets, which keeps
    meshes of symmetric layouts symmetric.
    """
    r_pix = layout.pixel_array_radius()
    if r_pix <= 0.0:
        r_pix = max(
            float(np.max(np.hypot(*el.polygon.T))) for el in layout.electrodes
        )
    weights = {}
    for el in layout.electrodes:
        r = float(np.hypot(*polygon_centroid(el.polygon)))
        weights[el.id] = abs(polygon_area(el.polygon)) / (1.0 + (r / r_pix) ** 2)
    total = sum(weights.values())
    return {eid: target * w / total for eid, w in weights.items()}


def _mesh_one(el: Electrode, budget: int):
    poly = el.polygon
    if _is_regular_hexagon(poly):
        n = max(1, round(math.sqrt(budget / 6.0)))
        return _mesh_hexagon(poly, n)
    if _split_chains(poly) is not None:
        return _mesh_annular_sector(poly, budget)
    if poly.shape[0] == 4:
        return _mesh_quadrilateral(poly, budget)
    if _is_convex(poly):
        return _mesh_convex_fan(poly, budget)
    raise MeshError(
        f"electrode {el.id!r}: no mesher for a non-convex {poly.shape[0]}-gon"
    )


def mesh_layout(layout: ElectrodeLayout, target_panel_count: int) -> PanelMesh:
    """Mesh every electrode into flat panels, graded finer near edges.

    The total panel count tracks ``target_panel_count`` within about 20 %.
    Annular electrodes carry a floor of one panel per outline chord (needed
    to keep panel areas consistent with the polygon outlines), so very small
    targets are rounded up to that floor.
    """
    if target_panel_count < len(layout.electrodes):
        raise MeshError(
            f"target_panel_count {target_panel_count} below electrode count "
            f"{len(layout.electrodes)}"
        )
    budgets = _electrode_budgets(layout, target_panel_count)

    def build(scale: float):
        verts, nverts, edges, eidx = [], [], [], []
        for k, el in enumerate(layout.electrodes):
            v, nv, ed = _mesh_one(el, max(1, round(scale * budgets[el.id])))
            verts.append(v)
            nverts.append(nv)
            edges.append(ed)
            eidx.append(np.full(v.shape[0], k, dtype=np.int32))
        return (
            np.concatenate(verts),
            np.concatenate(nverts),
            np.concatenate(edges),
            np.concatenate(eidx),
        )

    scale = 1.0
    for _ in range(8):
        verts, nvert, edge, eidx = build(scale)
        count = verts.shape[0]
        ratio = count / target_panel_count
        if 0.85 <= ratio <= 1.15 or (ratio > 1.0 and scale <= 0.3):
            break
        scale = min(4.0, max(0.1, scale / ratio))
    mesh = PanelMesh(verts, nvert, eidx, list(layout.ids), edge)

    for el in layout.electrodes:
        a_mesh = mesh.electrode_area(el.id)
        a_poly = abs(polygon_area(el.polygon))
        if abs(a_mesh - a_poly) > 0.005 * a_poly:
            raise MeshError(
                f"electrode {el.id!r}: mesh area off by "
                f"{abs(a_mesh / a_poly - 1.0):.2%}"
            )
    return mesh


# ---------------------------------------------------------------------------
# direct structured meshes (validation geometries)


def structured_disk_mesh(
    radius: float,
    n_radial: int = 30,
    n_azimuthal: int = 64,
    electrode_id: str = "disk",
    center: tuple[float, float] = (0.0, 0.0),
) -> PanelMesh:
    """Polar mesh of a disk with sine-spaced rings (fine at the rim).

    The rim clustering resolves the edge charge density of a charged disk,
    which converges much faster than uniform rings for capacitance checks.
    """
    k = np.arange(n_radial + 1)
    r = radius * np.sin(0.5 * math.pi * k / n_radial)
    t = np.linspace(0.0, 2.0 * math.pi, n_azimuthal + 1)
    cx, cy = center
    pts = np.empty((n_radial + 1, n_azimuthal + 1, 2))
    pts[..., 0] = cx + r[:, None] * np.cos(t)[None, :]
    pts[..., 1] = cy + r[:, None] * np.sin(t)[None, :]
    pts[:, -1, :] = pts[:, 0, :]  # close the seam exactly
    verts, nvert = _quad_cells(pts)
    edge = np.zeros((n_radial, n_azimuthal), dtype=bool)
    edge[-1, :] = True
    return PanelMesh(
        verts,
        nvert,
        np.zeros(verts.shape[0], dtype=np.int32),
        [electrode_id],
        edge.reshape(-1),
    )


def structured_annulus_mesh(
    r_in: float,
    r_out: float,
    n_radial: int = 24,
    n_azimuthal: int = 64,
    electrode_id: str = "annulus",
    geometric: bool = True,
) -> PanelMesh:
    """Polar mesh of a full annulus, radially geometric when requested."""
    if geometric:
        r = np.geomspace(r_in, r_out, n_radial + 1)
    else:
        r = np.linspace(r_in, r_out, n_radial + 1)
    t = np.linspace(0.0, 2.0 * math.pi, n_azimuthal + 1)
    pts = np.empty((n_radial + 1, n_azimuthal + 1, 2))
    pts[..., 0] = r[:, None] * np.cos(t)[None, :]
    pts[..., 1] = r[:, None] * np.sin(t)[None, :]
    pts[:, -1, :] = pts[:, 0, :]
    verts, nvert = _quad_cells(pts)
    edge = np.zeros((n_radial, n_azimuthal), dtype=bool)
    edge[0, :] = edge[-1, :] = True
    return PanelMesh(
        verts,
        nvert,
        np.zeros(verts.shape[0], dtype=np.int32),
        [electrode_id],
        edge.reshape(-1),
    )


def concat_meshes(*meshes: PanelMesh) -> PanelMesh:
    """Combine meshes of disjoint electrodes into one."""
    ids: list[str] = []
    offsets = []
    for m in meshes:
        offsets.append(len(ids))
        for eid in m.electrode_ids:
            if eid in ids:
                raise MeshError(f"duplicate electrode id {eid!r} when combining meshes")
            ids.append(eid)
    return PanelMesh(
        np.concatenate([m.vertices for m in meshes]),
        np.concatenate([m.nvert for m in meshes]),
        np.concatenate(
            [m.electrode_index + off for m, off in zip(meshes, offsets)]
        ),
        ids,
        np.concatenate([m.edge_flags for m in meshes]),
    )
