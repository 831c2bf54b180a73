"""Trap-site characterization above a planar electrode layout.

Locates stationary points of the potential, converts curvatures into the
three Penning eigenfrequencies, measures trap depth along the escape
channels the magnetic field leaves open, and quantifies anharmonic
frequency broadening by integrating the 1D period integral over the
exact axial energy profile.

Conventions: the magnetic field points along +z; the axial frequency is
taken along z (the field axis), not along a Hessian principal axis.  If
the confining principal axis tilts from z by more than 5 degrees the
returned site carries a warning, since the two-frequency radial picture
degrades for tilted traps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, minimize_scalar

from .bem import BemField, ChargeBasis
from .constants import ParticleSpecies, hbar, kB, mu_B, qe
from .errors import ComputationError, InputError

TILT_WARNING_DEG = 5.0


class ConvergenceError(ComputationError):
    """An iterative search failed to reach its tolerance."""


class DepthError(ComputationError):
    """No confining barrier found inside the search box."""


@dataclass(frozen=True)
class MagneticField:
    """Uniform field of magnitude b0 along +z."""

    b0: float

    def __post_init__(self):
        if self.b0 <= 0.0:
            raise InputError("magnetic field must be positive (B along +z)")


@dataclass(frozen=True)
class IdealQuadrupole:
    """Phi = (U / r0^2) * (rho^2 - 2 z^2), the textbook Penning potential."""

    voltage: float
    r0: float

    def __post_init__(self):
        if self.r0 <= 0.0:
            raise InputError("quadrupole characteristic dimension must be > 0")

    def potential(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        rho2 = p[:, 0] ** 2 + p[:, 1] ** 2
        return self.voltage / self.r0**2 * (rho2 - 2.0 * p[:, 2] ** 2)

    def field(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        k = self.voltage / self.r0**2
        return np.column_stack(
            [-2.0 * k * p[:, 0], -2.0 * k * p[:, 1], 4.0 * k * p[:, 2]]
        )

    def hessian(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        k = self.voltage / self.r0**2
        h = np.zeros((p.shape[0], 3, 3))
        h[:, 0, 0] = 2.0 * k
        h[:, 1, 1] = 2.0 * k
        h[:, 2, 2] = -4.0 * k
        return h


@dataclass(frozen=True)
class ShiftedField:
    """A base provider plus a uniform electric field (potential -E0 . r)."""

    base: object
    e0: np.ndarray

    def potential(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return self.base.potential(p) - p @ np.asarray(self.e0)

    def field(self, points) -> np.ndarray:
        return self.base.field(points) + np.asarray(self.e0)

    def hessian(self, points) -> np.ndarray:
        return self.base.hessian(points)


@dataclass
class TrapSite:
    """A characterized stationary point of the trapping potential."""

    position: np.ndarray
    omega_z: float
    omega_plus: float
    omega_minus: float
    omega_c: float
    stable: bool
    principal_axes: np.ndarray  # columns = Hessian eigenvectors
    hessian: np.ndarray
    species: ParticleSpecies
    depth_ev: float | None = None
    tilt_deg: float = 0.0
    warnings: list = dc_field(default_factory=list)

    @property
    def frequencies_hz(self) -> dict[str, float]:
        tp = 2.0 * math.pi
        return {
            "axial": self.omega_z / tp,
            "reduced_cyclotron": self.omega_plus / tp,
            "magnetron": self.omega_minus / tp,
            "free_cyclotron": self.omega_c / tp,
        }


# ---------------------------------------------------------------------------
# stationary points


def stationary_point(provider, seed, tol: float = 1e-6, max_iter: int = 100):
    """Damped Newton search for grad(Phi) = 0 above the electrode plane."""
    x = np.asarray(seed, dtype=float).copy()
    if x[2] <= 0.0:
        raise InputError("seed must lie above the electrode plane (z > 0)")
    for _ in range(max_iter):
        g = provider.field(x[None, :])[0] * -1.0  # gradient of Phi
        gnorm = float(np.linalg.norm(g))
        if gnorm <= tol:
            return x
        H = provider.hessian(x[None, :])[0]
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            # singular curvature: take a short gradient step instead
            step = -g * (1e-3 * (abs(x[2]) + 1e-9) / max(gnorm, 1e-300))
        scale = 1.0
        hit_plane = False
        for _ in range(40):
            trial = x + scale * step
            if trial[2] <= 0.0:
                hit_plane = True
                scale *= 0.5
                continue
            gt = provider.field(trial[None, :])[0] * -1.0
            if np.linalg.norm(gt) < gnorm:
                x = trial
                break
            scale *= 0.5
        else:
            if hit_plane:
                raise InputError(
                    "stationary point search left the domain z > 0 "
                    "(the sought point lies at or below the electrode plane)"
                )
            raise ConvergenceError(
                "stationary point search stalled (no descent step); "
                "the seed may be outside the Newton basin"
            )
    raise ConvergenceError(
        f"stationary point search did not reach |grad| <= {tol} V/m "
        f"in {max_iter} iterations"
    )


def find_stationary_point(
    voltages: dict[str, float],
    basis: ChargeBasis,
    seed,
    tol: float = 1e-6,
) -> np.ndarray:
    """Newton search on the exact BEM field from a seed above the plane."""
    return stationary_point(BemField(basis, voltages), seed, tol=tol)


def hessian_signature(hessian: np.ndarray) -> str:
    """Classify a stationary point by the signs of the Hessian eigenvalues.

    For the potential Phi itself (not the energy q Phi): a planar Penning
    site for a positive ion is a saddle with one positive eigenvalue near
    the z axis and two negative in-plane ones.
    """
    w = np.linalg.eigvalsh(hessian)
    pos = int(np.sum(w > 0))
    neg = int(np.sum(w < 0))
    if pos == 3:
        return "minimum"
    if neg == 3:
        return "maximum"
    if pos == 1 and neg == 2:
        return "axial-confining saddle"
    if pos == 2 and neg == 1:
        return "axial-repelling saddle"
    return "degenerate"


def axial_potential_seed(provider, xy, z_range, species: ParticleSpecies,
                         samples: int = 400) -> np.ndarray:
    """Seed from the interior minimum of q*Phi along a vertical line."""
    zlo, zhi = z_range
    if zlo <= 0.0:
        raise InputError("axial scan must stay above the plane")
    z = np.linspace(zlo, zhi, samples)
    pts = np.column_stack([np.full(samples, xy[0]), np.full(samples, xy[1]), z])
    u = species.charge * provider.potential(pts)
    k = int(np.argmin(u))
    if k in (0, samples - 1):
        raise InputError(
            "no interior axial energy minimum in the given z range"
        )
    return np.array([xy[0], xy[1], z[k]])


# ---------------------------------------------------------------------------
# frequencies


def motional_frequencies(
    hessian: np.ndarray,
    species: ParticleSpecies,
    b_field: MagneticField,
):
    """Penning eigenfrequencies from the axial curvature and B.

    Returns (omega_z, omega_plus, omega_minus, omega_c, stable).  The
    axial curvature is the zz component of the Hessian; q*Phi_zz must be
    confining.  At or beyond the stability boundary 2 w_z^2 >= w_c^2 the
    radial roots coalesce at w_c/2 and the stable flag goes false.
    """
    phi_zz = float(hessian[2, 2])
    if species.charge * phi_zz <= 0.0:
        raise InputError(
            "axial curvature is not confining for this species "
            f"(q*Phi_zz = {species.charge * phi_zz:.3e})"
        )
    omega_z = math.sqrt(species.charge * phi_zz / species.mass)
    omega_c = species.cyclotron_frequency(b_field.b0)
    disc = omega_c * omega_c - 2.0 * omega_z * omega_z
    stable = disc > 0.0
    root = math.sqrt(max(disc, 0.0))
    omega_plus = 0.5 * (omega_c + root)
    # the quadratic's product identity gives the magnetron root without
    # the cancellation of (omega_c - root)/2 when omega_z << omega_c
    omega_minus = 0.5 * omega_z * omega_z / omega_plus
    return omega_z, omega_plus, omega_minus, omega_c, stable


def eigenfrequencies(
    hessian: np.ndarray,
    species: ParticleSpecies,
    b_field: MagneticField,
) -> tuple[np.ndarray, bool]:
    """All three mode frequencies of the linearized motion, any Hessian.

    Solves the 6x6 first-order system r' = v, v' = -(q/m) H r + (q/m) v x B,
    valid for anisotropic or tilted curvature tensors where the scalar
    Penning formulas do not apply.  Returns (sorted |omega| triple, stable);
    stable means all eigenvalues are purely imaginary (bounded motion).
    """
    q_over_m = species.charge / species.mass
    A = np.zeros((6, 6))
    A[0:3, 3:6] = np.eye(3)
    A[3:6, 0:3] = -q_over_m * np.asarray(hessian)
    wc = q_over_m * b_field.b0
    A[3, 4] = wc
    A[4, 3] = -wc
    lam = np.linalg.eigvals(A)
    scale = float(np.max(np.abs(lam))) + 1e-300
    stable = bool(np.max(np.abs(lam.real)) < 1e-9 * scale)
    freqs = np.sort(np.abs(lam.imag))[::-1]
    return freqs[::2].copy(), stable


def characterize_site(
    voltages: dict[str, float],
    basis: ChargeBasis,
    species: ParticleSpecies,
    b_field: MagneticField,
    seed,
    with_depth: bool = False,
) -> TrapSite:
    """Full pipeline: locate, differentiate, classify, and (optionally)
    measure the depth of a trapping site."""
    provider = BemField(basis, voltages)
    pos = stationary_point(provider, seed)
    H = provider.hessian(pos[None, :])[0]
    omega_z, omega_plus, omega_minus, omega_c, stable = motional_frequencies(
        H, species, b_field
    )
    evals, evecs = np.linalg.eigh(H)
    axial_idx = int(np.argmax(np.abs(evecs[2, :])))
    tilt = math.degrees(math.acos(min(abs(evecs[2, axial_idx]), 1.0)))
    warnings = []
    if tilt > TILT_WARNING_DEG:
        warnings.append(
            f"confining axis tilted {tilt:.1f} deg from the magnetic field"
        )
    site = TrapSite(
        position=pos,
        omega_z=omega_z,
        omega_plus=omega_plus,
        omega_minus=omega_minus,
        omega_c=omega_c,
        stable=stable,
        principal_axes=evecs,
        hessian=H,
        species=species,
        tilt_deg=tilt,
        warnings=warnings,
    )
    if with_depth:
        site.depth_ev = trap_depth(voltages, basis, pos, species)
    return site


# ---------------------------------------------------------------------------
# trap depth


def _escape_directions() -> list[np.ndarray]:
    """Unit vectors for the escape channels the B field leaves open.

    A particle in a strong axial field escapes along its field line, so
    the open channels run straight up and straight down from the site.
    Oblique or radial straight paths cross field lines, which the
    magnetic field seals (the residual cross-field motion is the slow
    magnetron drift along equipotentials, metastable by convention and
    not counted as an escape channel)."""
    return [np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, -1.0])]


def _ray_length(site, d, box_xy: float, z_top: float) -> float:
    """Distance from the site to the search-box boundary along one ray."""
    lims = [np.inf]
    if d[2] > 1e-12:
        lims.append((z_top - site[2]) / d[2])
    if d[2] < -1e-12:
        # stop just above the electrode plane
        lims.append((1e-6 - site[2]) / d[2])
    for ax in (0, 1):
        if abs(d[ax]) > 1e-12:
            lims.append((math.copysign(box_xy, d[ax]) - site[ax]) / d[ax])
    return min(v for v in lims if v > 0.0)


def _ray_crest(u_along: np.ndarray):
    """Barrier height along one sampled ray, or None.

    A ray counts as an escape route in two cases: the energy drops below
    the site level somewhere (capture by another well or by a surface
    region biased under the site), or the global crest sits strictly
    inside the box with the tail descending toward the vacuum level.  The
    second case matters whenever the site energy is below the vacuum
    level; such a ray never dips under the site yet still leaves the
    well.  Returns (crest, index), with crest 0.0 when the ray descends
    from the very start, or (None, None) when it stays inside the well.
    """
    below = np.nonzero(u_along < 0.0)[0]
    if below.size:
        j = int(np.argmax(u_along[: below[0] + 1]))
        if u_along[j] <= 0.0:
            return 0.0, j
        return float(u_along[j]), j
    j = int(np.argmax(u_along))
    if u_along[j] > 0.0 and j < u_along.size - 1 and u_along[-1] < u_along[j]:
        return float(u_along[j]), j
    return None, None


def trap_depth(
    voltages: dict[str, float],
    basis: ChargeBasis,
    site,
    species: ParticleSpecies,
    provider=None,
    coarse_step: float = 5e-6,
    fine_step: float = 1e-6,
) -> float:
    """Minimum escape barrier from a confining site, in eV.

    Samples the potential energy q*Phi along each open escape ray out to
    the search box (z up to the larger of 10 x the site height and the
    layout extent), takes each ray's crest, then refines the smallest
    crest with 1 um steps.  The downward ray ends on the electrode plane
    and counts the total climb to the surface as its crest, because
    reaching a conductor is an escape in itself; the upward ray leaves
    through the box top and needs an interior crest to count.
    """
    site = np.asarray(site, dtype=float)
    if provider is None:
        provider = BemField(basis, voltages)
    if basis is not None:
        box_xy = float(np.max(np.abs(basis.mesh.vertices)))
    else:
        box_xy = 50.0 * site[2]
    # the barrier crest can sit at a height comparable to the electrode
    # extent, far above a low-lying site, so the box top follows both
    z_top = max(10.0 * site[2], box_xy)
    u_site = float(species.charge * provider.potential(site[None, :])[0])

    dirs = _escape_directions()
    pts, ray_id = [], []
    hits_surface = np.zeros(len(dirs), dtype=bool)
    for k, d in enumerate(dirs):
        L = _ray_length(site, d, box_xy, z_top)
        hits_surface[k] = site[2] + L * d[2] <= 2e-6
        n = max(8, int(L / coarse_step))
        t = np.linspace(0.0, L, n)[1:]
        pts.append(site[None, :] + t[:, None] * d[None, :])
        ray_id.append(np.full(n - 1, k))
    pts = np.concatenate(pts)
    ray_id = np.concatenate(ray_id)
    u = species.charge * provider.potential(pts) - u_site

    barriers = np.full(len(dirs), np.inf)
    crest_t = np.full(len(dirs), np.nan)
    for k in range(len(dirs)):
        sel = np.nonzero(ray_id == k)[0]
        crest, j = _ray_crest(u[sel])
        if crest is None and hits_surface[k]:
            # the ray ends on an electrode, and landing there is already an
            # escape (the ion neutralizes on contact), so the barrier is
            # the climb up to the surface even when the energy rises
            # monotonically toward it
            j = int(np.argmax(u[sel]))
            crest = float(u[sel][j])
            if crest <= 0.0:
                crest = None
        if crest is None:
            continue
        if crest == 0.0:
            raise DepthError(
                "potential energy decreases immediately along the "
                "field axis; the site is not axially confining"
            )
        barriers[k] = crest
        crest_t[k] = float(np.linalg.norm(pts[sel[j]] - site))
    if not np.isfinite(barriers).any():
        raise DepthError(
            "no escape route found inside the search box; depth exceeds "
            "the sampled landscape (enlarge the box to quantify it)"
        )

    # refine the limiting crest at 1 um resolution
    best = int(np.argmin(barriers))
    d = dirs[best]
    depth = barriers[best]
    L = _ray_length(site, d, box_xy, z_top)
    lo = max(fine_step, crest_t[best] - 2.0 * coarse_step)
    hi = min(L, crest_t[best] + 2.0 * coarse_step)
    tf = np.arange(lo, hi, fine_step)
    if tf.size:
        uf = species.charge * provider.potential(
            site[None, :] + tf[:, None] * d[None, :]
        ) - u_site
        depth = float(np.max(uf))
    return depth / qe


# ---------------------------------------------------------------------------
# anharmonicity


def oscillation_frequency(profile, z_site: float, mass: float, energy: float,
                          z_bounds: tuple[float, float], nodes: int = 96) -> float:
    """Frequency of 1D bounded motion at the given energy above the well.

    profile(z) is the potential energy minus its value at the well bottom
    (J, zero at z_site).  The half period is integrated with the angular
    substitution z = mid + half*sin(theta), which removes the inverse
    square-root turning-point singularities exactly for a harmonic well.
    """
    zlo, zhi = z_bounds

    def f(z):
        return profile(z) - energy

    if f(z_site) >= 0.0:
        raise InputError("energy must exceed the well bottom")
    # turning points to full machine precision: the period integral
    # amplifies endpoint error logarithmically through the 1/sqrt factor
    z_minus = brentq(f, zlo, z_site, xtol=1e-300)
    z_plus = brentq(f, z_site, zhi, xtol=1e-300)
    x, w = leggauss(nodes)
    theta = 0.5 * math.pi * x
    mid = 0.5 * (z_plus + z_minus)
    half = 0.5 * (z_plus - z_minus)
    z = mid + half * np.sin(theta)
    du = energy - profile(z)
    du = np.maximum(du, 1e-14 * energy)
    integrand = half * np.cos(theta) / np.sqrt(2.0 * du / mass)
    half_period = 0.5 * math.pi * float(np.dot(w, integrand))
    return math.pi / half_period


class AxialProfile:
    """Potential energy along z through a site, zeroed at the well bottom."""

    def __init__(self, z: np.ndarray, u: np.ndarray):
        self._spline = CubicSpline(z, u)
        self.z_bounds = (float(z[0]), float(z[-1]))
        z0 = float(z[np.argmin(u)])
        res = minimize_scalar(
            self._spline,
            bounds=(max(z[0], z0 - 3e-6), min(z[-1], z0 + 3e-6)),
            method="bounded",
        )
        self.z_min = float(res.x)
        self._u0 = float(self._spline(self.z_min))

    def __call__(self, z):
        return self._spline(z) - self._u0

    def curvature(self, z) -> float:
        return float(self._spline(z, 2))

    @property
    def wall_energy(self) -> float:
        """The lower of the two sampled endpoint energies."""
        return float(min(self(self.z_bounds[0]), self(self.z_bounds[1])))


def axial_energy_profile(
    voltages: dict[str, float],
    basis: ChargeBasis,
    site,
    species: ParticleSpecies,
    span: float | None = None,
    samples: int = 600,
) -> AxialProfile:
    """Sampled q*Phi along the vertical line through the site.

    The span defaults to +-60% of the site height, clipped to stay above
    the electrode plane.
    """
    site = np.asarray(site, dtype=float)
    if span is None:
        span = 0.6 * site[2]
    zlo = max(site[2] - span, 0.05 * site[2])
    zhi = site[2] + span
    z = np.linspace(zlo, zhi, samples)
    pts = np.column_stack([np.full(samples, site[0]), np.full(samples, site[1]), z])
    u = species.charge * BemField(basis, voltages).potential(pts)
    return AxialProfile(z, u)


def anharmonic_broadening(
    voltages: dict[str, float],
    basis: ChargeBasis,
    site,
    species: ParticleSpecies,
    temperature: float,
) -> float:
    """|omega(k_B T) - omega(0+)| for axial motion, in rad/s.

    The zero-amplitude frequency comes from the spline curvature at the
    well bottom; the hot frequency from the period integral at E = k_B T.
    """
    profile = axial_energy_profile(voltages, basis, site, species)
    e_max = kB * temperature
    if e_max >= profile.wall_energy:
        raise InputError(
            f"k_B T = {e_max / qe:.3g} eV exceeds the axial barrier "
            f"{profile.wall_energy / qe:.3g} eV; the period integral has "
            "no turning points"
        )
    omega_0 = math.sqrt(max(profile.curvature(profile.z_min), 0.0) / species.mass)
    omega_hot = oscillation_frequency(
        profile, profile.z_min, species.mass, e_max, profile.z_bounds
    )
    return abs(omega_hot - omega_0)


# ---------------------------------------------------------------------------
# scalar estimates


def cyclotron_radius(
    species: ParticleSpecies, temperature: float, b_field: MagneticField
) -> float:
    """Thermal cyclotron orbit radius r = m v_perp / (|q| B).

    Uses v_perp = sqrt(2 k_B T / m), the transverse thermal speed.
    """
    if temperature <= 0.0:
        raise InputError("temperature must be positive")
    v_perp = math.sqrt(2.0 * kB * temperature / species.mass)
    return species.mass * v_perp / (abs(species.charge) * b_field.b0)


def spin_coupling_estimate(
    gradient: float, omega_z: float, species: ParticleSpecies
) -> float:
    """Order-of-magnitude spin-spin coupling J (rad/s) for co-trapped ions
    in a magnetic gradient: J = (mu_B b)^2 / (2 m hbar omega_z^2)."""
    if gradient < 0.0 or omega_z <= 0.0:
        raise InputError("gradient must be >= 0 and omega_z > 0")
    return (mu_B * gradient) ** 2 / (2.0 * species.mass * hbar * omega_z**2)
