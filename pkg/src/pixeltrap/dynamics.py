"""Single-particle motion in the trap field plus a uniform axial B field.

The integrator is the Boris scheme with the magnetic rotation applied
exactly (B is along z, so the rotation is a plane rotation by q B dt / m).
Per-step field evaluation uses a tricubic Catmull-Rom interpolant of the
per-electrode potentials sampled once on a regular grid; the interpolant
is validated against direct summation before use and differentiated
analytically, so the force is the exact gradient of a C1 potential and
the energy ledger is meaningful.  Direct per-step BEM evaluation remains
available as the (slow) oracle path.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from .analysis import MagneticField, motional_frequencies, stationary_point
from .bem import BemField, ChargeBasis, electrode_response, voltage_vector
from .constants import ParticleSpecies
from .errors import ComputationError, InputError
from .optimizer import TransportPlan, electrode_centers


class EscapeError(ComputationError):
    """Particle left the valid region; carries the last state."""

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class PlaneCrossingError(EscapeError):
    """Particle hit the electrode plane z = 0."""


class GridError(ComputationError):
    """Interpolation grid failed its validation against direct sums."""


@dataclass
class ParticleState:
    """Position, velocity and time of one particle."""

    position: np.ndarray
    velocity: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).copy()
        self.velocity = np.asarray(self.velocity, dtype=float).copy()
        if self.position.shape != (3,) or self.velocity.shape != (3,):
            raise InputError("state needs 3-vectors for position and velocity")
        if self.position[2] <= 0.0:
            raise InputError("particle must start above the electrode plane")


@dataclass
class RotatingWallDrive:
    """Quadrupolar rotating drive on the guard quadrants.

    Electrode k at azimuth theta_k receives A cos(Omega t + phase - 2 theta_k),
    the m = 2 pattern that couples the two radial modes.
    """

    amplitude: float
    frequency: float
    phase: float = 0.0
    target_electrodes: tuple | None = None

    def __post_init__(self):
        if self.amplitude < 0.0:
            raise InputError("drive amplitude must be >= 0")


@dataclass
class Trajectory:
    """States sampled at a fixed stride, with an energy ledger."""

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    kinetic: np.ndarray
    potential: np.ndarray
    dt: float
    stride: int
    species: ParticleSpecies

    @property
    def total_energy(self) -> np.ndarray:
        return self.kinetic + self.potential

    @property
    def sample_dt(self) -> float:
        return self.dt * self.stride

    def final_state(self) -> ParticleState:
        return ParticleState(self.positions[-1], self.velocities[-1],
                             float(self.times[-1]))

    def save_csv(self, path) -> None:
        data = np.column_stack([
            self.times, self.positions, self.velocities,
            self.kinetic, self.potential,
        ])
        np.savetxt(path, data, delimiter=",", comments="",
                   header="t,x,y,z,vx,vy,vz,E_kin,E_pot")


# ---------------------------------------------------------------------------
# field providers


def _catmull_rom_into(u, w, dw):
    """Catmull-Rom weights and their u-derivatives for nodes i-1 .. i+2."""
    u2 = u * u
    u3 = u2 * u
    w[0] = 0.5 * (-u3 + 2.0 * u2 - u)
    w[1] = 0.5 * (3.0 * u3 - 5.0 * u2 + 2.0)
    w[2] = 0.5 * (-3.0 * u3 + 4.0 * u2 + u)
    w[3] = 0.5 * (u3 - u2)
    dw[0] = 0.5 * (-3.0 * u2 + 4.0 * u - 1.0)
    dw[1] = 0.5 * (9.0 * u2 - 10.0 * u)
    dw[2] = 0.5 * (-9.0 * u2 + 8.0 * u + 1.0)
    dw[3] = 0.5 * (3.0 * u2 - 2.0 * u)


class GridField:
    """Tricubic Catmull-Rom interpolant of potentials on a regular grid.

    ``values`` is (nx, ny, nz) for a collapsed (fixed-voltage) field or
    (nx, ny, nz, K) holding one column per electrode, combined at
    evaluation time with a voltage vector.  The valid region excludes one
    boundary cell on every face (the cubic stencil needs neighbours).
    """

    def __init__(self, x, y, z, values, electrode_ids=None):
        self.x, self.y, self.z = (np.asarray(a, dtype=float) for a in (x, y, z))
        self.values = values
        self.electrode_ids = electrode_ids
        self.h = np.array([a[1] - a[0] for a in (self.x, self.y, self.z)])
        self.origin = np.array([self.x[0], self.y[0], self.z[0]])
        self.n = np.array([len(self.x), len(self.y), len(self.z)])
        if np.any(self.n < 4):
            raise InputError("grid needs at least 4 nodes per axis")
        self.lo = self.origin + self.h
        self.hi = self.origin + (self.n - 2) * self.h
        # scalar copies and scratch buffers for the per-step fast path
        self._ox, self._oy, self._oz = (float(v) for v in self.origin)
        self._hx, self._hy, self._hz = (float(v) for v in self.h)
        self._nx, self._ny, self._nz = (int(v) for v in self.n)
        self._w = [np.empty(4) for _ in range(3)]
        self._dw = [np.empty(4) for _ in range(3)]

    @classmethod
    def build(
        cls,
        basis: ChargeBasis,
        lo,
        hi,
        spacing: float = 2e-6,
        voltages: dict[str, float] | None = None,
    ) -> "GridField":
        """Sample the BEM potentials on a padded grid covering [lo, hi].

        With ``voltages`` the field is collapsed to a single scalar grid;
        without, one column per electrode is kept for time-varying sets.
        """
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        axes = []
        for a in range(3):
            n_in = max(2, int(math.ceil((hi[a] - lo[a]) / spacing)) + 1)
            axes.append(lo[a] - spacing + spacing * np.arange(n_in + 2))
        if axes[2][0] <= 0.0:
            raise InputError(
                "grid would reach the electrode plane; raise the box or "
                "shrink the spacing"
            )
        gx, gy, gz = np.meshgrid(*axes, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
        shape = gx.shape
        if voltages is not None:
            vals = BemField(basis, voltages).potential(pts).reshape(shape)
            ids = None
        else:
            vals = electrode_response(basis, pts).reshape(*shape, -1)
            ids = list(basis.electrode_ids)
        return cls(axes[0], axes[1], axes[2], vals, ids)

    def inside_xyz(self, x, y, z) -> bool:
        return (self.lo[0] <= x <= self.hi[0]
                and self.lo[1] <= y <= self.hi[1]
                and self.lo[2] <= z <= self.hi[2])

    def inside(self, p) -> bool:
        return self.inside_xyz(float(p[0]), float(p[1]), float(p[2]))

    def eval_xyz(self, x, y, z, volt_vec=None):
        """Potential and field components at one point, as plain floats."""
        ux = (x - self._ox) / self._hx
        uy = (y - self._oy) / self._hy
        uz = (z - self._oz) / self._hz
        ix = min(max(int(ux), 1), self._nx - 3)
        iy = min(max(int(uy), 1), self._ny - 3)
        iz = min(max(int(uz), 1), self._nz - 3)
        (wx, wy, wz), (dwx, dwy, dwz) = self._w, self._dw
        _catmull_rom_into(ux - ix, wx, dwx)
        _catmull_rom_into(uy - iy, wy, dwy)
        _catmull_rom_into(uz - iz, wz, dwz)
        block = self.values[ix - 1:ix + 3, iy - 1:iy + 3, iz - 1:iz + 3]
        if self.electrode_ids is not None:
            block = (block.reshape(64, -1) @ volt_vec).reshape(4, 4, 4)
        a = block @ wz
        az = block @ dwz
        b = a @ wy
        phi = float(b @ wx)
        ex = -float(b @ dwx) / self._hx
        ey = -float((a @ dwy) @ wx) / self._hy
        ez = -float((az @ wy) @ wx) / self._hz
        return phi, ex, ey, ez

    def evaluate(self, p, volt_vec=None):
        """Potential and field at one point; volt_vec combines columns."""
        phi, ex, ey, ez = self.eval_xyz(
            float(p[0]), float(p[1]), float(p[2]), volt_vec)
        return phi, np.array([ex, ey, ez])

    def validate(self, basis: ChargeBasis, voltages: dict[str, float],
                 n: int = 120, seed: int = 0,
                 pot_tol: float = 1e-5, field_tol: float = 1e-3) -> float:
        """Compare against direct summation at random interior points.

        Errors are measured relative to the potential range and the field
        scale inside the box.  The field tolerance is looser than the
        potential one: the integrator consumes the exact gradient of the
        interpolant, so field discrepancy distorts the potential shape a
        little (sub-0.1 um site shifts at 1e-3) but cannot pump or drain
        energy.  Raises GridError beyond the tolerances and returns the
        relative potential error otherwise.
        """
        rng = np.random.default_rng(seed)
        pts = self.lo + (self.hi - self.lo) * rng.random((n, 3))
        ref = BemField(basis, voltages)
        phi_d = ref.potential(pts)
        e_d = ref.field(pts)
        if self.electrode_ids is None:
            vv = None
        else:
            vv = voltage_vector(voltages, self.electrode_ids)
        phi_g = np.empty(n)
        e_g = np.empty((n, 3))
        for i in range(n):
            phi_g[i], e_g[i] = self.evaluate(pts[i], vv)
        pot_scale = max(np.ptp(phi_d), 1e-30)
        field_scale = max(np.max(np.abs(e_d)), 1e-30)
        pot_err = float(np.max(np.abs(phi_g - phi_d)) / pot_scale)
        field_err = float(np.max(np.abs(e_g - e_d)) / field_scale)
        if pot_err > pot_tol or field_err > field_tol:
            raise GridError(
                f"interpolation error {pot_err:.2e} (potential) / "
                f"{field_err:.2e} (field) exceeds ({pot_tol:g}, {field_tol:g}); "
                "refine the grid spacing"
            )
        return pot_err


class DirectField:
    """Per-step exact BEM evaluation, the slow oracle path."""

    def __init__(self, basis: ChargeBasis, voltages: dict[str, float]):
        self._f = BemField(basis, voltages)

    def eval_xyz(self, x, y, z, volt_vec=None):
        pt = np.array([[x, y, z]])
        e = self._f.field(pt)[0]
        return (float(self._f.potential(pt)[0]),
                float(e[0]), float(e[1]), float(e[2]))

    def evaluate(self, p, volt_vec=None):
        pt = np.asarray(p, dtype=float)[None, :]
        return float(self._f.potential(pt)[0]), self._f.field(pt)[0]

    def inside_xyz(self, x, y, z) -> bool:
        return z > 0.0

    def inside(self, p) -> bool:
        return float(p[2]) > 0.0


# ---------------------------------------------------------------------------
# integrator


def boris_step(
    state: ParticleState,
    e_field,
    b_field: MagneticField,
    dt: float,
    species: ParticleSpecies,
) -> ParticleState:
    """One Boris step: half electric kick, exact rotation, half kick.

    ``e_field`` is the electric field vector at the particle in V/m.  The
    time step should resolve the cyclotron motion (dt <= 0.05 x 2 pi/omega_c).
    """
    if dt > 0.05 * 2.0 * math.pi / species.cyclotron_frequency(b_field.b0):
        raise InputError("dt too coarse to resolve the cyclotron rotation")
    qm = species.charge / species.mass
    half = 0.5 * dt * qm * np.asarray(e_field, dtype=float)
    v = state.velocity + half
    ang = qm * b_field.b0 * dt
    c, s = math.cos(ang), math.sin(ang)
    vx = c * v[0] + s * v[1]
    vy = -s * v[0] + c * v[1]
    v = np.array([vx, vy, v[2]]) + half
    pos = state.position + v * dt
    if pos[2] <= 0.0:
        raise PlaneCrossingError(
            "particle crossed the electrode plane",
            ParticleState(np.maximum(pos, [pos[0], pos[1], 1e-12]), v,
                          state.time + dt),
        )
    return ParticleState(pos, v, state.time + dt)


def _drive_columns(drive: RotatingWallDrive, basis: ChargeBasis):
    """Electrode ids and azimuths the rotating wall acts on."""
    ids = drive.target_electrodes
    if ids is None:
        ids = tuple(sorted(e for e in basis.electrode_ids if e.startswith("guard")))
    if not ids:
        raise InputError("rotating wall drive has no target electrodes")
    centers = electrode_centers(basis.mesh)
    for e in ids:
        if e not in centers:
            raise InputError(f"unknown drive electrode {e!r}")
    angles = np.array([math.atan2(centers[e][1], centers[e][0]) for e in ids])
    return list(ids), angles


def _plan_table(plan: TransportPlan, electrode_ids):
    wp = np.array([[w[e] for e in electrode_ids] for w in plan.waypoints])
    return plan.timestamps.copy(), wp


def simulate(
    state0: ParticleState,
    voltages_or_plan,
    basis: ChargeBasis,
    species: ParticleSpecies,
    b_field: MagneticField,
    duration: float,
    dt: float | None = None,
    drive: RotatingWallDrive | None = None,
    damping: float = 0.0,
    stride: int | None = None,
    margin: float = 25e-6,
    grid_spacing: float = 2e-6,
    provider=None,
    validate: bool = True,
) -> Trajectory:
    """Integrate one particle and return the sampled trajectory.

    Static voltage sets are collapsed to one interpolation grid; a
    TransportPlan keeps per-electrode grids and interpolates the waypoint
    voltages linearly in time.  ``damping`` is a linear velocity decay
    rate (1/s), applied symmetrically around each step.  The particle
    escaping the interpolation box raises EscapeError with the last state
    attached.
    """
    if duration <= 0.0:
        raise InputError("duration must be positive")
    omega_c = species.cyclotron_frequency(b_field.b0)
    if dt is None:
        dt = 2.0 * math.pi / (100.0 * omega_c)
    if dt > 0.05 * 2.0 * math.pi / omega_c:
        raise InputError("dt too coarse to resolve the cyclotron rotation")
    n_steps = max(1, int(round(duration / dt)))
    if stride is None:
        stride = max(1, int(math.ceil(n_steps / 65536)))

    is_plan = isinstance(voltages_or_plan, TransportPlan)
    ids = list(basis.electrode_ids)
    if is_plan:
        plan = voltages_or_plan
        ts, wp = _plan_table(plan, ids)
        track = plan.sites if plan.sites is not None else np.vstack(
            [plan.start_site, plan.end_site]
        )
        lo = np.minimum(track.min(axis=0), state0.position) - margin
        hi = np.maximum(track.max(axis=0), state0.position) + margin
        static_v = None
    else:
        static_v = dict(voltages_or_plan)
        lo = state0.position - margin
        hi = state0.position + margin

    drive_idx = drive_ang = None
    if drive is not None:
        d_ids, drive_ang = _drive_columns(drive, basis)
        drive_idx = np.array([ids.index(e) for e in d_ids])

    per_electrode = is_plan or drive is not None
    if provider is not None:
        field = provider
        volt0 = voltage_vector(static_v, ids) if (per_electrode and static_v) else None
    elif per_electrode:
        field = GridField.build(basis, lo, hi, grid_spacing)
        if validate:
            if static_v is not None:
                probes = [static_v]
            else:
                picks = {0, len(wp) // 2, len(wp) - 1}
                probes = [dict(zip(ids, wp[i])) for i in sorted(picks)]
            for probe in probes:
                field.validate(basis, probe)
        volt0 = voltage_vector(static_v, ids) if static_v is not None else None
    else:
        field = GridField.build(basis, lo, hi, grid_spacing, voltages=static_v)
        if validate:
            field.validate(basis, static_v)
        volt0 = None

    qm = species.charge / species.mass
    q = species.charge
    m = species.mass
    ang = qm * b_field.b0 * dt
    cr, sr = math.cos(ang), math.sin(ang)
    damp = math.exp(-0.5 * damping * dt) if damping > 0.0 else 1.0
    halfk = 0.5 * dt * qm

    n_samples = n_steps // stride + 1
    t_out = np.empty(n_samples)
    x_out = np.empty((n_samples, 3))
    v_out = np.empty((n_samples, 3))
    ke_out = np.empty(n_samples)
    pe_out = np.empty(n_samples)

    x, y, z = (float(v) for v in state0.position)
    vx, vy, vz = (float(v) for v in state0.velocity)
    t0 = state0.time
    t = t0
    seg = 0
    k_out = 0
    eval_xyz = field.eval_xyz
    inside = field.inside_xyz
    static_case = not is_plan and drive is None
    if not inside(x, y, z):
        raise EscapeError(
            "start position is outside the field region",
            ParticleState([x, y, z], [vx, vy, vz], t),
        )

    def volt_at(t_now):
        if is_plan:
            nonlocal seg
            while seg < len(ts) - 2 and t_now >= ts[seg + 1]:
                seg += 1
            if len(ts) == 1:
                v = wp[0].copy()
            else:
                f = (t_now - ts[seg]) / (ts[seg + 1] - ts[seg])
                f = min(max(f, 0.0), 1.0)
                v = wp[seg] * (1.0 - f) + wp[seg + 1] * f
        elif volt0 is not None:
            v = volt0.copy()
        else:
            v = None
        if drive_idx is not None:
            if v is None:
                v = np.zeros(len(ids))
            v[drive_idx] += drive.amplitude * np.cos(
                drive.frequency * t_now + drive.phase - 2.0 * drive_ang
            )
        return v

    # The velocity state lives on half-integer steps (leapfrog).  Pull the
    # caller's synchronized v(0) back by half a step so that the average of
    # the pre- and post-update velocities at each step is the synchronized
    # velocity, which keeps the energy ledger second order in dt.
    phi, ex, ey, ez = eval_xyz(x, y, z, volt0 if static_case else volt_at(t))
    hb = -0.25 * dt * qm
    cb, sb = math.cos(-0.5 * ang), math.sin(-0.5 * ang)
    ax = vx + hb * ex
    ay = vy + hb * ey
    vz = vz + 2.0 * hb * ez
    vx = cb * ax + sb * ay + hb * ex
    vy = -sb * ax + cb * ay + hb * ey

    for k in range(n_steps + 1):
        if not inside(x, y, z):
            raise EscapeError(
                f"particle escaped the field region at t = {t:.3e} s",
                ParticleState([x, y, z], [vx, vy, vz], t),
            )
        vv = volt0 if static_case else volt_at(t)
        phi, ex, ey, ez = eval_xyz(x, y, z, vv)
        px, py, pz = vx, vy, vz
        if damp != 1.0:
            vx *= damp
            vy *= damp
            vz *= damp
        ax = vx + halfk * ex
        ay = vy + halfk * ey
        vz = vz + 2.0 * halfk * ez
        vx = cr * ax + sr * ay + halfk * ex
        vy = -sr * ax + cr * ay + halfk * ey
        if damp != 1.0:
            vx *= damp
            vy *= damp
            vz *= damp
        if k % stride == 0:
            mx = 0.5 * (px + vx)
            my = 0.5 * (py + vy)
            mz = 0.5 * (pz + vz)
            t_out[k_out] = t
            x_out[k_out, 0] = x
            x_out[k_out, 1] = y
            x_out[k_out, 2] = z
            v_out[k_out, 0] = mx
            v_out[k_out, 1] = my
            v_out[k_out, 2] = mz
            ke_out[k_out] = 0.5 * m * (mx * mx + my * my + mz * mz)
            pe_out[k_out] = q * phi
            k_out += 1
        if k == n_steps:
            break
        x += vx * dt
        y += vy * dt
        z += vz * dt
        t = t0 + (k + 1) * dt
        if z <= 0.0:
            raise PlaneCrossingError(
                "particle crossed the electrode plane",
                ParticleState([x, y, 1e-12], [vx, vy, vz], t),
            )

    return Trajectory(
        t_out[:k_out], x_out[:k_out], v_out[:k_out],
        ke_out[:k_out], pe_out[:k_out], dt, stride, species,
    )


# ---------------------------------------------------------------------------
# spectra


def power_spectrum(trajectory: Trajectory, component):
    """Hann-windowed amplitude spectrum of one coordinate.

    Returns (omega, amplitude): angular frequencies in rad/s and the
    window-corrected amplitude in meters.
    """
    axis = {"x": 0, "y": 1, "z": 2}.get(component, component)
    x = trajectory.positions[:, axis]
    n = len(x)
    if n < 64:
        raise InputError("too few samples for a spectrum (need >= 64)")
    w = np.hanning(n)
    xw = (x - x.mean()) * w
    amp = np.abs(np.fft.rfft(xw)) * 2.0 / w.sum()
    freq = 2.0 * math.pi * np.fft.rfftfreq(n, d=trajectory.sample_dt)
    return freq, amp


def spectrum(trajectory: Trajectory, component, n_peaks: int = 6,
             min_rel: float = 1e-3):
    """Dominant spectral peaks of one coordinate, strongest first.

    Peak frequencies are refined by parabolic interpolation of log
    amplitude across the maximum bin, which beats the raw bin spacing by
    far more than the required 1%.  Returns a list of (omega, amplitude).
    """
    freq, amp = power_spectrum(trajectory, component)
    floor = min_rel * amp[1:].max()
    peaks = []
    for k in range(1, len(amp) - 1):
        if amp[k] >= amp[k - 1] and amp[k] > amp[k + 1] and amp[k] >= floor:
            la, lb, lc = (math.log(max(a, 1e-300)) for a in amp[k - 1:k + 2])
            den = la - 2.0 * lb + lc
            delta = 0.0 if den == 0.0 else 0.5 * (la - lc) / den
            df = freq[1] - freq[0]
            peaks.append((freq[k] + delta * df, amp[k]))
    peaks.sort(key=lambda p: -p[1])
    return peaks[:n_peaks]


def peak_near(peaks, omega: float, window: float = 0.2):
    """The strongest peak within a relative window of a guess, or None."""
    best = None
    for w, a in peaks:
        if abs(w - omega) <= window * omega and (best is None or a > best[1]):
            best = (w, a)
    return best


# ---------------------------------------------------------------------------
# axialization


@dataclass
class AxializationResult:
    """Trajectory plus the radial mode decomposition over time."""

    trajectory: Trajectory
    magnetron_radius: np.ndarray
    cyclotron_radius: np.ndarray
    site: np.ndarray
    decreased: bool

    @property
    def times(self) -> np.ndarray:
        return self.trajectory.times


def radial_mode_radii(trajectory: Trajectory, site, omega_plus: float,
                      omega_minus: float, sign: float):
    """Magnetron and cyclotron circle radii from position and velocity.

    The radial motion is u = A+ exp(i s w+ t) + A- exp(i s w- t) with
    s = -1 for positive charge in B = +z; the two amplitudes follow from
    (u, du/dt) at each sample.
    """
    u = (trajectory.positions[:, 0] - site[0]) + 1j * (
        trajectory.positions[:, 1] - site[1])
    du = trajectory.velocities[:, 0] + 1j * trajectory.velocities[:, 1]
    span = omega_plus - omega_minus
    r_minus = np.abs(du - 1j * sign * omega_plus * u) / span
    r_plus = np.abs(du - 1j * sign * omega_minus * u) / span
    return r_plus, r_minus


def axialize(
    state0: ParticleState,
    voltages: dict[str, float],
    basis: ChargeBasis,
    species: ParticleSpecies,
    b_field: MagneticField,
    drive: RotatingWallDrive,
    duration: float,
    damping: float | None = None,
    dt: float | None = None,
    margin: float = 40e-6,
    stride: int | None = None,
) -> AxializationResult:
    """Drive the rotating wall and track the magnetron radius.

    Shrinking the magnetron circle needs an energy sink, so a weak linear
    velocity damping stands in for the cooling the drive is normally
    paired with (default rate omega_c / 1e4).  A drive that fails to
    shrink the envelope produces a warning, not an error.
    """
    omega_c = species.cyclotron_frequency(b_field.b0)
    if damping is None:
        damping = 1e-4 * omega_c
    provider = BemField(basis, voltages)
    try:
        site = stationary_point(provider, state0.position)
    except (InputError, ComputationError):
        raise InputError("start state is not inside a confining basin")
    H = provider.hessian(site[None, :])[0]
    wz, wp, wm, _, stable = motional_frequencies(H, species, b_field)
    if not stable:
        raise InputError("site is not a stable trap at this field")

    traj = simulate(
        state0, voltages, basis, species, b_field, duration, dt=dt,
        drive=drive, damping=damping, margin=margin, stride=stride,
    )
    sign = -math.copysign(1.0, species.charge * b_field.b0)
    r_plus, r_minus = radial_mode_radii(traj, site, wp, wm, sign)
    tenth = max(len(r_minus) // 10, 1)
    first = float(np.mean(r_minus[:tenth]))
    last = float(np.mean(r_minus[-tenth:]))
    decreased = last < 0.99 * first
    if not decreased:
        warnings.warn(
            "magnetron radius did not decrease; drive detuned or too weak",
            stacklevel=2,
        )
    return AxializationResult(traj, r_minus, r_plus, site, decreased)
