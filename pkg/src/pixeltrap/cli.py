"""Command-line front end for the trap design pipeline.

Subcommands cover the whole workflow: ``mesh`` and ``basis`` build the
electrostatic model, ``scenario`` reruns the preset configurations,
``optimize`` inverts a well specification into voltages, ``transport``
plans adiabatic moves, and ``simulate``/``spectrum`` integrate and
analyse single-ion motion.

Exit codes: 0 on success, 1 when a computation fails (no convergence,
escape, infeasible bounds), 2 for bad input (unknown scenario, malformed
config, missing file).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .analysis import MagneticField, characterize_site, trap_depth
from .bem import BemField, ChargeBasis, solve_basis
from .cache import cached_basis
from .constants import SPECIES, ParticleSpecies
from .dynamics import ParticleState, Trajectory, power_spectrum, simulate, spectrum
from .errors import ComputationError, InputError
from .geometry import (
    ElectrodeLayout,
    build_pixel_layout,
    load_layout,
    mesh_layout,
)
from .optimizer import (
    RegularizationConfig,
    TargetSpec,
    TransportPlan,
    crystal_voltages,
    lambda_sweep,
    lateral_transport_plan,
    racetrack_voltages,
    solve_voltages,
    vertical_transport_plan,
)
from .presets import MANIFEST, get_scenario, paper_layout, scenario_names

EV = 1.602176634e-19


# ---------------------------------------------------------------------------
# small IO helpers


def _limit_threads(n: int | None) -> None:
    if not n or n < 1:
        return
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ[var] = str(n)
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=n)
    except ImportError:
        pass


def _load_layout_config(path: str | None) -> ElectrodeLayout:
    """Layout from a JSON config file, or the calibrated default."""
    if path is None:
        return paper_layout()
    p = Path(path)
    if not p.exists():
        raise InputError(f"layout config not found: {p}")
    with open(p) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"malformed layout config {p}: {exc}") from None
    if not isinstance(doc, dict):
        raise InputError(f"layout config {p} must hold a JSON object")
    if "electrodes" in doc:
        return load_layout(p)
    known = {
        "n_rings",
        "circumcircle_diameter",
        "gap_width",
        "guard_inner_radius",
        "guard_outer_radius",
        "plane_outer_radius",
        "arc_segments",
    }
    unknown = set(doc) - known
    if unknown:
        raise InputError(f"unknown layout keys: {sorted(unknown)}")
    missing = {"n_rings", "circumcircle_diameter", "gap_width"} - set(doc)
    if missing:
        raise InputError(f"layout config missing keys: {sorted(missing)}")
    try:
        return build_pixel_layout(**doc)
    except TypeError as exc:
        raise InputError(f"bad layout config: {exc}") from None


def _species(name: str) -> ParticleSpecies:
    try:
        return SPECIES[name]
    except KeyError:
        known = ", ".join(sorted(SPECIES))
        raise InputError(f"unknown species '{name}'; available: {known}") from None


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_table(path: Path, header: list[str], columns: list[np.ndarray],
                 fmt: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        doc = {h: np.asarray(c).tolist() for h, c in zip(header, columns)}
        _write_json(path.with_suffix(".json"), doc)
        return
    data = np.column_stack(columns)
    np.savetxt(path, data, delimiter=",", comments="", header=",".join(header))


def _site_report(site, extra: dict | None = None) -> dict:
    doc = {
        "position_m": site.position.tolist(),
        "frequencies_hz": site.frequencies_hz,
        "stable": bool(site.stable),
        "tilt_deg": site.tilt_deg,
        "species": site.species.name,
        "warnings": list(site.warnings),
    }
    if site.depth_ev is not None:
        doc["depth_ev"] = site.depth_ev
    if extra:
        doc.update(extra)
    return doc


# ---------------------------------------------------------------------------
# grids and profiles


def _axial_profile(provider, species, z_lo, z_hi, n=600):
    z = np.linspace(z_lo, z_hi, n)
    pts = np.zeros((n, 3))
    pts[:, 2] = z
    phi = provider.potential(pts)
    return z, phi, species.charge * phi / EV


def _axial_profile_through(provider, species, x, y, z_lo, z_hi, n=600):
    z = np.linspace(z_lo, z_hi, n)
    pts = np.column_stack([np.full(n, x), np.full(n, y), z])
    phi = provider.potential(pts)
    return z, phi, species.charge * phi / EV


def _xy_grid(provider, species, extent, height, n=101):
    g = np.linspace(-extent, extent, n)
    X, Y = np.meshgrid(g, g, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, height)])
    phi = provider.potential(pts)
    return X.ravel(), Y.ravel(), phi, species.charge * phi / EV


def _write_profile(out: Path, name: str, provider, species, z_lo, z_hi, fmt):
    z, phi, u = _axial_profile(provider, species, z_lo, z_hi)
    _write_table(out / name, ["z_m", "potential_v", "energy_ev"],
                 [z, phi, u], fmt)


def _write_grid(out: Path, name: str, provider, species, extent, height, fmt):
    x, y, phi, u = _xy_grid(provider, species, extent, height)
    _write_table(out / name, ["x_m", "y_m", "potential_v", "energy_ev"],
                 [x, y, phi, u], fmt)


# ---------------------------------------------------------------------------
# subcommands


def cmd_mesh(args) -> int:
    layout = _load_layout_config(args.config)
    mesh = mesh_layout(layout, args.panels)
    out = Path(args.out or "mesh.npz")
    mesh.save(out)
    print(f"wrote {out}: {len(mesh)} panels over {len(mesh.electrode_ids)} "
          f"electrodes (target {args.panels})")
    return 0


def cmd_basis(args) -> int:
    layout = _load_layout_config(args.config)
    if args.no_cache:
        basis = solve_basis(mesh_layout(layout, args.panels))
        hit = False
    else:
        basis, hit = cached_basis(layout, args.panels, cache_dir=args.cache_dir,
                                  refresh=args.refresh)
    if args.out:
        basis.save(args.out)
        print(f"wrote {args.out} ({'cache hit' if hit else 'fresh solve'}, "
              f"{len(basis.mesh)} panels)")
    else:
        print(f"basis ready in cache ({'hit' if hit else 'solved'}, "
              f"{len(basis.mesh)} panels)")
    return 0


def _scenario_basis(scn, args) -> ChargeBasis:
    layout = scn.layout()
    basis, hit = cached_basis(layout, args.panels or scn.n_panels,
                              cache_dir=args.cache_dir)
    return basis


def _run_site_scenario(scn, basis, out: Path, fmt: str) -> dict:
    layout = basis_layout = scn.layout()
    volts = scn.voltages(basis_layout)
    seed = np.asarray(scn.seed_position, dtype=float)
    site = characterize_site(volts, basis, scn.species, scn.b_field(), seed)
    provider = BemField(basis, volts)
    if scn.with_depth:
        site.depth_ev = trap_depth(volts, basis, site.position, scn.species,
                                   provider=provider)
    zs = site.position[2]
    _write_profile(out, "axial_profile.csv", provider, scn.species,
                   1e-6, max(4.0 * zs, 1.2e-3), fmt)
    extent = layout.pixel_array_radius()
    _write_grid(out, "xy_grid.csv", provider, scn.species, extent, zs, fmt)
    report = _site_report(site, {"voltages_v": volts})
    _write_json(out / "site.json", report)
    return {
        "omega_z_over_2pi_hz": site.omega_z / (2.0 * math.pi),
        "height_m": float(zs),
        "depth_ev": site.depth_ev,
    }


def _run_crystal_scenario(scn, basis, out: Path, fmt: str) -> dict:
    o = scn.options
    reg = RegularizationConfig(lam=o["lam"], voltage_bounds=o["voltage_bounds"])
    sol = crystal_voltages(
        o["n_sites"], o["ring_radius"], basis, scn.species,
        height=o["height"], omega_z=o["omega_z"], reg=reg,
    )
    provider = BemField(basis, sol.voltages)
    depth = trap_depth(sol.voltages, basis, sol.positions[0], scn.species,
                       provider=provider)
    report = sol.report()
    report["depth_ev"] = depth
    _write_json(out / "site.json", report)
    x0, y0, z0 = sol.positions[0]
    z, phi, u = _axial_profile_through(provider, scn.species, x0, y0,
                                       1e-6, 4.0 * z0)
    _write_table(out / "axial_profile.csv", ["z_m", "potential_v", "energy_ev"],
                 [z, phi, u], fmt)
    _write_grid(out, "xy_grid.csv", provider, scn.species,
                scn.layout().pixel_array_radius(), z0, fmt)
    wz = np.asarray(sol.omega_z)
    return {
        "omega_z_over_2pi_hz": float(wz.min() / (2.0 * math.pi)),
        "omega_z_over_2pi_hz_max": float(wz.max() / (2.0 * math.pi)),
        "depth_ev": depth,
    }


def _run_racetrack_scenario(scn, basis, out: Path, fmt: str) -> dict:
    o = scn.options
    reg = RegularizationConfig(lam=o["lam"], voltage_bounds=o["voltage_bounds"])
    sol = racetrack_voltages(o["ring_diameter"], basis, scn.species, reg=reg)
    provider = BemField(basis, sol.voltages)
    report = sol.report()
    _write_json(out / "site.json", report)
    r0 = float(np.mean(sol.crest_radii))
    h0 = float(np.mean(sol.heights))
    z, phi, u = _axial_profile_through(provider, scn.species, r0, 0.0,
                                       1e-6, 4.0 * h0)
    _write_table(out / "axial_profile.csv", ["z_m", "potential_v", "energy_ev"],
                 [z, phi, u], fmt)
    _write_grid(out, "xy_grid.csv", provider, scn.species,
                scn.layout().pixel_array_radius(), h0, fmt)
    return {"crest_radius_m": r0}


def _run_transport_scenario(scn, basis, out: Path, fmt: str) -> dict:
    o = scn.options
    b = scn.b_field()
    if scn.kind == "lateral":
        plan = lateral_transport_plan(o["from_pixel"], o["to_pixel"],
                                      o["n_steps"], basis, scn.species, b)
    else:
        plan = vertical_transport_plan(np.asarray(o["heights"]), basis,
                                       scn.species, b)
    plan.save(out / "plan.json")
    state0 = ParticleState(plan.start_site.copy(), np.zeros(3), 0.0)
    traj = simulate(state0, plan, basis, scn.species, b, plan.duration)
    traj.save_csv(out / "trajectory.csv")
    end_volts = plan.voltages_at(plan.duration)
    site = characterize_site(end_volts, basis, scn.species, b, plan.end_site)
    _write_json(out / "site.json", _site_report(site))
    provider = BemField(basis, end_volts)
    _write_profile(out, "axial_profile.csv", provider, scn.species,
                   1e-6, 4.0 * site.position[2], fmt)
    _write_grid(out, "xy_grid.csv", provider, scn.species,
                scn.layout().pixel_array_radius(), site.position[2], fmt)
    arrival = float(np.linalg.norm(traj.positions[-1] - plan.end_site))
    return {
        "duration_s": plan.duration,
        "arrival_error_m": arrival,
        "waypoints": len(plan.times),
    }


def cmd_scenario(args) -> int:
    scn = get_scenario(args.name)
    out = Path(args.out or f"scenario_{scn.name}")
    out.mkdir(parents=True, exist_ok=True)
    basis = _scenario_basis(scn, args)
    fmt = args.format
    runners = {
        "site": _run_site_scenario,
        "crystal": _run_crystal_scenario,
        "racetrack": _run_racetrack_scenario,
        "lateral": _run_transport_scenario,
        "vertical": _run_transport_scenario,
    }
    measured = runners[scn.kind](scn, basis, out, fmt)
    bands = MANIFEST.get(scn.name, {})
    checks = {}
    for quantity, (lo, hi) in bands.items():
        value = measured.get(quantity)
        checks[quantity] = {
            "value": value,
            "band": [lo, hi],
            "ok": value is not None and lo <= value <= hi,
        }
    report = {"scenario": scn.name, "measured": measured, "checks": checks}
    _write_json(out / "report.json", report)
    for q, c in checks.items():
        tag = "ok" if c["ok"] else "OUT OF BAND"
        print(f"{scn.name} {q}: {c['value']:.6g} in [{c['band'][0]:.6g}, "
              f"{c['band'][1]:.6g}] {tag}")
    if not bands:
        print(f"{scn.name}: wrote {', '.join(sorted(p.name for p in out.iterdir()))}")
    return 0


def _load_target(path: str, species: ParticleSpecies) -> TargetSpec:
    p = Path(path)
    if not p.exists():
        raise InputError(f"target config not found: {p}")
    with open(p) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"malformed target config {p}: {exc}") from None
    if "center" not in doc:
        raise InputError("target config needs a 'center': [x, y, z]")
    center = np.asarray(doc["center"], dtype=float)
    if center.shape != (3,):
        raise InputError("'center' must hold three coordinates in metres")
    if "axial_curvature" in doc:
        k = float(doc["axial_curvature"])
    elif "omega_z_hz" in doc:
        w = 2.0 * math.pi * float(doc["omega_z_hz"])
        k = species.mass * w * w / species.charge
    else:
        raise InputError("target config needs 'axial_curvature' (V/m^2) "
                         "or 'omega_z_hz'")
    halfwidth = float(doc.get("halfwidth", 30e-6))
    return TargetSpec.harmonic_well(center, k, halfwidth=halfwidth)


def cmd_optimize(args) -> int:
    species = _species(args.species)
    target = _load_target(args.target, species)
    if args.basis:
        basis = ChargeBasis.load(args.basis)
    else:
        layout = _load_layout_config(args.config)
        basis, _ = cached_basis(layout, args.panels, cache_dir=args.cache_dir)
    bounds = tuple(args.bounds) if args.bounds else None
    reg = RegularizationConfig(lam=args.lam, voltage_bounds=bounds)
    if args.sweep:
        lams = np.array([float(x) for x in args.sweep.split(",")])
        norms, resids = lambda_sweep(target, basis, lams, reg=reg)
        out = Path(args.out or "lambda_sweep.csv")
        _write_table(out, ["lambda", "voltage_norm_v", "residual_rms_v"],
                     [lams, norms, resids], args.format)
        for lam, vn, rr in zip(lams, norms, resids):
            print(f"lambda={lam:g}: |v|={vn:.6g} V residual={rr:.3g} V")
        return 0
    sol = solve_voltages(target, reg, basis)
    out = Path(args.out or "voltages.json")
    sol.save(out)
    rep = sol.report()
    site = characterize_site(sol.voltages, basis, species,
                             MagneticField(args.b0), target.center)
    rep["achieved_omega_z_hz"] = site.omega_z / (2.0 * math.pi)
    rep["site_position_m"] = site.position.tolist()
    _write_json(out.with_name(out.stem + "_report.json"), rep)
    print(f"wrote {out}: residual {sol.residual_rms:.3g} V, "
          f"omega_z/2pi {rep['achieved_omega_z_hz'] / 1e3:.1f} kHz at "
          f"z {site.position[2] * 1e6:.1f} um")
    return 0


def cmd_transport(args) -> int:
    species = _species(args.species)
    b = MagneticField(args.b0)
    if args.basis:
        basis = ChargeBasis.load(args.basis)
    else:
        layout = _load_layout_config(args.config)
        basis, _ = cached_basis(layout, args.panels, cache_dir=args.cache_dir)
    if args.kind == "lateral":
        if not (args.from_pixel and args.to_pixel):
            raise InputError("lateral transport needs --from and --to pixel ids")
        plan = lateral_transport_plan(args.from_pixel, args.to_pixel,
                                      args.steps, basis, species, b)
    else:
        if not args.heights or len(args.heights) < 2:
            raise InputError("vertical transport needs --heights h1 h2 [...]")
        plan = vertical_transport_plan(np.asarray(args.heights), basis,
                                       species, b)
    out = Path(args.out or f"{args.kind}_plan.json")
    plan.save(out)
    print(f"wrote {out}: {len(plan.times)} waypoints over "
          f"{plan.duration * 1e3:.3f} ms")
    if args.simulate:
        state0 = ParticleState(plan.start_site.copy(), np.zeros(3), 0.0)
        traj = simulate(state0, plan, basis, species, b, plan.duration)
        csv = out.with_name(out.stem + "_trajectory.csv")
        traj.save_csv(csv)
        err = float(np.linalg.norm(traj.positions[-1] - plan.end_site))
        print(f"wrote {csv}: arrival error {err * 1e9:.1f} nm")
    return 0


def _load_voltage_file(path: str) -> dict[str, float]:
    p = Path(path)
    if not p.exists():
        raise InputError(f"voltage file not found: {p}")
    with open(p) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"malformed voltage file {p}: {exc}") from None
    if isinstance(doc, dict) and "voltages_v" in doc:
        doc = doc["voltages_v"]
    if not isinstance(doc, dict):
        raise InputError("voltage file must map electrode ids to volts")
    return {str(k): float(v) for k, v in doc.items()}


def cmd_simulate(args) -> int:
    species = _species(args.species)
    b = MagneticField(args.b0)
    if args.basis:
        basis = ChargeBasis.load(args.basis)
    else:
        layout = _load_layout_config(args.config)
        basis, _ = cached_basis(layout, args.panels, cache_dir=args.cache_dir)
    if args.plan:
        drive_src = TransportPlan.load(args.plan)
        duration = args.duration or drive_src.duration
    elif args.voltages:
        drive_src = _load_voltage_file(args.voltages)
        duration = args.duration
    elif args.scenario:
        scn = get_scenario(args.scenario)
        drive_src = scn.voltages(scn.layout())
        duration = args.duration
    else:
        raise InputError("simulate needs --plan, --voltages or --scenario")
    if not duration or duration <= 0.0:
        raise InputError("--duration must be positive")
    if args.position is None:
        raise InputError("simulate needs --position x y z (metres)")
    pos = np.asarray(args.position, dtype=float)
    vel = np.asarray(args.velocity or (0.0, 0.0, 0.0), dtype=float)
    state0 = ParticleState(pos, vel, 0.0)
    traj = simulate(state0, drive_src, basis, species, b, duration,
                    dt=args.dt, stride=args.stride)
    out = Path(args.out or "trajectory.csv")
    traj.save_csv(out)
    ripple = float(np.ptp(traj.total_energy) / max(abs(traj.total_energy[0]),
                                                   1e-300))
    print(f"wrote {out}: {len(traj.times)} samples, energy ripple {ripple:.2e}")
    return 0


def _trajectory_from_csv(path: str, species: ParticleSpecies) -> Trajectory:
    p = Path(path)
    if not p.exists():
        raise InputError(f"trajectory file not found: {p}")
    try:
        data = np.loadtxt(p, delimiter=",", skiprows=1)
    except ValueError as exc:
        raise InputError(f"malformed trajectory csv {p}: {exc}") from None
    if data.ndim != 2 or data.shape[1] < 9:
        raise InputError("trajectory csv needs columns t,x,y,z,vx,vy,vz,"
                         "E_kin,E_pot")
    t = data[:, 0]
    if len(t) < 4:
        raise InputError("trajectory too short for a spectrum")
    dt = float(np.median(np.diff(t)))
    return Trajectory(
        times=t,
        positions=data[:, 1:4],
        velocities=data[:, 4:7],
        kinetic=data[:, 7],
        potential=data[:, 8],
        dt=dt,
        stride=1,
        species=species,
    )


def cmd_spectrum(args) -> int:
    species = _species(args.species)
    traj = _trajectory_from_csv(args.trajectory, species)
    omega, amps = power_spectrum(traj, args.component)
    freqs = omega / (2.0 * math.pi)
    out = Path(args.out or f"spectrum_{args.component}.csv")
    _write_table(out, ["freq_hz", "amplitude"], [freqs, amps], args.format)
    peaks = spectrum(traj, args.component, n_peaks=args.peaks)
    for w, a in peaks:
        print(f"peak {w / (2.0 * math.pi * 1e3):.3f} kHz amplitude {a:.3e}")
    print(f"wrote {out} ({len(freqs)} bins)")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--threads", type=int, default=None,
                        help="cap BLAS/worker thread count")
    common.add_argument("--seed", type=int, default=0,
                        help="seed for randomized refinements")
    common.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="table output format")
    common.add_argument("--cache-dir", default=None,
                        help="basis cache directory (default: ~/.cache/pixeltrap)")
    common.add_argument("--config", default=None,
                        help="layout config JSON (default: calibrated layout)")
    common.add_argument("--panels", type=int, default=3000,
                        help="target panel count for meshing")
    common.add_argument("--species", default="Ca40+",
                        help="particle species name")
    common.add_argument("--b0", type=float, default=7.0,
                        help="magnetic field along z in tesla")

    p = argparse.ArgumentParser(
        prog="pixeltrap",
        description="design and simulate hexagonal-pixel surface Penning traps",
    )
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("mesh", parents=[common],
                       help="mesh a layout into flat panels")
    m.set_defaults(func=cmd_mesh)

    b = sub.add_parser("basis", parents=[common],
                       help="solve or load the electrode charge basis")
    b.add_argument("--refresh", action="store_true",
                   help="ignore any cached basis and re-solve")
    b.add_argument("--no-cache", action="store_true",
                   help="solve without touching the cache")
    b.set_defaults(func=cmd_basis)

    s = sub.add_parser("scenario", parents=[common],
                       help="run a preset configuration")
    s.add_argument("name", help="one of: " + ", ".join(scenario_names()))
    s.set_defaults(func=cmd_scenario)

    o = sub.add_parser("optimize", parents=[common],
                       help="solve electrode voltages for a target well")
    o.add_argument("target", help="target config JSON")
    o.add_argument("--lambda", dest="lam", type=float, default=1e-6,
                   help="Tikhonov weight")
    o.add_argument("--bounds", nargs=2, type=float, metavar=("LO", "HI"),
                   help="voltage bounds in volts")
    o.add_argument("--basis", help="explicit basis file instead of the cache")
    o.add_argument("--sweep", help="comma-separated lambda list; report "
                   "voltage norms instead of solving once")
    o.set_defaults(func=cmd_optimize)

    t = sub.add_parser("transport", parents=[common],
                       help="plan an adiabatic well move")
    t.add_argument("kind", choices=("lateral", "vertical"))
    t.add_argument("--from", dest="from_pixel", help="start pixel id")
    t.add_argument("--to", dest="to_pixel", help="goal pixel id")
    t.add_argument("--steps", type=int, default=9,
                   help="waypoints for the lateral corridor")
    t.add_argument("--heights", nargs="+", type=float,
                   help="vertical waypoint heights in metres")
    t.add_argument("--basis", help="explicit basis file instead of the cache")
    t.add_argument("--simulate", action="store_true",
                   help="integrate a test ion along the plan")
    t.set_defaults(func=cmd_transport)

    i = sub.add_parser("simulate", parents=[common],
                       help="integrate one ion in a static or planned field")
    i.add_argument("--plan", help="transport plan JSON")
    i.add_argument("--voltages", help="voltage set JSON")
    i.add_argument("--scenario", help="preset name supplying the voltages")
    i.add_argument("--position", nargs=3, type=float, metavar=("X", "Y", "Z"))
    i.add_argument("--velocity", nargs=3, type=float, metavar=("VX", "VY", "VZ"))
    i.add_argument("--duration", type=float, help="integration time in seconds")
    i.add_argument("--dt", type=float, default=None, help="time step override")
    i.add_argument("--stride", type=int, default=None, help="sample stride")
    i.add_argument("--basis", help="explicit basis file instead of the cache")
    i.set_defaults(func=cmd_simulate)

    f = sub.add_parser("spectrum", parents=[common],
                       help="motional spectrum of a saved trajectory")
    f.add_argument("trajectory", help="trajectory CSV from simulate")
    f.add_argument("--component", choices=("x", "y", "z"), default="z")
    f.add_argument("--peaks", type=int, default=6)
    f.set_defaults(func=cmd_spectrum)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _limit_threads(args.threads)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ComputationError as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
