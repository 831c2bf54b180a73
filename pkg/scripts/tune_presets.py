"""Scan the under-specified preset parameters against their published targets.

The published trap description pins the pixel size, the gap width and the
voltage values, but not the guard/plane radii nor which pixel ring carries
which listed voltage.  This script scans those open choices on a coarse
mesh and reports the candidates, ordered by how well they match the target
frequency, height and depth figures.  The winning values are frozen into
pixeltrap.presets; re-run the relevant stage if the geometry code changes.

Usage: python scripts/tune_presets.py [bigtrap|tighttrap|fig1|depths]
"""

import argparse
import math
import sys

import numpy as np

from pixeltrap.analysis import MagneticField, characterize_site
from pixeltrap.bem import BemField, solve_basis
from pixeltrap.constants import Ca40_plus
from pixeltrap.geometry import build_pixel_layout, mesh_layout

B = MagneticField(7.0)
PANELS = 3000

TIGHT_VALUES = (-0.2369, 1.3171, -28.3125)  # three shaded pixel rings
TIGHT_GUARD = 8.1845
TIGHT_PLANE = 10.2997
FIG1_BLACK = -2.8
FIG1_DARK = 3.0


def make_layout(gi_f, go_f, po_f):
    base = build_pixel_layout(3, 300e-6, 4e-6)
    arr = base.pixel_array_radius()
    gi = gi_f * arr
    return build_pixel_layout(
        3, 300e-6, 4e-6,
        guard_inner_radius=gi,
        guard_outer_radius=go_f * gi,
        plane_outer_radius=po_f * go_f * gi,
    )


def solve(layout):
    mesh = mesh_layout(layout, PANELS)
    return solve_basis(mesh)


def ring_voltages(layout, ring_values, guard, plane):
    volts = {}
    for el in layout:
        if el.group == "pixel":
            volts[el.id] = ring_values[layout.pixel_ring(el.id)]
        elif el.group == "guard":
            volts[el.id] = guard
        else:
            volts[el.id] = plane
    return volts


def axial_min(basis, volts, z_lo=0.05e-3, z_hi=2.5e-3):
    z = np.linspace(z_lo, z_hi, 300)
    pts = np.column_stack([np.zeros_like(z), np.zeros_like(z), z])
    u = Ca40_plus.charge * BemField(basis, volts).potential(pts)
    i = int(np.argmin(u))
    if i in (0, len(z) - 1):
        return None
    return z[i]


def stage_bigtrap():
    print("geometry scan against bigtrap (0/-10/+10 V): target 500 kHz")
    for gi_f in (1.05, 1.2, 1.4):
        for go_f in (1.5, 2.0, 3.0):
            for po_f in (2.0, 4.0):
                lay = make_layout(gi_f, go_f, po_f)
                basis = solve(lay)
                volts = ring_voltages(lay, [0.0] * 4, -10.0, 10.0)
                z0 = axial_min(basis, volts)
                if z0 is None:
                    print(f"gi={gi_f} go={go_f} po={po_f}: no axial minimum")
                    continue
                s = characterize_site(volts, basis, Ca40_plus, B,
                                      seed=np.array([0, 0, z0]))
                print(f"gi={gi_f} go={go_f} po={po_f}: "
                      f"wz/2pi={s.omega_z / 2 / math.pi / 1e3:6.0f} kHz "
                      f"z={s.position[2] * 1e6:5.0f} um stable={s.stable}")


def stage_tighttrap(gi_f, go_f, po_f):
    print(f"ring-assignment scan, geometry gi={gi_f} go={go_f} po={po_f}")
    print("targets: 1 MHz, 0.2 mm height")
    from itertools import product
    lay = make_layout(gi_f, go_f, po_f)
    basis = solve(lay)
    rows = []
    for values in product((0.0,) + TIGHT_VALUES, repeat=4):
        volts = ring_voltages(lay, list(values), TIGHT_GUARD, TIGHT_PLANE)
        z0 = axial_min(basis, volts)
        if z0 is None:
            continue
        try:
            s = characterize_site(volts, basis, Ca40_plus, B,
                                  seed=np.array([0, 0, z0]))
        except Exception:
            continue
        if not s.stable:
            continue
        f_khz = s.omega_z / 2 / math.pi / 1e3
        rows.append((abs(f_khz - 1000) / 1000 + abs(s.position[2] - 2e-4) / 2e-4,
                     values, f_khz, s.position[2] * 1e6))
    rows.sort(key=lambda r: r[0])
    for score, values, f_khz, z_um in rows[:12]:
        print(f"rings {values}: wz/2pi={f_khz:6.0f} kHz z={z_um:5.0f} um score={score:.2f}")


def stage_fig1(gi_f, go_f, po_f):
    print(f"fig1 assignment scan, geometry gi={gi_f} go={go_f} po={po_f}")
    print("target: 1.6 MHz axial")
    lay = make_layout(gi_f, go_f, po_f)
    basis = solve(lay)
    rows = []
    for black in range(4):
        for dark in range(4):
            if dark == black:
                continue
            values = [1.0] * 4
            values[black] = FIG1_BLACK
            values[dark] = FIG1_DARK
            volts = ring_voltages(lay, values, 0.0, 0.0)
            z0 = axial_min(basis, volts, z_hi=1.5e-3)
            if z0 is None:
                continue
            try:
                s = characterize_site(volts, basis, Ca40_plus, B,
                                      seed=np.array([0, 0, z0]))
            except Exception:
                continue
            if not s.stable:
                continue
            f_khz = s.omega_z / 2 / math.pi / 1e3
            rows.append((abs(f_khz - 1600) / 1600, values, f_khz,
                         s.position[2] * 1e6))
    rows.sort(key=lambda r: r[0])
    for score, values, f_khz, z_um in rows[:8]:
        print(f"rings {values}: wz/2pi={f_khz:6.0f} kHz z={z_um:5.0f} um score={score:.2f}")


def stage_depths(gi_f, go_f, po_f, tight_values):
    """Depth check for the finalist geometry (slow)."""
    lay = make_layout(gi_f, go_f, po_f)
    basis = solve(lay)
    for tag, values, guard, plane in [
        ("bigtrap", [0.0] * 4, -10.0, 10.0),
        ("tighttrap", list(tight_values), TIGHT_GUARD, TIGHT_PLANE),
    ]:
        volts = ring_voltages(lay, values, guard, plane)
        z0 = axial_min(basis, volts)
        s = characterize_site(volts, basis, Ca40_plus, B,
                              seed=np.array([0, 0, z0]), with_depth=True)
        print(f"{tag}: wz/2pi={s.omega_z / 2 / math.pi / 1e3:.0f} kHz "
              f"z={s.position[2] * 1e6:.0f} um depth={s.depth_ev:.2f} eV")


if __name__ == "__main__":
    p = argparse.ArgumentParser()
    p.add_argument("stage", choices=["bigtrap", "tighttrap", "fig1", "depths"])
    p.add_argument("--geometry", type=float, nargs=3, default=(1.05, 2.0, 2.0),
                   metavar=("GI", "GO", "PO"))
    p.add_argument("--tight", type=float, nargs=4,
                   default=(0.0, -0.2369, 1.3171, -28.3125))
    args = p.parse_args()
    if args.stage == "bigtrap":
        stage_bigtrap()
    elif args.stage == "tighttrap":
        stage_tighttrap(*args.geometry)
    elif args.stage == "fig1":
        stage_fig1(*args.geometry)
    else:
        stage_depths(*args.geometry, args.tight)
