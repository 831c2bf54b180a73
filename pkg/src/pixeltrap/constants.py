"""Physical constants (SI) and particle species presets.

Values follow the 2019 SI redefinition (CODATA 2018).
"""

from dataclasses import dataclass

eps0 = 8.8541878128e-12     # vacuum permittivity, F/m
qe = 1.602176634e-19        # elementary charge, C (exact)
kB = 1.380649e-23           # Boltzmann constant, J/K (exact)
hbar = 1.054571817e-34      # reduced Planck constant, J*s
mu_B = 9.2740100783e-24     # Bohr magneton, J/T
amu = 1.66053906660e-27     # atomic mass unit, kg
m_e = 9.1093837015e-31      # electron mass, kg

COULOMB = 1.0 / (4.0 * 3.141592653589793 * eps0)


@dataclass(frozen=True)
class ParticleSpecies:
    """A charged particle: name, charge (C, signed) and mass (kg)."""

    name: str
    charge: float
    mass: float

    @property
    def charge_to_mass(self) -> float:
        return self.charge / self.mass

    def cyclotron_frequency(self, b_field: float) -> float:
        """Angular cyclotron frequency omega_c = |q| B / m in rad/s."""
        return abs(self.charge) * b_field / self.mass


Ca40_plus = ParticleSpecies("Ca40+", +qe, 40.0 * amu)
electron = ParticleSpecies("electron", -qe, m_e)

SPECIES = {s.name: s for s in (Ca40_plus, electron)}
