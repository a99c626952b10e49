"""Species and lattice configuration, presets, and unit conversions.

Internally every other module works in recoil units: energies in E_r,
lengths in 1/k_L, momenta in hbar*k_L and times in hbar/E_r.  SI values
enter and leave only through the helpers defined here.
"""

from dataclasses import dataclass

import numpy as np
from scipy.constants import atomic_mass, c, hbar


@dataclass(frozen=True)
class SpeciesLattice:
    """Atomic species constants plus lattice geometry.

    atom_mass          kg
    lattice_wavelength m, wavelength of the lattice beams (lattice constant
                       is half of it)
    transition_wavelength m, wavelength of the dominant dipole transition
    natural_linewidth  rad/s
    """

    atom_mass: float
    lattice_wavelength: float
    transition_wavelength: float
    natural_linewidth: float

    def __post_init__(self):
        if self.atom_mass <= 0:
            raise ValueError("atom_mass must be positive")
        if self.lattice_wavelength <= 0:
            raise ValueError("lattice_wavelength must be positive")
        if self.transition_wavelength <= 0:
            raise ValueError("transition_wavelength must be positive")
        if self.natural_linewidth <= 0:
            raise ValueError("natural_linewidth must be positive")

    @property
    def lattice_constant(self):
        return self.lattice_wavelength / 2.0

    @property
    def wave_number(self):
        """Lattice wave number k_L = pi / d (1/m)."""
        return np.pi / self.lattice_constant

    @property
    def recoil_energy(self):
        """E_r = (hbar k_L)^2 / 2m (J)."""
        return (hbar * self.wave_number) ** 2 / (2.0 * self.atom_mass)

    @property
    def recoil_momentum(self):
        return hbar * self.wave_number

    @property
    def recoil_time(self):
        """hbar / E_r, the unit of time in recoil units (s)."""
        return hbar / self.recoil_energy

    @property
    def resonance_frequency(self):
        """omega_0 = 2 pi c / transition wavelength (rad/s)."""
        return 2.0 * np.pi * c / self.transition_wavelength

    @property
    def detuning(self):
        """Lattice detuning from the atomic resonance, blue positive (rad/s)."""
        return 2.0 * np.pi * c * (1.0 / self.lattice_wavelength
                                  - 1.0 / self.transition_wavelength)

    # --- recoil-unit conversions -------------------------------------
    def force_parameter(self, a_l):
        """Dimensionless tilt m a_L / (k_L E_r); energy per length 1/k_L."""
        return self.atom_mass * a_l / (self.wave_number * self.recoil_energy)

    def ladder_spacing(self, a_l):
        """d m a_L in units of E_r."""
        return np.pi * self.force_parameter(a_l)

    def energy_to_recoil(self, energy_j):
        return energy_j / self.recoil_energy

    def energy_from_recoil(self, energy_er):
        return energy_er * self.recoil_energy

    def time_to_recoil(self, t_s):
        return t_s / self.recoil_time

    def time_from_recoil(self, t_r):
        return t_r * self.recoil_time


@dataclass(frozen=True)
class LaserSystem:
    """Gaussian lattice beam: power (W) and 1/e^2 waist (m)."""

    power: float
    waist: float

    def __post_init__(self):
        if self.power <= 0:
            raise ValueError("power must be positive")
        if self.waist <= 0:
            raise ValueError("waist must be positive")

    @property
    def intensity(self):
        """Peak intensity I_0 = 2P / (pi w^2) (W/m^2)."""
        return 2.0 * self.power / (np.pi * self.waist**2)


def recoil_energy(cfg: SpeciesLattice) -> float:
    """Recoil energy in joules, the library's canonical energy unit."""
    return cfg.recoil_energy


def bloch_period(cfg: SpeciesLattice, a_l: float) -> float:
    """T_B = 2 hbar k_L / (m a_L) in seconds; a_L must be positive."""
    if a_l <= 0:
        raise ValueError(f"Bloch period undefined for a_L = {a_l} <= 0")
    return 2.0 * hbar * cfg.wave_number / (cfg.atom_mass * a_l)


def oscillation_count(cfg: SpeciesLattice, a_l: float, duration: float) -> float:
    """Number of Bloch oscillations N = m a_L T / (2 hbar k_L)."""
    if a_l <= 0:
        raise ValueError(f"a_L = {a_l} must be positive")
    if duration < 0:
        raise ValueError(f"duration = {duration} must be non-negative")
    return cfg.atom_mass * a_l * duration / (2.0 * hbar * cfg.wave_number)


def acceleration_time(cfg: SpeciesLattice, a_l: float, n_bloch: float) -> float:
    """Inverse of oscillation_count: time for N oscillations at fixed a_L."""
    return n_bloch * bloch_period(cfg, a_l)


# --- presets ----------------------------------------------------------
# Overridable field by field from scenario files; the lattice wavelengths
# are documented assumptions (experiments rarely publish them).

def rb87() -> SpeciesLattice:
    """Rb-87 with the lattice near the D2 line."""
    return SpeciesLattice(
        atom_mass=86.909180531 * atomic_mass,
        lattice_wavelength=780.24e-9,
        transition_wavelength=780.241209686e-9,
        natural_linewidth=2.0 * np.pi * 6.0666e6,
    )


def cs133() -> SpeciesLattice:
    """Cs-133; 943 nm lattice reproduces the one-minute-hold oscillation count."""
    return SpeciesLattice(
        atom_mass=132.905451961 * atomic_mass,
        lattice_wavelength=943.0e-9,
        transition_wavelength=852.34727582e-9,
        natural_linewidth=2.0 * np.pi * 5.234e6,
    )


def gebbe_laser() -> LaserSystem:
    """1.2 W at 3.75 mm waist."""
    return LaserSystem(power=1.2, waist=3.75e-3)


def kim_laser() -> LaserSystem:
    """6 W at 1 mm waist."""
    return LaserSystem(power=6.0, waist=1.0e-3)


PRESETS = {"rb87": rb87, "cs133": cs133}
LASER_PRESETS = {"gebbe": gebbe_laser, "kim": kim_laser}
