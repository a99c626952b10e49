"""Split-step Fourier integration of the time-dependent Schroedinger
equation in the comoving lattice frame, with absorbing boundaries and
ladder-resolved loss diagnostics.

Everything runs in recoil units: x in 1/k_L, p in hbar k_L, t in hbar/E_r,
so the Hamiltonian reads p^2 + V0(t) cos^2(x) + F(t) x with the tilt
F = m a_L / (k_L E_r).  Atoms that tunnel out accelerate down the tilt and
meet an amplitude mask; the removed probability is the tunneling loss.
The reduced lattice frame (kinetic (p - p_L)^2, untilted potential) is
retained for the frame-consistency check.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import GridError
from .physconfig import SpeciesLattice, bloch_period
from .pulses import PulseSchedule


@dataclass(frozen=True)
class SimConfig:
    """Grid and stepping for one propagation.

    n_periods          spatial span in lattice periods
    points_per_period  grid resolution (>= 16; power of two recommended)
    dt                 recoil-unit time step
    absorber_fraction  absorbed strip width on each side, fraction of span
    absorber_exponent  cosine-mask exponent (amplitude profile)
    frame              "lattice" or "reduced"
    bin_halfwidth      momentum bin half-width for diagnostics (hbar k_L)
    j_max              largest |j| momentum bin reported individually
    """

    n_periods: int = 128
    points_per_period: int = 32
    dt: float = 3.3e-4
    absorber_fraction: float = 0.25
    absorber_exponent: float = 0.125
    frame: str = "lattice"
    bin_halfwidth: float = 1.0
    j_max: int = 4
    record_every: int = 200

    def __post_init__(self):
        if self.points_per_period < 16:
            raise GridError("need at least 16 points per lattice period")
        if not 0.0 <= self.absorber_fraction < 0.5:
            raise GridError("absorber_fraction must be in [0, 0.5)")
        if self.frame not in ("lattice", "reduced"):
            raise GridError(f"unknown frame {self.frame!r}")
        if self.dt <= 0:
            raise GridError("dt must be positive")

    @property
    def n_points(self):
        return self.n_periods * self.points_per_period

    @property
    def span(self):
        """Grid length in units of 1/k_L."""
        return self.n_periods * np.pi

    @property
    def nyquist(self):
        """Largest representable |p| in hbar k_L."""
        return float(self.points_per_period)

    @classmethod
    def for_schedule(cls, cfg: SpeciesLattice, schedule: PulseSchedule,
                     n_periods=128, absorber_fraction=0.25,
                     steps_per_bloch=2048, frame="lattice", **kwargs):
        """Derive a safe grid and step from the pulse parameters.

        Points per period are chosen so the grid Nyquist exceeds the
        worst-case escape momentum sqrt(F * span/2) (lattice frame) or the
        final lattice momentum (reduced frame) with margin; dt obeys both
        the Bloch-period resolution and the potential-phase bound.
        """
        f_pk = cfg.force_parameter(schedule.al_peak)
        half_span = n_periods * np.pi / 2.0
        if frame == "lattice":
            p_need = np.sqrt(max(f_pk * half_span, 1.0)) + 2.0
        else:
            p_need = 2.0 * schedule.n_bloch + 6.0
        ppp = 16
        while ppp < 1.05 * p_need:
            ppp *= 2
        v_max = schedule.v0_peak + (f_pk * half_span if frame == "lattice"
                                    else 0.0)
        dt_phase = (np.pi / 4.0) / v_max
        t_b = cfg.time_to_recoil(bloch_period(cfg, schedule.al_peak))
        dt = min(t_b / steps_per_bloch, dt_phase)
        return cls(n_periods=n_periods, points_per_period=ppp, dt=dt,
                   absorber_fraction=absorber_fraction, frame=frame, **kwargs)

    def validate_for(self, cfg: SpeciesLattice, schedule: PulseSchedule):
        f_pk = cfg.force_parameter(schedule.al_peak)
        if self.frame == "lattice":
            v_max = schedule.v0_peak + f_pk * self.span / 2.0
            p_need = np.sqrt(max(f_pk * self.span / 2.0, 0.0)) + 2.0
        else:
            v_max = schedule.v0_peak
            p_need = 2.0 * schedule.n_bloch + 4.0
        if v_max * self.dt >= np.pi / 4.0:
            raise GridError(
                f"potential phase per step {v_max * self.dt:.2f} rad "
                "exceeds pi/4; reduce dt or the grid span")
        if self.nyquist < p_need:
            raise GridError(
                f"dynamics reach {p_need:.1f} hbar k_L but the grid "
                f"Nyquist is {self.nyquist:.1f}; raise points_per_period")


@dataclass
class WavefunctionGrid:
    """Complex wavefunction on a uniform grid with absorbed-norm ledger."""

    x: np.ndarray
    psi: np.ndarray
    dx: float
    time: float = 0.0
    absorbed: float = 0.0
    frame_phase: float = 0.0   # accumulated integral p_L^2/2m dt / hbar

    def norm(self):
        return float(np.sum(np.abs(self.psi) ** 2) * self.dx)

    def check_ledger(self, tol=1e-8):
        total = self.norm() + self.absorbed
        if abs(total - 1.0) > tol:
            raise GridError(f"norm ledger broken: stored + absorbed = {total}")
        return total

    def momentum_weights(self):
        """(momenta, probability weights) normalized to the stored norm."""
        k = 2.0 * np.pi * np.fft.fftfreq(len(self.psi), d=self.dx)
        w = np.abs(np.fft.fft(self.psi)) ** 2
        s = w.sum()
        if s > 0:
            w *= self.norm() / s
        return k, w

    def mean_momentum(self):
        k, w = self.momentum_weights()
        total = w.sum()
        return float(np.sum(k * w) / total) if total > 0 else 0.0

    def position_spread(self):
        n = self.norm()
        if n == 0:
            return 0.0
        w = np.abs(self.psi) ** 2 * self.dx / n
        mean = np.sum(self.x * w)
        return float(np.sqrt(np.sum((self.x - mean) ** 2 * w)))


def init_state(cfg: SpeciesLattice, dist, sim: SimConfig) -> WavefunctionGrid:
    """Synthesize the position wavefunction from the momentum amplitude.

    The amplitude is sampled on the grid's reciprocal momenta and
    inverse-transformed (exactly unitary on the grid), centered on the
    grid and normalized to 1e-10.
    """
    n = sim.n_points
    dx = sim.span / n
    x = (np.arange(n) - n // 2) * dx
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=dx)
    amp = np.asarray(dist(k), dtype=complex)
    amp[np.abs(k) > 1.0] = 0.0
    psi = np.roll(np.fft.ifft(amp), n // 2)   # localize at x = 0
    nrm = np.sqrt(np.sum(np.abs(psi) ** 2) * dx)
    if nrm == 0:
        raise GridError("momentum amplitude vanished on the grid")
    psi = psi / nrm
    state = WavefunctionGrid(x=x, psi=psi, dx=dx)
    if state.position_spread() > sim.span / 4.0:
        raise GridError(
            f"initial spread {state.position_spread():.1f}/k_L exceeds a "
            f"quarter of the grid ({sim.span / 4.0:.1f}/k_L)")
    return state


def absorber_mask(sim: SimConfig):
    """Amplitude mask: 1 in the interior, cos^exponent roll-off outside."""
    n = sim.n_points
    x = (np.arange(n) - n // 2) * (sim.span / n)
    half = sim.span / 2.0
    start = half * (1.0 - 2.0 * sim.absorber_fraction)
    width = half - start
    mask = np.ones(n)
    if sim.absorber_fraction == 0.0:
        return mask
    deep = np.abs(x) >= start
    xi = np.clip((np.abs(x[deep]) - start) / width, 0.0, 1.0)
    mask[deep] = np.cos(0.5 * np.pi * xi) ** sim.absorber_exponent
    mask[np.abs(x) >= half - (sim.span / n)] = 0.0
    return mask


@dataclass
class TimeSeries:
    times: list = field(default_factory=list)
    norm: list = field(default_factory=list)
    absorbed: list = field(default_factory=list)
    mean_p: list = field(default_factory=list)


def _tilt_ratio(cfg, v0_er, a_l):
    # m a / (k_L V0), the argument of the minima-displacement arcsin
    if v0_er <= 0:
        return 0.0
    return cfg.atom_mass * a_l / (cfg.wave_number * v0_er
                                  * cfg.recoil_energy)


def propagate(state: WavefunctionGrid, cfg: SpeciesLattice,
              schedule: PulseSchedule, sim: SimConfig,
              t_final=None, record=False, shift_correction=False):
    """Strang-split propagation through the schedule.

    Per step: half kinetic in momentum space, full potential phase at the
    midpoint time, half kinetic, then the absorber mask; the removed norm
    accumulates in state.absorbed.  With shift_correction=True the lattice
    phase is offset at acceleration discontinuities so the potential
    minima do not jump (box schedules only).
    """
    sim.validate_for(cfg, schedule)
    t_unit = cfg.recoil_time
    t_end = schedule.duration if t_final is None else t_final
    n_steps = int(np.ceil(cfg.time_to_recoil(t_end) / sim.dt))
    dt = sim.dt

    n = len(state.psi)
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=state.dx)
    mask = absorber_mask(sim)
    absorbing = sim.absorber_fraction > 0.0
    x = state.x
    cos2 = np.cos(x) ** 2
    reduced = sim.frame == "reduced"
    half_kinetic = np.exp(-0.5j * dt * k**2)

    series = TimeSeries() if record else None
    psi = state.psi
    pot_key = None
    pot_phase = None
    lattice_offset = 0.0
    a_prev = 0.0

    for step in range(n_steps):
        t_mid = (state.time + 0.5 * dt) * t_unit
        v0 = float(schedule.lattice_depth(t_mid))
        a_l = float(schedule.acceleration(t_mid))
        f = cfg.force_parameter(a_l)

        if shift_correction and a_l != a_prev:
            s_new = np.clip(_tilt_ratio(cfg, v0, a_l), -1.0, 1.0)
            s_old = np.clip(_tilt_ratio(cfg, v0, a_prev), -1.0, 1.0)
            lattice_offset += 0.5 * (np.arcsin(s_new) - np.arcsin(s_old))
            a_prev = a_l
            pot_key = None

        if reduced:
            p_l = schedule.momentum(t_mid) / cfg.recoil_momentum
            half_kinetic = np.exp(-0.5j * dt * (k - p_l) ** 2)
            key = (v0, lattice_offset)
            if key != pot_key:
                if lattice_offset != 0.0:
                    pot = v0 * np.cos(x + lattice_offset) ** 2
                else:
                    pot = v0 * cos2
                pot_phase = np.exp(-1j * dt * pot)
                pot_key = key
        else:
            key = (v0, f, lattice_offset)
            if key != pot_key:
                if lattice_offset != 0.0:
                    pot = v0 * np.cos(x + lattice_offset) ** 2 + f * x
                else:
                    pot = v0 * cos2 + f * x
                pot_phase = np.exp(-1j * dt * pot)
                pot_key = key

        psi = np.fft.fft(psi)
        psi *= half_kinetic
        psi = np.fft.ifft(psi)
        psi *= pot_phase
        psi = np.fft.fft(psi)
        psi *= half_kinetic
        psi = np.fft.ifft(psi)

        if absorbing:
            before = np.sum(np.abs(psi) ** 2)
            psi *= mask
            after = np.sum(np.abs(psi) ** 2)
            state.absorbed += float((before - after) * state.dx)

        p_l_mid = schedule.momentum(t_mid) / cfg.recoil_momentum
        state.frame_phase += p_l_mid**2 * dt
        state.time += dt

        if record and (step % sim.record_every == 0 or step == n_steps - 1):
            state.psi = psi
            series.times.append(state.time * t_unit)
            series.norm.append(state.norm())
            series.absorbed.append(state.absorbed)
            series.mean_p.append(state.mean_momentum())

    state.psi = psi
    return (state, series) if record else state


def lattice_shift_propagate(state, cfg, schedule, sim, record=False):
    """Box-pulse propagation with the sudden-shift compensation.

    At each acceleration discontinuity the lattice phase is offset by the
    tilt-induced displacement of the potential minima,
    arcsin(m a / k_L V0) / 2 k_L, keeping the minima in place.
    """
    if schedule.tau_ramp != 0:
        raise ValueError("lattice-shift correction applies to box pulses "
                         "(tau_ramp = 0)")
    if abs(_tilt_ratio(cfg, schedule.v0_peak, schedule.al_peak)) > 1.0:
        raise ValueError("tilt exceeds the maximal lattice force; the "
                         "minima displacement is undefined")
    return propagate(state, cfg, schedule, sim, record=record,
                     shift_correction=True)


@dataclass
class LossReport:
    """Decomposition of pulse losses at unload time.

    tunneling        absorbed norm (escaped down the tilt)
    bins             momentum-bin populations around 2 j hbar k_L
    target_survival  the j = 0 bin
    nonadiabatic     per-ladder attribution of the j != 0 bins
    other            weight beyond the reported bins
    """

    tunneling: float
    bins: dict
    target_survival: float
    nonadiabatic: dict
    other: float

    @property
    def total_loss(self):
        return 1.0 - self.target_survival

    def check_total(self, tol=1e-6):
        total = self.tunneling + sum(self.bins.values()) + self.other
        if abs(total - 1.0) > tol:
            raise GridError(f"loss report sums to {total}, not 1")
        return total


def diagnostics(state: WavefunctionGrid, cfg: SpeciesLattice,
                schedule: PulseSchedule, sim: SimConfig) -> LossReport:
    """Momentum-binned loss report after the unload ramp.

    Surviving amplitude is binned around 2 j hbar k_L in the lattice
    frame (half-width bin_halfwidth); j = 0 is the target state, j != 0
    is attributed to ladder |j| via the adiabatic band-to-momentum
    mapping of the unload.
    """
    if schedule.lattice_depth(state.time * cfg.recoil_time) > \
            1e-6 * schedule.v0_peak:
        raise ValueError("diagnostics requires the lattice to be unloaded")
    if 2.0 * sim.j_max + sim.bin_halfwidth > sim.nyquist:
        raise GridError("momentum bins extend beyond the grid Nyquist")
    if sim.bin_halfwidth > 1.0:
        raise GridError("momentum bins of half-width "
                        f"{sim.bin_halfwidth} hbar k_L overlap")
    k, weights = state.momentum_weights()
    if sim.frame == "reduced":
        k = k - schedule.momentum(state.time * cfg.recoil_time) \
            / cfg.recoil_momentum
    bins = {}
    for j in range(-sim.j_max, sim.j_max + 1):
        sel = np.abs(k - 2.0 * j) < sim.bin_halfwidth
        bins[j] = float(weights[sel].sum())
    other = float(state.norm() - sum(bins.values()))
    nonadiabatic = {}
    for j, w in bins.items():
        if j != 0:
            nonadiabatic[abs(j)] = nonadiabatic.get(abs(j), 0.0) + w
    report = LossReport(tunneling=state.absorbed, bins=bins,
                        target_survival=bins[0], nonadiabatic=nonadiabatic,
                        other=other)
    report.check_total()
    return report
