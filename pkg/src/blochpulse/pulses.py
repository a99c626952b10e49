"""Piecewise sigmoid control waveforms for an LMT Bloch pulse.

A pulse consists of a lattice-depth loading ramp of duration tau_load, an
acceleration phase of duration T (sigmoid rise, plateau, sigmoid fall with
ramp time tau_ramp), and a mirrored unloading ramp.  The acceleration time
T is solved so the accumulated momentum equals 2 N hbar k_L.

Sigmoid tails are truncated at segment boundaries, not renormalized; with
the standard shape parameter h = 0.02 the truncation is ~2e-11 relative.
"""

from dataclasses import dataclass

import numpy as np
from scipy.constants import hbar
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import brentq

from .errors import InfeasibleScheduleError
from .physconfig import SpeciesLattice, bloch_period


def _sigmoid(x):
    # numerically safe logistic
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _sigmoid_integral(x):
    # antiderivative of the logistic: log(1 + e^x), safe for large |x|
    return np.logaddexp(0.0, x)


def _vectorized(func):
    def wrapper(self, t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        out = func(self, np.atleast_1d(t))
        return float(out[0]) if scalar else out
    wrapper.__name__ = func.__name__
    wrapper.__doc__ = func.__doc__
    return wrapper


@dataclass(frozen=True)
class PulseSchedule:
    """Control waveforms V0(t), a_L(t) and their integrals.

    Times in seconds; V0 in units of E_r; a_L in m/s^2.  t = 0 is the
    start of loading; the acceleration phase spans
    [tau_load, tau_load + t_accel].
    """

    cfg: SpeciesLattice
    n_bloch: float
    v0_peak: float
    al_peak: float
    tau_load: float
    tau_ramp: float
    t_accel: float
    shape_h: float = 0.02

    @property
    def duration(self):
        return self.t_accel + 2.0 * self.tau_load

    @property
    def momentum_target(self):
        """2 N hbar k_L (kg m/s)."""
        return 2.0 * self.n_bloch * hbar * self.cfg.wave_number

    @_vectorized
    def lattice_depth(self, t):
        """V0(t) in E_r."""
        w = self.shape_h * self.tau_load
        t0 = self.tau_load
        t1 = self.tau_load + self.t_accel
        out = np.full(t.shape, self.v0_peak)
        if self.tau_load > 0:
            load = t < t0
            out[load] = self.v0_peak * _sigmoid((t[load] - t0 / 2.0) / w)
            unload = t > t1
            out[unload] = self.v0_peak * _sigmoid(
                -(t[unload] - (t1 + self.tau_load / 2.0)) / w)
        out[t < 0] = 0.0
        out[t > self.duration] = 0.0
        return out

    @_vectorized
    def acceleration(self, t):
        """a_L(t) in m/s^2."""
        t0 = self.tau_load
        t1 = self.tau_load + self.t_accel
        out = np.zeros(t.shape)
        inside = (t > t0) & (t < t1)
        if self.tau_ramp > 0:
            w = self.shape_h * self.tau_ramp
            rise = inside & (t < t0 + self.tau_ramp)
            out[rise] = self.al_peak * _sigmoid(
                (t[rise] - (t0 + self.tau_ramp / 2.0)) / w)
            fall = inside & (t > t1 - self.tau_ramp)
            out[fall] = self.al_peak * _sigmoid(
                -(t[fall] - (t1 - self.tau_ramp / 2.0)) / w)
            plateau = inside & ~rise & ~fall
            out[plateau] = self.al_peak
        else:
            out[inside] = self.al_peak
        return out

    @_vectorized
    def momentum(self, t):
        """p_L(t) = m * integral of a_L, exact piecewise antiderivative."""
        t0 = self.tau_load
        t1 = self.tau_load + self.t_accel
        tc = np.clip(t, t0, t1)
        if self.tau_ramp > 0:
            w = self.shape_h * self.tau_ramp
            r0 = t0 + self.tau_ramp / 2.0       # rise center
            f0 = t1 - self.tau_ramp / 2.0       # fall center
            tr = np.minimum(tc, t0 + self.tau_ramp)
            v = w * (_sigmoid_integral((tr - r0) / w)
                     - _sigmoid_integral((t0 - r0) / w))
            tp = np.clip(tc, t0 + self.tau_ramp, t1 - self.tau_ramp)
            v = v + (tp - (t0 + self.tau_ramp))
            tf = np.maximum(tc, t1 - self.tau_ramp)
            # falling sigmoid integrates to (t - t_start) minus log terms
            v = v + (tf - (t1 - self.tau_ramp)) - w * (
                _sigmoid_integral((tf - f0) / w)
                - _sigmoid_integral((t1 - self.tau_ramp - f0) / w))
        else:
            v = tc - t0
        return self.cfg.atom_mass * self.al_peak * v

    @_vectorized
    def position(self, t):
        """x_L(t) = double integral of a_L, by quadrature of p_L/m."""
        out = np.empty_like(t)
        for i, ti in enumerate(t):
            if ti <= self.tau_load:
                out[i] = 0.0
                continue
            grid = np.linspace(self.tau_load, ti, 2001)
            out[i] = np.trapezoid(self.momentum(grid), grid) / self.cfg.atom_mass
        return out

    def chirp(self, t):
        """Frequency difference ramp Delta nu(t) = (k_L/pi) p_L(t)/m (Hz)."""
        return (self.cfg.wave_number / np.pi) * self.momentum(t) / self.cfg.atom_mass

    def rabi_frequency(self, t):
        """Two-photon Rabi frequency Omega(t) = V0(t) / 2 hbar (rad/s)."""
        return self.lattice_depth(t) * self.cfg.recoil_energy / (2.0 * hbar)

    def sample(self, times):
        """Waveform table (t, V0, aL, pL, xL, dnu) for CSV output."""
        times = np.asarray(times, dtype=float)
        p = self.momentum(times)
        x = cumulative_trapezoid(p / self.cfg.atom_mass, times, initial=0.0)
        return {
            "t": times,
            "V0": self.lattice_depth(times),
            "aL": self.acceleration(times),
            "pL": p,
            "xL": x,
            "dnu": self.chirp(times),
        }


def _momentum_gain(al_peak, tau_ramp, h, t_accel):
    """Velocity gained over the acceleration phase (per unit mass)."""
    if tau_ramp == 0:
        return al_peak * t_accel
    w = h * tau_ramp
    r = tau_ramp / (2.0 * w)
    ramp = w * (_sigmoid_integral(r) - _sigmoid_integral(-r))
    plateau = al_peak * (t_accel - 2.0 * tau_ramp)
    return plateau + 2.0 * al_peak * ramp


def build_schedule(cfg: SpeciesLattice, n_bloch: float, v0_peak: float,
                   al_peak: float, tau_load: float, tau_ramp: float,
                   shape_h: float = 0.02) -> PulseSchedule:
    """Solve the acceleration time so the pulse transfers 2 N hbar k_L.

    Raises InfeasibleScheduleError when even a zero-length plateau
    (t_accel = 2 tau_ramp) would overshoot the momentum target.
    """
    if n_bloch < 0:
        raise ValueError("n_bloch must be non-negative")
    if al_peak <= 0:
        raise ValueError("al_peak must be positive")
    if tau_load < 0 or tau_ramp < 0:
        raise ValueError("durations must be non-negative")
    target = 2.0 * n_bloch * hbar * cfg.wave_number / cfg.atom_mass
    if tau_ramp > 0:
        floor = _momentum_gain(al_peak, tau_ramp, shape_h, 2.0 * tau_ramp)
        if floor > target:
            t_b = bloch_period(cfg, al_peak)
            minimal_n = int(np.ceil(floor / (al_peak * t_b)))
            raise InfeasibleScheduleError(
                f"two ramps of {tau_ramp} s already transfer {floor:.3e} m/s "
                f"> target {target:.3e} m/s; need N >= {minimal_n}",
                minimal_n=minimal_n)

    def deficit(t_accel):
        return _momentum_gain(al_peak, tau_ramp, shape_h, t_accel) - target

    lo = 2.0 * tau_ramp
    if deficit(lo) == 0.0:
        t_accel = lo
    else:
        hi = target / al_peak + 2.0 * tau_ramp + bloch_period(cfg, al_peak)
        t_accel = brentq(deficit, lo, hi, xtol=1e-18, rtol=8.9e-16)
    return PulseSchedule(cfg=cfg, n_bloch=n_bloch, v0_peak=v0_peak,
                         al_peak=al_peak, tau_load=tau_load,
                         tau_ramp=tau_ramp, t_accel=t_accel, shape_h=shape_h)


def chirp_profile(schedule: PulseSchedule, times) -> dict:
    """Sampled laser chirp and Rabi frequency realizing the schedule."""
    times = np.asarray(times, dtype=float)
    return {
        "t": times,
        "dnu": schedule.chirp(times),
        "rabi": schedule.rabi_frequency(times),
    }
