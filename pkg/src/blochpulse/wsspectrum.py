"""Complex Wannier-Stark spectra from the truncated Floquet-Bloch operator.

The one-Bloch-period evolution operator is built at quasi-momentum zero as
a product of per-step exponentials of the reduced-frame generator followed
by the momentum shift; truncating the shift makes the matrix subunitary
and the eigenvalue magnitudes encode tunneling linewidths.

Energy convention: eigenphases are folded into [0, d m a_L).  Because the
cos^2 lattice places potential minima at +-d/2 from the origin while the
approximate ladder formula references a minimum at the origin, folded
Floquet energies carry a constant +d m a_L / 2 relative to the formula;
ladder sorting removes it so reported energies use the site-at-origin
convention and reduce to the Bloch band average as a_L -> 0.
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import eigvals as dense_eigvals
from scipy.optimize import least_squares, linear_sum_assignment

from . import kernels
from .blochband import band_average
from .errors import (ConvergenceError, ContractionError, ClassificationError,
                     SortingAmbiguityError, StepSizeError)
from .physconfig import SpeciesLattice

_GAMMA_FLOOR = -1e-12


@dataclass(frozen=True)
class FloquetSettings:
    """Discretization and sorting parameters.

    n_trunc     momentum cutoff, states n in [-n_trunc, n_trunc]
    j_steps     time steps per Bloch period
    dt_cap      optional cap on the recoil-unit step; j_steps is raised to
                a power of two satisfying it (slow-acceleration accuracy)
    eps_prec    linewidth resolution floor in E_r
    alpha_max   highest ladder tracked
    a_min       acceleration floor below which the approximate formula is
                used directly (m/s^2)
    """

    n_trunc: int = 32
    j_steps: int = 2048
    dt_cap: float | None = None
    eps_prec: float = 1e-13
    alpha_max: int = 3
    a_min: float = 20.0
    max_doublings: int = 5

    def __post_init__(self):
        if self.n_trunc < 16:
            raise ValueError("n_trunc must be at least 16")
        if self.j_steps < 256:
            raise ValueError("j_steps must be at least 256")

    def effective_j(self, t_b_recoil):
        if self.dt_cap is None:
            return self.j_steps
        need = int(np.ceil(t_b_recoil / self.dt_cap))
        j = self.j_steps
        while j < need:
            j *= 2
        return j


@dataclass(frozen=True)
class WsLevel:
    """One Wannier-Stark level in recoil units (site-at-origin convention)."""

    alpha: int
    site: int
    energy: float
    linewidth: float
    provenance: str = "floquet"

    def at_site(self, site, dma):
        return replace(self, site=site,
                       energy=self.energy + (site - self.site) * dma)


@dataclass
class WsTrace:
    """Ladder-resolved sweep over acceleration at fixed lattice depth."""

    v0: float
    accelerations: np.ndarray
    energies: np.ndarray        # (alpha_max+1, n_points), site 0
    linewidths: np.ndarray      # same shape
    dma: np.ndarray             # ladder spacing per point (E_r)
    provenance: list
    sort_regime: list
    continuity_failures: list = field(default_factory=list)

    def energy(self, alpha):
        return self.energies[alpha]

    def linewidth(self, alpha):
        return self.linewidths[alpha]

    @property
    def alpha_max(self):
        return self.energies.shape[0] - 1


# --- eigendecomposition reuse cache ------------------------------------
# Step generators depend only on (v0, j, n_trunc); one batch serves an
# entire acceleration sweep.  Entries are ~70 MB at J=2048, keep few.
_EIGH_CACHE: dict = {}
_EIGH_CACHE_MAX = 3
_EIGH_CACHE_J_LIMIT = 4096


def _step_eigh(v0, n_trunc, j_steps):
    key = (float(v0), int(n_trunc), int(j_steps))
    hit = _EIGH_CACHE.get(key)
    if hit is not None:
        return hit
    _, h = kernels.step_generators(v0, n_trunc, j_steps)
    out = np.linalg.eigh(h)
    if len(_EIGH_CACHE) >= _EIGH_CACHE_MAX:
        _EIGH_CACHE.pop(next(iter(_EIGH_CACHE)))
    _EIGH_CACHE[key] = out
    return out


def floquet_bloch_matrix(cfg: SpeciesLattice, v0, a_l,
                         settings: FloquetSettings, reuse_eigh=None):
    """One-period Floquet-Bloch matrix at kappa = 0 (complex, subunitary).

    reuse_eigh: True forces the per-(v0, J, n_trunc) eigendecomposition
    cache, False forces streaming; default picks by memory cost.
    """
    if a_l <= 0:
        raise ValueError("a_l must be positive")
    f = cfg.force_parameter(a_l)
    t_b = 2.0 / f
    j = settings.effective_j(t_b)
    dt = t_b / j
    if reuse_eigh is None:
        reuse_eigh = j <= _EIGH_CACHE_J_LIMIT and len(_EIGH_CACHE) >= 0
    if reuse_eigh and j <= _EIGH_CACHE_J_LIMIT:
        w, v = _step_eigh(v0, settings.n_trunc, j)
        return kernels.floquet_product_from_eigh(w, v, dt)
    return kernels.floquet_product(v0, settings.n_trunc, j, dt)


def ws_eigensystem(matrix, t_b_recoil):
    """Folded real energies and linewidths from the Floquet eigenvalues.

    E_n = -arg(lambda) / T_B folded into [0, d m a_L); Gamma_n =
    -2 ln|lambda| / T_B, all in recoil units.  Raises ContractionError if
    any |lambda| exceeds 1 + 1e-10 (a truncation bug, not physics).
    """
    lam = dense_eigvals(matrix)
    mag = np.abs(lam)
    if mag.max() > 1.0 + 1e-10:
        raise ContractionError(
            f"Floquet eigenvalue modulus {mag.max():.15f} exceeds unity")
    dma = 2.0 * np.pi / t_b_recoil
    energies = np.mod(-np.angle(lam) / t_b_recoil, dma)
    gammas = -2.0 * np.log(np.maximum(mag, 1e-300)) / t_b_recoil
    small_neg = (gammas < 0) & (gammas > _GAMMA_FLOOR)
    gammas[small_neg] = 0.0
    if (gammas < _GAMMA_FLOOR).any():
        raise ContractionError(
            f"negative linewidth {gammas.min():.3e} below numerical floor")
    return energies, gammas


def approx_ws_energy(cfg: SpeciesLattice, v0, a_l, alpha, site=0):
    """Approximate real ladder energy <E_alpha> + E_dx + site * d m a_L.

    Valid for a_L well below the maximal lattice force; raises when the
    tilt exceeds what the lattice can hold (arcsin domain).
    """
    f = cfg.force_parameter(a_l)
    s = f / v0
    if s > 1.0:
        raise ValueError(
            f"tilt m a_L = {s:.3f} k_L V0 exceeds the maximal lattice force")
    if s > 0.5:
        warnings.warn("approximate ladder energy outside its validity "
                      f"regime (m a_L = {s:.2f} k_L V0)", stacklevel=2)
    e_dx = 0.5 * v0 * s**2 - 0.5 * f * np.arcsin(s)
    return band_average(v0, alpha) + e_dx + site * cfg.ladder_spacing(a_l)


def _sort_targets(cfg, v0, a_l, alpha_max):
    # site-at-origin targets; tilt correction dropped outside arcsin domain
    f = cfg.force_parameter(a_l)
    s = f / v0
    if s <= 1.0:
        e_dx = 0.5 * v0 * s**2 - 0.5 * f * np.arcsin(s)
    else:
        e_dx = 0.0
    return np.array([band_average(v0, a) + e_dx for a in range(alpha_max + 1)])


def _circdist(x, dma):
    return (x + 0.5 * dma) % dma - 0.5 * dma


def sort_ladders(energies, linewidths, cfg: SpeciesLattice, v0, a_l,
                 settings: FloquetSettings, targets=None):
    """Assign ladder indices to raw Floquet levels.

    Regime i: the alpha_max+1 smallest linewidths are mutually separated
    by more than 10 eps_prec -> sort by ascending linewidth.  Regime ii:
    match folded energies to the approximate-formula targets by
    minimal-total-circular-distance assignment.  Energies are unfolded
    about the targets and shifted to the site-at-origin convention.

    Returns (levels, regime).
    """
    dma = cfg.ladder_spacing(a_l)
    n_keep = settings.alpha_max + 1
    if targets is None:
        targets = _sort_targets(cfg, v0, a_l, settings.alpha_max)
    order = np.argsort(linewidths)
    lead = linewidths[order[:n_keep]]
    separated = np.all(np.diff(lead) > 10.0 * settings.eps_prec)

    if separated:
        regime = "linewidth"
        chosen = order[:n_keep]
        alphas = np.arange(n_keep)
    else:
        regime = "energy-match"
        pool = order[:2 * n_keep]
        cost = np.abs(_circdist(
            energies[pool, None] - 0.5 * dma - targets[None, :], dma))
        rows, cols = linear_sum_assignment(cost)
        chosen = np.empty(n_keep, dtype=int)
        chosen[cols] = pool[rows]
        alphas = np.arange(n_keep)
        # ambiguity: a second pool member essentially as close to a target
        # as the assigned one, with an indistinguishable linewidth
        tol = max(1e-3 * dma, 10.0 * settings.eps_prec)
        for alpha in alphas:
            d = cost[:, alpha]
            near = np.where(d < d.min() + tol)[0]
            if len(near) > 1:
                cands = [(int(pool[i]), float(energies[pool[i]]),
                          float(linewidths[pool[i]])) for i in near]
                gams = np.array([c[2] for c in cands])
                if np.ptp(gams) < 10.0 * settings.eps_prec and np.ptp(
                        [abs(_circdist(c[1] - 0.5 * dma - targets[alpha],
                                       dma)) for c in cands]) < tol:
                    raise SortingAmbiguityError(
                        f"levels {cands} both match ladder {alpha}",
                        candidates=cands)

    levels = []
    for alpha, idx in zip(alphas, chosen):
        resid = _circdist(energies[idx] - 0.5 * dma - targets[alpha], dma)
        levels.append(WsLevel(alpha=int(alpha), site=0,
                              energy=float(targets[alpha] + resid),
                              linewidth=float(linewidths[idx])))
    return levels, regime


def ws_levels(cfg: SpeciesLattice, v0, a_l, settings=FloquetSettings()):
    """Sorted ladder levels at one (V0, a_L) point.

    Below settings.a_min the Floquet construction is skipped and the
    approximate formula is returned with zero linewidth ('approx').
    """
    if a_l < settings.a_min:
        return [WsLevel(alpha=a, site=0,
                        energy=approx_ws_energy(cfg, v0, a_l, a),
                        linewidth=0.0, provenance="approx")
                for a in range(settings.alpha_max + 1)], "approx"
    matrix = floquet_bloch_matrix(cfg, v0, a_l, settings)
    t_b = 2.0 / cfg.force_parameter(a_l)
    energies, gammas = ws_eigensystem(matrix, t_b)
    levels, regime = sort_ladders(energies, gammas, cfg, v0, a_l, settings)
    return levels, regime


def _sweep_point(args):
    cfg, v0, a_l, settings = args
    levels, regime = ws_levels(cfg, v0, a_l, settings)
    return ([lv.energy for lv in levels], [lv.linewidth for lv in levels],
            levels[0].provenance, regime)


def ws_sweep(cfg: SpeciesLattice, v0, a_grid, settings=FloquetSettings(),
             workers=1) -> WsTrace:
    """Ladder traces over an acceleration grid with continuity vetoes.

    Points are independent diagonalizations; a sequential post-pass
    re-sorts points whose energies jump beyond a local slope bound using
    the energy-matching regime, recording persistent failures.
    """
    a_grid = np.asarray(a_grid, dtype=float)
    if a_grid.ndim != 1 or len(a_grid) == 0 or np.any(np.diff(a_grid) <= 0):
        raise ValueError("acceleration grid must be strictly increasing")
    jobs = [(cfg, v0, float(a), settings) for a in a_grid]
    if workers > 1:
        import multiprocessing as mp
        # warm the shared eigendecomposition cache before forking
        t_b = 2.0 / cfg.force_parameter(a_grid[-1])
        j = settings.effective_j(t_b)
        if j <= _EIGH_CACHE_J_LIMIT:
            _step_eigh(v0, settings.n_trunc, j)
        with mp.Pool(workers) as pool:
            results = pool.map(_sweep_point, jobs, chunksize=8)
    else:
        results = [_sweep_point(j) for j in jobs]

    n_alpha = settings.alpha_max + 1
    energies = np.array([r[0] for r in results]).T
    linewidths = np.array([r[1] for r in results]).T
    provenance = [r[2] for r in results]
    regimes = [r[3] for r in results]
    dma = np.array([cfg.ladder_spacing(a) for a in a_grid])
    trace = WsTrace(v0=float(v0), accelerations=a_grid, energies=energies,
                    linewidths=linewidths, dma=dma, provenance=provenance,
                    sort_regime=regimes)
    _continuity_pass(trace, cfg, settings)
    return trace


def _continuity_pass(trace, cfg, settings):
    a = trace.accelerations
    for i in range(1, len(a)):
        da = a[i] - a[i - 1]
        for alpha in range(trace.alpha_max + 1):
            e_prev = trace.energies[alpha, i - 1]
            slope = 0.0
            if i >= 2:
                slope = (trace.energies[alpha, i - 1]
                         - trace.energies[alpha, i - 2]) / (a[i - 1] - a[i - 2])
            bound = 4.0 * abs(slope) * da + max(0.05 * trace.dma[i], 0.05)
            if abs(trace.energies[alpha, i] - e_prev) > bound:
                # re-sort this point with forced energy matching
                try:
                    matrix = floquet_bloch_matrix(cfg, trace.v0, a[i], settings)
                    t_b = 2.0 / cfg.force_parameter(a[i])
                    en, gm = ws_eigensystem(matrix, t_b)
                    targets = _sort_targets(cfg, trace.v0, a[i],
                                            settings.alpha_max)
                    dma = trace.dma[i]
                    pool = np.argsort(gm)[:2 * (settings.alpha_max + 1)]
                    cost = np.abs(_circdist(
                        en[pool, None] - 0.5 * dma - targets[None, :], dma))
                    rows, cols = linear_sum_assignment(cost)
                    for r, c in zip(rows, cols):
                        resid = _circdist(en[pool[r]] - 0.5 * dma - targets[c],
                                          dma)
                        trace.energies[c, i] = targets[c] + resid
                        trace.linewidths[c, i] = gm[pool[r]]
                    trace.sort_regime[i] = "energy-match(veto)"
                except Exception:
                    pass
                if abs(trace.energies[alpha, i] - e_prev) > bound:
                    trace.continuity_failures.append(
                        (float(a[i]), int(alpha),
                         float(trace.energies[alpha, i]), float(e_prev)))
                break


@dataclass(frozen=True)
class Resonance:
    a_peak: float
    gamma_peak: float
    matched: bool
    alpha_partner: int | None = None
    site_partner: int | None = None
    a_cross: float | None = None


def find_tunneling_resonances(trace: WsTrace, baseline_window=25,
                              min_ratio=3.0):
    """Locate Gamma_0 peaks and pair each with a real-energy crossing.

    A peak is a strict local maximum of Gamma_0 exceeding min_ratio times
    the local baseline (median over +-baseline_window points, peak
    neighborhood excluded).  Partners are searched among ladders 1..2 and
    sites -2..2 within one grid step; unmatched peaks are reported with
    matched=False.
    """
    a = trace.accelerations
    g0 = trace.linewidths[0]
    n = len(a)
    out = []
    for i in range(1, n - 1):
        if not (g0[i] > g0[i - 1] and g0[i] >= g0[i + 1]):
            continue
        lo = max(0, i - baseline_window)
        hi = min(n, i + baseline_window + 1)
        nb = np.r_[g0[lo:max(lo, i - 3)], g0[min(hi, i + 4):hi]]
        if len(nb) == 0:
            continue
        baseline = np.median(nb)
        if g0[i] <= min_ratio * baseline:
            continue
        match = _match_crossing(trace, i)
        out.append(Resonance(a_peak=float(a[i]), gamma_peak=float(g0[i]),
                             matched=match is not None,
                             alpha_partner=None if match is None else match[0],
                             site_partner=None if match is None else match[1],
                             a_cross=None if match is None else match[2]))
    return out


def _match_crossing(trace, i_peak, max_alpha=2, max_site=2):
    a = trace.accelerations
    e0 = trace.energies[0]
    lo = max(0, i_peak - 1)
    hi = min(len(a) - 1, i_peak + 1)
    best = None
    for alpha in range(1, min(max_alpha, trace.alpha_max) + 1):
        for site in range(-max_site, max_site + 1):
            if site == 0:
                continue
            d = (trace.energies[alpha] + site * trace.dma) - e0
            for j in range(lo, hi):
                if d[j] == 0.0 or np.sign(d[j]) != np.sign(d[j + 1]):
                    a_cross = a[j] - d[j] * (a[j + 1] - a[j]) / (d[j + 1] - d[j])
                    score = abs(a_cross - a[i_peak])
                    if best is None or score < best[3]:
                        best = (alpha, site, float(a_cross), score)
    if best is None:
        # avoided real parts: accept a deep local minimum of |d| at the peak
        for alpha in range(1, min(max_alpha, trace.alpha_max) + 1):
            for site in range(-max_site, max_site + 1):
                if site == 0:
                    continue
                d = np.abs((trace.energies[alpha] + site * trace.dma) - e0)
                j = lo + int(np.argmin(d[lo:hi + 1]))
                if d[j] < 0.1 * trace.dma[j]:
                    score = abs(a[j] - a[i_peak])
                    if best is None or score < best[3]:
                        best = (alpha, site, float(a[j]), score)
    if best is None:
        return None
    return best[:3]


def two_level_model(eps, gamma, coupling):
    """Complex eigenvalue pair of the non-hermitian two-level crossing.

    H = [[eps - 2 i gamma, V], [V, -eps]] gives
    E_pm = -i gamma +- sqrt((eps - i gamma)^2 + V^2); for array eps the
    square-root branch is tracked continuously along the sweep.
    """
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    eps_arr = np.atleast_1d(np.asarray(eps, dtype=complex))
    r = np.sqrt((eps_arr - 1j * gamma) ** 2 + coupling**2)
    for i in range(1, len(r)):
        if abs(-r[i] - r[i - 1]) < abs(r[i] - r[i - 1]):
            r[i] = -r[i]
    plus = -1j * gamma + r
    minus = -1j * gamma - r
    if np.isscalar(eps) or np.asarray(eps).ndim == 0:
        return complex(plus[0]), complex(minus[0])
    return plus, minus


def classify_crossing(trace: WsTrace, a_star, pair, half_window=6):
    """Crossing type from a least-squares fit of the two-level model.

    pair = (alpha', site'): the partner level crossing the fundamental.
    Type I: real parts avoid while linewidths intersect (|V| > gamma);
    type II: real parts intersect while linewidths avoid (|V| < gamma).
    """
    alpha_p, site_p = pair
    a = trace.accelerations
    i0 = int(np.argmin(np.abs(a - a_star)))
    lo, hi = max(0, i0 - half_window), min(len(a), i0 + half_window + 1)
    if hi - lo < 7:
        raise ClassificationError("window around crossing has fewer than "
                                  f"7 points ({hi - lo})")
    aa = a[lo:hi]
    e0 = trace.energies[0, lo:hi]
    eb = trace.energies[alpha_p, lo:hi] + site_p * trace.dma[lo:hi]
    g0 = trace.linewidths[0, lo:hi]
    gb = trace.linewidths[alpha_p, lo:hi]

    # unlabeled observables: real gap and linewidth difference magnitudes
    egap = np.abs(e0 - eb)
    ggap = np.abs(g0 - gb)

    def model(theta):
        slope, a0, gam, coup = theta
        eps = slope * (aa - a0)
        r = np.sqrt((eps - 1j * abs(gam)) ** 2 + coup**2)
        return 2.0 * np.abs(r.real), 4.0 * np.abs(r.imag)

    def residual(theta):
        me, mg = model(theta)
        scale_e = max(egap.max(), 1e-30)
        scale_g = max(ggap.max(), 1e-30)
        return np.r_[(me - egap) / scale_e, (mg - ggap) / scale_g]

    slope0 = (egap[-1] + egap[0]) / (aa[-1] - aa[0])
    theta0 = [slope0, a_star, 0.25 * ggap.max(), 0.5 * max(egap.min(), 1e-12)]
    fit = least_squares(residual, theta0, method="lm", max_nfev=20_000)
    res = float(np.sqrt(np.mean(fit.fun**2)))
    if not fit.success or res > 0.5:
        raise ClassificationError("two-level fit did not converge on the "
                                  "crossing window", residual=res)
    gam, coup = abs(fit.x[2]), abs(fit.x[3])
    return "I" if coup > gam else "II"


def dE00_dV0(cfg: SpeciesLattice, v0, a_l, settings=FloquetSettings(),
             delta=None):
    """d E_{0,0} / d V0 by central differences with a Richardson check.

    The half-step estimate must agree with the full-step one to 1%;
    returns the Richardson-extrapolated value (dimensionless).
    """
    if delta is None:
        delta = 1e-3 * v0
    if v0 - delta <= 0:
        raise ValueError("v0 - delta must stay positive")

    def e00(v):
        return ws_levels(cfg, v, a_l, settings)[0][0].energy

    d_full = (e00(v0 + delta) - e00(v0 - delta)) / (2.0 * delta)
    d_half = (e00(v0 + delta / 2) - e00(v0 - delta / 2)) / delta
    if abs(d_half - d_full) > 0.01 * max(abs(d_half), 1e-6):
        raise StepSizeError(
            f"Richardson check failed: D(delta)={d_full:.6e}, "
            f"D(delta/2)={d_half:.6e}")
    return (4.0 * d_half - d_full) / 3.0


def certify_settings(cfg: SpeciesLattice, v0, a_l,
                     settings=FloquetSettings(),
                     energy_tol=1e-8, gamma_rtol=0.05):
    """Double n_trunc and j_steps until tracked levels stop drifting.

    Returns (certified_settings, report) where report lists the drifts at
    the accepted level; raises ConvergenceError at the doubling cap.
    """
    base, _ = ws_levels(cfg, v0, a_l, settings)
    cur = settings
    for _ in range(settings.max_doublings):
        trial = replace(cur, n_trunc=cur.n_trunc * 2,
                        j_steps=cur.j_steps * 2)
        probe, _ = ws_levels(cfg, v0, a_l, trial)
        e_drift = max(abs(p.energy - b.energy)
                      for p, b in zip(probe, base))
        g_drift = max(
            (abs(p.linewidth - b.linewidth)
             / max(b.linewidth, settings.eps_prec)
             for p, b in zip(probe, base)
             if b.linewidth > settings.eps_prec),
            default=0.0)
        if e_drift < energy_tol and g_drift < gamma_rtol:
            return cur, {"energy_drift": e_drift, "gamma_drift": g_drift,
                         "n_trunc": cur.n_trunc, "j_steps": cur.j_steps}
        base, cur = probe, trial
    raise ConvergenceError(
        "level drift did not settle under doubling",
        residual={"energy_drift": e_drift, "gamma_drift": g_drift})
