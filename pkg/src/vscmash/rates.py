"""Reactant populations, the time-dependent rate estimator, and sweeps.

The reactant population is P_R = Tr[h_R rho] with rho = c c^dag for the
mean-field estimator and rho = alpha c c^dag + beta I for the mapping
estimator.  Assuming first-order kinetics toward the symmetric-well
equilibrium P_R^eq = 1/2, the time-dependent rate

    k(t) = -dP_R/dt / (1 - P_R(t)/P_R^eq)

plateaus after molecular transients; the reported rate is the plateau
mean, with a 99% confidence interval from a trajectory-level bootstrap.
"""

from dataclasses import dataclass

import numpy as np

from .units import AU_TO_FS, AU_TO_WAVENUMBER


class RateWindowError(ValueError):
    """The requested plateau window cannot support the estimator."""


def reactant_population(c, h_ext, estimator="ehrenfest", alpha=None, beta=None):
    """P_R from amplitudes in the frame matching ``h_ext``.

    MASH amplitudes must first be rotated out of the adiabatic frame
    (c_work = V c_ad); the identity part of the mapping estimator then
    contributes beta * Tr[h].
    """
    quad = float(np.real(np.conj(c) @ (h_ext @ c)))
    if estimator == "ehrenfest":
        return quad
    if estimator == "mash":
        if alpha is None or beta is None:
            raise ValueError("mash estimator needs alpha and beta")
        return alpha * quad + beta * float(np.trace(h_ext))
    raise ValueError(f"unknown estimator {estimator!r}")


@dataclass(frozen=True)
class PopulationSeries:
    """Ensemble-averaged reactant population on the output time grid."""
    times: np.ndarray           # a.u.
    P_R: np.ndarray
    sem: np.ndarray
    n_traj: int

    @classmethod
    def from_trajectories(cls, times, pops_matrix):
        """Mean and standard error over trajectory rows (fixed sum order)."""
        pops_matrix = np.asarray(pops_matrix)
        n = pops_matrix.shape[0]
        mean = pops_matrix.sum(axis=0) / n
        if n > 1:
            var = ((pops_matrix - mean) ** 2).sum(axis=0) / (n - 1)
            sem = np.sqrt(var / n)
        else:
            sem = np.zeros_like(mean)
        return cls(times=np.asarray(times, float), P_R=mean, sem=sem, n_traj=n)


def _boxcar(y, width):
    if width <= 1:
        return np.asarray(y, float)
    pad = width // 2
    ypad = np.concatenate([y[pad:0:-1], y, y[-2:-2 - pad:-1]])   # reflect edges
    kernel = np.ones(width) / width
    return np.convolve(ypad, kernel, mode="valid")


def k_of_t(times, P_R, P_R_eq=0.5, smoothing=5):
    """Pointwise rate estimator on the stored grid (central differences)."""
    t = np.asarray(times, float)
    P = _boxcar(np.asarray(P_R, float), smoothing)
    dP = np.empty_like(P)
    dP[1:-1] = (P[2:] - P[:-2]) / (t[2:] - t[:-2])
    dP[0] = (P[1] - P[0]) / (t[1] - t[0])
    dP[-1] = (P[-1] - P[-2]) / (t[-1] - t[-2])
    denom = 1.0 - P / P_R_eq
    with np.errstate(divide="ignore", invalid="ignore"):
        k = dP / denom
    return k


@dataclass(frozen=True)
class RateEstimate:
    """Plateau rate with its uncertainty and provenance."""
    times: np.ndarray
    k_t: np.ndarray
    plateau_rate: float         # a.u.^-1
    ci99: float                 # half-width, a.u.^-1
    window: tuple               # (t_lo, t_hi), a.u.
    P_R_eq: float
    flatness: float             # |dk/dt| * width / |k| inside the window
    n_traj: int = 0

    @property
    def plateau_rate_inv_fs(self):
        return self.plateau_rate / AU_TO_FS

    @property
    def ci99_inv_fs(self):
        return self.ci99 / AU_TO_FS

    @property
    def is_flat(self):
        return self.flatness < 0.1


def _window_mean_rate(times, P_R, window, P_R_eq, smoothing):
    k = k_of_t(times, P_R, P_R_eq, smoothing)
    lo, hi = window
    sel = (times >= lo) & (times <= hi)
    if not np.any(sel):
        raise RateWindowError(f"no stored points inside window {window}")
    P_smooth = _boxcar(np.asarray(P_R, float), smoothing)
    denom = 1.0 - P_smooth[sel] / P_R_eq
    if np.any(denom >= 0.0) and np.any(denom <= 0.0):
        raise RateWindowError(
            "1 - P_R/P_eq crosses zero inside the plateau window; "
            "use a shorter window")
    return k, float(np.mean(k[sel])), sel


def rate_estimator(series, P_R_eq=0.5, window=None, smoothing=5,
                   pops_matrix=None, n_boot=1000, boot_seed=7):
    """Plateau rate from a population series.

    If ``pops_matrix`` (n_traj x n_times) is given, the 99% confidence
    interval comes from ``n_boot`` trajectory-level bootstrap resamples;
    otherwise ci99 is NaN.
    """
    if window is None:
        window = (series.times[1], series.times[-1])
    lo, hi = window
    if not (0.0 < lo < hi <= series.times[-1] + 1e-9):
        raise RateWindowError(
            f"window {window} outside simulated range (t_max={series.times[-1]})")

    k, plateau, sel = _window_mean_rate(series.times, series.P_R, window,
                                        P_R_eq, smoothing)

    # flatness gate: linear drift of k across the window vs its mean
    tw = series.times[sel]
    kw = k[sel]
    if kw.size > 2 and plateau != 0.0:
        slope = np.polyfit(tw, kw, 1)[0]
        flatness = abs(slope) * (tw[-1] - tw[0]) / abs(plateau)
    else:
        flatness = np.inf

    ci99 = np.nan
    if pops_matrix is not None and pops_matrix.shape[0] > 1:
        rng = np.random.default_rng(boot_seed)
        n = pops_matrix.shape[0]
        boots = np.empty(n_boot)
        for b in range(n_boot):
            idx = rng.integers(0, n, size=n)
            mean_b = pops_matrix[idx].sum(axis=0) / n
            try:
                _, boots[b], _ = _window_mean_rate(series.times, mean_b,
                                                   window, P_R_eq, smoothing)
            except RateWindowError:
                boots[b] = np.nan
        boots = boots[np.isfinite(boots)]
        if boots.size > 10:
            lo_q, hi_q = np.percentile(boots, [0.5, 99.5])
            ci99 = 0.5 * (hi_q - lo_q)

    return RateEstimate(times=series.times, k_t=k, plateau_rate=plateau,
                        ci99=ci99, window=window, P_R_eq=P_R_eq,
                        flatness=flatness, n_traj=series.n_traj)


@dataclass(frozen=True)
class RateProfile:
    """Sweep table: one row per (omega_c, eta_c) plus the reference rate."""
    rows: tuple                  # (omega_c, eta_c, k, ci99, k_over_k0)
    k0: float = np.nan           # outside-cavity reference, a.u.^-1
    k0_ci99: float = np.nan

    def resonant_row(self):
        return max(self.rows, key=lambda r: r[2])

    def as_csv_rows(self):
        out = []
        for w, eta, k, ci, ratio in self.rows:
            out.append((w * AU_TO_WAVENUMBER, eta, k / AU_TO_FS, ci / AU_TO_FS, ratio))
        return out


def sweep_profile(results, k0=None):
    """Assemble a RateProfile from per-point estimates.

    ``results`` maps (omega_c, eta_c) -> RateEstimate; ``k0`` is the
    eta_c = 0 reference estimate (ratios are NaN when omitted).
    """
    k0_rate = k0.plateau_rate if k0 is not None else np.nan
    rows = []
    for (w, eta) in sorted(results):
        est = results[(w, eta)]
        ratio = est.plateau_rate / k0_rate if k0 is not None else np.nan
        rows.append((w, eta, est.plateau_rate, est.ci99, ratio))
    return RateProfile(rows=tuple(rows), k0=k0_rate,
                       k0_ci99=k0.ci99 if k0 is not None else np.nan)
