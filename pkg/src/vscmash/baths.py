"""Harmonic-bath discretization and thermal Wigner sampling.

Spectral densities are discretized so that every mode carries an equal
share of the (truncated) reorganization energy: the cumulative function

    F(w) = integral_0^w J(w')/(pi w') dw'

is inverted at the mid-rule quantiles (i - 1/2)/N_B, and the couplings
follow as g_i = w_i sqrt(2 lambda~ / N_B), which enforces
sum_i g_i^2/(2 w_i^2) = lambda~ identically.
"""

from dataclasses import dataclass

import numpy as np

from .dvr import NumericalError


class DrudeLorentz:
    """J(w) = 2 lambda gamma w / (w^2 + gamma^2), with closed-form F."""

    def __init__(self, lam, gamma, omega_max_factor=10.0):
        self.lam = lam
        self.gamma = gamma
        self.default_omega_max = omega_max_factor * gamma

    def J(self, w):
        w = np.asarray(w, dtype=float)
        return 2.0 * self.lam * self.gamma * w / (w * w + self.gamma**2)

    def F(self, w):
        return (2.0 * self.lam / np.pi) * np.arctan(np.asarray(w, dtype=float) / self.gamma)


class EffectiveCavity:
    """Effective density of the cavity mode + its Drude-Lorentz loss bath.

        J_eff(w) = 2 eta^2 w_c^3 J_c(w) / ([w_c^2 - w^2 + R~(w)]^2 + J_c(w)^2)
        R~(w)    = w J_c(w) / gamma_c

    The overall eta^2 prefactor scales out of the quantile map, so the
    mode frequencies are coupling-independent and eta = 0 simply zeroes
    the couplings.
    """

    def __init__(self, lambda_c, gamma_c, omega_c, eta_c, omega_max_factor=3.0):
        self.lambda_c = lambda_c
        self.gamma_c = gamma_c
        self.omega_c = omega_c
        self.eta_c = eta_c
        self.default_omega_max = omega_max_factor * gamma_c

    def _J_unit(self, w):
        """J_eff at unit coupling (eta_c = 1)."""
        w = np.asarray(w, dtype=float)
        Jc = 2.0 * self.lambda_c * self.gamma_c * w / (w * w + self.gamma_c**2)
        Rt = w * Jc / self.gamma_c
        wc2 = self.omega_c**2
        return 2.0 * self.omega_c**3 * Jc / ((wc2 - w * w + Rt) ** 2 + Jc * Jc)

    def J(self, w):
        return self.eta_c**2 * self._J_unit(w)

    def markovian_limit_J(self, w):
        """Strict-Markovian Lorentzian form with Gamma_c = 2 lambda_c/gamma_c."""
        w = np.asarray(w, dtype=float)
        Gc = 2.0 * self.lambda_c / self.gamma_c
        wc2 = self.omega_c**2
        return (2.0 * self.eta_c**2 * self.omega_c**3 * Gc * w
                / ((wc2 - w * w) ** 2 + Gc**2 * w * w))


def effective_density(params):
    """EffectiveCavity built from a ModelParams (classical-cavity runs)."""
    return EffectiveCavity(params.lambda_c, params.gamma_c, params.omega_c, params.eta_c)


@dataclass(frozen=True)
class BathModes:
    """Discretized harmonic modes coupled to one system operator."""
    omegas: np.ndarray
    couplings: np.ndarray
    lambda_tilde: float
    which_operator: str       # "R" or "Q_c"

    @property
    def n(self):
        return self.omegas.size


def _bisect_quantile(F, target, lo, hi, rel_tol=1e-12):
    """Solve F(w) = target for monotone F by bisection."""
    flo, fhi = F(lo), F(hi)
    if not (flo <= target <= fhi):
        raise NumericalError(
            f"quantile {target:.3e} outside cumulative range [{flo:.3e}, {fhi:.3e}]")
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if F(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def discretize(density, N_B, omega_max=None, which_operator="R"):
    """Equal-reorganization discretization of a spectral density.

    Parameters
    ----------
    density : DrudeLorentz or EffectiveCavity
    N_B : int
        Number of modes.
    omega_max : float, optional
        Truncation frequency; defaults to the density's convention
        (10 gamma for the solvent, 3 gamma_c for the cavity forms).

    Returns
    -------
    BathModes
    """
    if omega_max is None:
        omega_max = density.default_omega_max
    if omega_max <= 0:
        raise NumericalError(f"omega_max must be positive, got {omega_max}")

    if isinstance(density, DrudeLorentz):
        F = density.F
        lam_t = float(F(omega_max))
        quantile_scale = lam_t
    else:
        # numeric cumulative of the unit-coupling shape on a dense grid
        ngrid = 1000 * N_B
        w_grid = np.linspace(0.0, omega_max, ngrid + 1)
        integrand = np.zeros_like(w_grid)
        integrand[1:] = density._J_unit(w_grid[1:]) / (np.pi * w_grid[1:])
        F_grid = np.concatenate(([0.0], np.cumsum(
            0.5 * (integrand[1:] + integrand[:-1]) * np.diff(w_grid))))
        if np.any(np.diff(F_grid) < 0):
            raise NumericalError("cumulative spectral integral is non-monotone")

        def F(w):
            return np.interp(w, w_grid, F_grid)

        lam_unit = float(F_grid[-1])
        lam_t = density.eta_c**2 * lam_unit
        quantile_scale = lam_unit   # quantiles taken on the unit-coupling shape

    omegas = np.empty(N_B)
    lo = 1e-12 * omega_max
    for i in range(N_B):
        target = (i + 0.5) / N_B * quantile_scale
        omegas[i] = _bisect_quantile(F, target, lo, omega_max)
        lo = omegas[i]              # quantiles are ordered; shrink the bracket

    couplings = omegas * np.sqrt(2.0 * lam_t / N_B)
    return BathModes(omegas=omegas, couplings=couplings,
                     lambda_tilde=lam_t, which_operator=which_operator)


@dataclass(frozen=True)
class WignerSample:
    q: np.ndarray
    p: np.ndarray


def wigner_sigmas(modes, beta):
    """Std deviations (sigma_q, sigma_p) of the thermal Wigner Gaussian."""
    w = modes.omegas
    sig_p = np.sqrt(w / (2.0 * np.tanh(0.5 * beta * w)))
    return sig_p / w, sig_p


def sample_wigner(modes, beta, op_expect_0, rng):
    """Draw (q, p) from the thermal Wigner distribution of the bath.

    Positions are shifted to the bath minimum conditioned on the initial
    quantum state:  <q_i> = g_i <O>_0 / w_i^2, where O is whichever
    system operator this bath couples to.  Draw order (q first, then p)
    is fixed so that a given RNG stream always yields the same sample.
    """
    sig_q, sig_p = wigner_sigmas(modes, beta)
    shift = modes.couplings * op_expect_0 / modes.omegas**2
    q = shift + sig_q * rng.standard_normal(modes.n)
    p = sig_p * rng.standard_normal(modes.n)
    return WignerSample(q=q, p=p)
