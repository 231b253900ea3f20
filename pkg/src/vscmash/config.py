"""Model parameters and run configuration.

Physical inputs are written the way the model is usually tabulated
(cm^-1, fs, K) and converted to atomic units exactly once, in
:func:`derive_params`.  Everything downstream sees atomic units only.

Derived quantities follow the model's defining relations:

* solvent reorganization energy   lambda_s = (1/2) gamma_s Gamma_s
* cavity-loss reorganization      lambda_c = (w_c^2 + g_c^2)(1 - e^(-beta w_c)) / (2 tau_c g_c)

The second expression inverts the golden-rule single-photon lifetime of
the cavity mode, so lambda_c depends on the cavity frequency and must be
re-derived at every sweep point.
"""

import dataclasses
import json
import math
from dataclasses import dataclass

from .units import (ConfigurationError, convert_units, inverse_temperature)

_POSITIVE_FIELDS = ("M", "omega_b", "E_b", "gamma_s", "lambda_s", "Gamma_s",
                    "gamma_c", "lambda_c", "tau_c", "beta", "omega_c",
                    "R_max", "dt")


@dataclass(frozen=True)
class ModelParams:
    """All physical constants and numerical knobs, in atomic units.

    Immutable after construction; safe to share across workers.
    """
    M: float            # reaction-coordinate mass
    omega_b: float      # barrier frequency
    E_b: float          # barrier height
    gamma_s: float      # solvent bath characteristic frequency
    lambda_s: float     # solvent reorganization energy
    Gamma_s: float      # solvent static friction
    gamma_c: float      # cavity-loss bath characteristic frequency
    lambda_c: float     # cavity-loss reorganization energy
    tau_c: float        # cavity lifetime
    beta: float         # inverse temperature
    omega_c: float      # cavity frequency
    eta_c: float        # light-matter coupling strength
    N_B: int = 200      # modes per discretized bath
    N_p: int = 2        # Fock states retained
    R_max: float = 100.0
    n_R: int = 2001
    dt: float = 2.5     # integrator timestep
    n_traj: int = 10_000
    seed: int = 2024

    def __post_init__(self):
        for name in _POSITIVE_FIELDS:
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigurationError(f"{name} must be positive and finite, got {v}")
        if self.eta_c < 0 or not math.isfinite(self.eta_c):
            raise ConfigurationError(f"eta_c must be >= 0, got {self.eta_c}")
        if self.n_R < 3:
            raise ConfigurationError(f"n_R must be >= 3, got {self.n_R}")
        if self.N_p < 1:
            raise ConfigurationError(f"N_p must be >= 1, got {self.N_p}")
        if self.N_B < 1:
            raise ConfigurationError(f"N_B must be >= 1, got {self.N_B}")
        if self.n_traj < 1:
            raise ConfigurationError(f"n_traj must be >= 1, got {self.n_traj}")

    @property
    def Gamma_c(self):
        """Static friction of the cavity-loss bath, 2 lambda_c / gamma_c."""
        return 2.0 * self.lambda_c / self.gamma_c

    @property
    def markovian_ratio(self):
        """Gamma_c / gamma_c; << 1 means the loss bath acts Markovian."""
        return self.Gamma_c / self.gamma_c

    def at_sweep_point(self, omega_c, eta_c):
        """Copy with a new (omega_c, eta_c), re-deriving lambda_c."""
        lam_c = cavity_loss_reorganization(omega_c, self.gamma_c, self.beta, self.tau_c)
        return dataclasses.replace(self, omega_c=omega_c, eta_c=eta_c, lambda_c=lam_c)


def cavity_loss_reorganization(omega_c, gamma_c, beta, tau_c):
    """lambda_c from the inverted golden-rule photon lifetime."""
    return ((omega_c**2 + gamma_c**2) * (1.0 - math.exp(-beta * omega_c))
            / (2.0 * tau_c * gamma_c))


# Lab-unit inputs with the tabulated model values as defaults.
_RAW_DEFAULTS = {
    "M": 1.0,               # a.u.
    "omega_b": 1000.0,      # cm^-1
    "E_b": 2250.0,          # cm^-1
    "gamma_s": 200.0,       # cm^-1
    "Gamma_s": None,        # cm^-1; defaults to 0.1 * omega_b
    "gamma_c": 1000.0,      # cm^-1
    "tau_c": 2000.0,        # fs
    "T": 300.0,             # K
    "omega_c": 1190.0,      # cm^-1
    "eta_c": 2.5e-3,        # dimensionless (a.u. convention)
    "N_B": 200,
    "N_p": 2,
    "R_max": 100.0,         # a.u.
    "n_R": 2001,
    "dt": 2.5,              # a.u.
    "n_traj": 10_000,
    "seed": 2024,
}

_INT_KEYS = {"N_B", "N_p", "n_R", "n_traj", "seed"}


def derive_params(raw=None, **overrides):
    """Build :class:`ModelParams` from laboratory-unit inputs.

    Parameters
    ----------
    raw : dict, optional
        Lab-unit inputs; missing keys fall back to the tabulated model
        values.  Frequencies/energies in cm^-1, tau_c in fs, T in K,
        masses/lengths/timestep already in a.u.

    Returns
    -------
    ModelParams
    """
    inputs = dict(_RAW_DEFAULTS)
    if raw:
        unknown = set(raw) - set(_RAW_DEFAULTS)
        if unknown:
            raise ConfigurationError(f"unknown parameter(s): {sorted(unknown)}")
        inputs.update(raw)
    inputs.update(overrides)

    for key, val in inputs.items():
        if key == "Gamma_s":
            continue
        if val is None:
            raise ConfigurationError(f"missing input for {key}")
        if key in _INT_KEYS:
            inputs[key] = int(val)
        elif not math.isfinite(float(val)):
            raise ConfigurationError(f"{key} must be finite, got {val}")

    omega_b = convert_units(float(inputs["omega_b"]), "wavenumber")
    gamma_s = convert_units(float(inputs["gamma_s"]), "wavenumber")
    gamma_c = convert_units(float(inputs["gamma_c"]), "wavenumber")
    omega_c = convert_units(float(inputs["omega_c"]), "wavenumber")
    E_b = convert_units(float(inputs["E_b"]), "wavenumber")
    tau_c = convert_units(float(inputs["tau_c"]), "femtosecond")
    beta = inverse_temperature(float(inputs["T"]))

    if inputs["Gamma_s"] is None:
        Gamma_s = 0.1 * omega_b
    else:
        Gamma_s = convert_units(float(inputs["Gamma_s"]), "wavenumber")

    lambda_s = 0.5 * gamma_s * Gamma_s
    lambda_c = cavity_loss_reorganization(omega_c, gamma_c, beta, tau_c)

    return ModelParams(
        M=float(inputs["M"]), omega_b=omega_b, E_b=E_b,
        gamma_s=gamma_s, lambda_s=lambda_s, Gamma_s=Gamma_s,
        gamma_c=gamma_c, lambda_c=lambda_c, tau_c=tau_c,
        beta=beta, omega_c=omega_c, eta_c=float(inputs["eta_c"]),
        N_B=inputs["N_B"], N_p=inputs["N_p"],
        R_max=float(inputs["R_max"]), n_R=inputs["n_R"],
        dt=float(inputs["dt"]), n_traj=inputs["n_traj"], seed=inputs["seed"],
    )


METHODS = ("ehrenfest", "mash")
CAVITY_MODES = ("classical", "quantum", "quantum-bare")

# Plateau-window defaults per method (fs): the mean-field estimator has a
# brief plateau around 1 ps, the hopping estimator stays flat far longer.
_DEFAULT_WINDOW_FS = {"ehrenfest": (500.0, 1500.0), "mash": (1000.0, 8000.0)}


@dataclass(frozen=True)
class RunConfig:
    """A complete simulation request (immutable)."""
    params: ModelParams
    method: str = "mash"
    cavity_mode: str = "quantum"
    epsilon_mash: float = 0.0           # 0 disables hop thresholding
    sweep: tuple = ()                   # ((omega_c, eta_c), ...) in a.u.
    plateau_window: tuple = None        # (t_lo, t_hi) in a.u.
    t_max: float = None                 # total simulated time, a.u.
    stride: float = None                # output stride, a.u. (default 10 fs)
    output_dir: str = "runs"
    smoothing: int = 5                  # boxcar points for dP/dt; 0/1 disables

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.cavity_mode not in CAVITY_MODES:
            raise ConfigurationError(
                f"cavity_mode must be one of {CAVITY_MODES}, got {self.cavity_mode!r}")
        if self.epsilon_mash < 0:
            raise ConfigurationError(f"epsilon_mash must be >= 0, got {self.epsilon_mash}")

        from .units import FS_TO_AU
        if self.stride is None:
            object.__setattr__(self, "stride", 10.0 * FS_TO_AU)
        if self.plateau_window is None:
            lo, hi = _DEFAULT_WINDOW_FS[self.method]
            object.__setattr__(self, "plateau_window", (lo * FS_TO_AU, hi * FS_TO_AU))
        if self.t_max is None:
            object.__setattr__(self, "t_max", self.plateau_window[1] + 2.0 * self.stride)

        t_lo, t_hi = self.plateau_window
        if not (0.0 < t_lo < t_hi <= self.t_max):
            raise ConfigurationError(
                f"plateau_window must satisfy 0 < t_lo < t_hi <= t_max, "
                f"got ({t_lo}, {t_hi}) with t_max={self.t_max}")
        if not self.sweep:
            object.__setattr__(self, "sweep", ((self.params.omega_c, self.params.eta_c),))
        for pt in self.sweep:
            if len(pt) != 2:
                raise ConfigurationError(f"sweep entries must be (omega_c, eta_c), got {pt!r}")


_RUN_KEYS = ("method", "cavity_mode", "epsilon_mash", "sweep", "plateau_window",
             "t_max", "stride_fs", "output_dir", "smoothing")


def _parse_scalar(text):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _parse_flat(text):
    """Parse the flat ``key = value`` format ('#' starts a comment)."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, val = line.partition("=")
        elif ":" in line:
            key, _, val = line.partition(":")
        else:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {line!r}")
        key = key.strip()
        val = val.strip()
        if key == "sweep":
            pts = []
            for tok in val.replace(",", " ").split():
                try:
                    w, e = tok.split(":")
                    pts.append((float(w), float(e)))
                except ValueError:
                    raise ConfigurationError(
                        f"line {lineno}: sweep entries look like 'omega_cm1:eta', got {tok!r}")
            out[key] = pts
        elif key == "plateau_window":
            parts = val.replace(",", " ").split()
            if len(parts) != 2:
                raise ConfigurationError(f"line {lineno}: plateau_window needs two values (fs)")
            out[key] = (float(parts[0]), float(parts[1]))
        else:
            out[key] = _parse_scalar(val)
    return out


def read_config_dict(path=None, overrides=None):
    """Merge a config file and override mapping into one flat dict.

    The file is JSON if its name ends in ``.json``, otherwise flat
    ``key = value`` text.  Keys mirror the parameter/run field names;
    physical values are in lab units (cm^-1, fs, K).  Override values
    may still be strings (as from ``--set key=value``).
    """
    data = {}
    if path is not None:
        with open(path) as fh:
            text = fh.read()
        if str(path).endswith(".json"):
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"bad JSON config {path}: {exc}") from None
        else:
            data = _parse_flat(text)
    if overrides:
        for key, val in overrides.items():
            data[key] = _parse_scalar(val) if isinstance(val, str) else val
    return data


def load_config(path=None, overrides=None):
    """Load a :class:`RunConfig` from a config file plus CLI overrides."""
    return config_from_dict(read_config_dict(path, overrides))


def config_from_dict(data):
    """Build a :class:`RunConfig` from a flat dict of lab-unit values."""
    from .units import FS_TO_AU

    data = dict(data)
    run_kwargs = {}
    for key in _RUN_KEYS:
        if key in data:
            run_kwargs[key] = data.pop(key)

    params = derive_params(data)

    sweep = run_kwargs.pop("sweep", None)
    if isinstance(sweep, str):
        sweep = _parse_flat(f"sweep = {sweep}")["sweep"]
    if sweep:
        pts = []
        for w_cm1, eta in sweep:
            pts.append((convert_units(float(w_cm1), "wavenumber"), float(eta)))
        run_kwargs["sweep"] = tuple(pts)

    window = run_kwargs.pop("plateau_window", None)
    if isinstance(window, str):
        parts = window.replace(",", " ").split()
        if len(parts) != 2:
            raise ConfigurationError("plateau_window needs two values (fs)")
        window = (float(parts[0]), float(parts[1]))
    if window:
        run_kwargs["plateau_window"] = (window[0] * FS_TO_AU, window[1] * FS_TO_AU)
    if "t_max" in run_kwargs:
        run_kwargs["t_max"] = float(run_kwargs["t_max"]) * FS_TO_AU
    if "stride_fs" in run_kwargs:
        run_kwargs["stride"] = float(run_kwargs.pop("stride_fs")) * FS_TO_AU

    return RunConfig(params=params, **run_kwargs)
