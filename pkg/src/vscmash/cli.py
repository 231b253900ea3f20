"""Command-line interface.

Subcommands: ``model`` (inspect/dump the quantum subsystem and baths),
``run`` (one trajectory ensemble), ``sweep`` (cavity-frequency rate
profile), ``trace`` (single-trajectory debug series).

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import dynamics
from .cavity import convergence_table
from .config import config_from_dict, read_config_dict
from .dvr import NumericalError
from .ensemble import (NumericalFailureBudgetExceeded, run_ensemble, run_sweep,
                       write_manifest)
from .model import build_energy_model, molecule_for
from .units import AU_TO_FS, AU_TO_WAVENUMBER, ConfigurationError, convert_units

DEFAULT_SWEEP_CM1 = (690.0, 940.0, 1190.0, 1440.0, 1690.0)


def _add_common(p):
    p.add_argument("--config", default=None, help="config file (flat key=value or JSON)")
    p.add_argument("--set", dest="sets", action="append", default=[],
                   metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--method", choices=("ehrenfest", "mash"), default=None)
    p.add_argument("--cavity", choices=("classical", "quantum", "quantum-bare"),
                   default=None)
    p.add_argument("--epsilon", type=float, default=None,
                   help="hop-rejection threshold on the scalar coupling")
    p.add_argument("--ntraj", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--paper-scale", action="store_true",
                   help="raise the ensemble size to 10^6 trajectories")
    p.add_argument("--quiet", action="store_true")


def _build_config(args):
    overrides = {}
    for item in args.sets:
        if "=" not in item:
            raise ConfigurationError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, val = item.partition("=")
        overrides[key.strip()] = val.strip()
    if args.method:
        overrides["method"] = args.method
    if args.cavity:
        overrides["cavity_mode"] = args.cavity
    if args.epsilon is not None:
        overrides["epsilon_mash"] = args.epsilon
    if args.ntraj is not None:
        overrides["n_traj"] = args.ntraj
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out:
        overrides["output_dir"] = args.out
    data = read_config_dict(args.config, overrides)
    config = config_from_dict(data)
    if args.paper_scale:
        import dataclasses
        config = dataclasses.replace(
            config, params=dataclasses.replace(config.params, n_traj=1_000_000))
    return config, data


def _log(args):
    if args.quiet:
        return lambda msg: None
    return lambda msg: print(msg, flush=True)


def _cmd_model(args):
    config, _ = _build_config(args)
    params = config.params
    out = config.output_dir
    os.makedirs(out, exist_ok=True)
    grid, sol, trunc = molecule_for(params)
    log = _log(args)
    log(f"omega_0 = {sol.omega_0_cm1:.3f} cm^-1   "
        f"Delta_0 = {sol.Delta0 * AU_TO_WAVENUMBER:.4f} cm^-1   "
        f"Delta_1 = {sol.Delta1 * AU_TO_WAVENUMBER:.3f} cm^-1")
    log(f"Gamma_c/gamma_c = {params.markovian_ratio:.3e}")

    files = []
    if args.dump_model:
        path = os.path.join(out, "model_summary.json")
        with open(path, "w") as fh:
            json.dump({
                "omega_0_cm1": sol.omega_0_cm1,
                "energies_au": sol.energies.tolist(),
                "Ebar0": sol.Ebar0, "Ebar1": sol.Ebar1,
                "Delta0": sol.Delta0, "Delta1": sol.Delta1,
                "H_R": trunc.H_R.tolist(),
                "R_op": trunc.R_op.tolist(),
                "h_R": trunc.h_R.tolist(),
                "markovian_ratio": params.markovian_ratio,
            }, fh, indent=2)
        files.append(path)
        log(f"wrote {path}")

    if args.dump_spectrum is not None:
        Np = args.dump_spectrum
        rows = convergence_table(trunc, params.omega_c, params.eta_c, [Np])
        path = os.path.join(out, f"spectrum_Np{Np}.csv")
        with open(path, "w") as fh:
            fh.write("index,energy_cm1,method\n")
            for _, idx, e_cm1, tag in rows:
                fh.write(f"{idx},{e_cm1:.17g},{tag}\n")
        files.append(path)
        log(f"wrote {path}")

    if args.dump_bath:
        model = build_energy_model(params, config.cavity_mode)
        for name, bath in (("solvent", model.bath1),
                           ("cavity" if config.cavity_mode != "classical" else "effective",
                            model.bath2)):
            path = os.path.join(out, f"bath_{name}.csv")
            with open(path, "w") as fh:
                fh.write("i,omega_au,g_au\n")
                for i, (w, g) in enumerate(zip(bath.omegas, bath.couplings)):
                    fh.write(f"{i},{w:.17g},{g:.17g}\n")
            files.append(path)
            log(f"wrote {path}")

    if files:
        write_manifest(out, config, files)
    return 0


def _cmd_run(args):
    config, _ = _build_config(args)
    res = run_ensemble(config, workers=args.workers, log=_log(args))
    write_manifest(config.output_dir, config, res.files,
                   extra={"n_failed": res.n_failed,
                          "hop_counters": {n: int(v) for n, v in
                                           zip(dynamics.COUNTER_NAMES, res.counters)}})
    est = res.estimate
    if est is not None:
        print(f"plateau rate = {est.plateau_rate_inv_fs:.6e} /fs "
              f"(ci99 {est.ci99_inv_fs:.2e}, flatness {est.flatness:.3f})")
    return 0


def _cmd_sweep(args):
    config, data = _build_config(args)
    if "sweep" not in data:
        import dataclasses
        pts = tuple((convert_units(w, "wavenumber"), config.params.eta_c)
                    for w in DEFAULT_SWEEP_CM1)
        config = dataclasses.replace(config, sweep=pts)
    profile = run_sweep(config, workers=args.workers, log=_log(args))
    w, eta, k, ci, ratio = profile.resonant_row()
    print(f"resonant point: omega_c = {w * AU_TO_WAVENUMBER:.0f} cm^-1, "
          f"k = {k / AU_TO_FS:.6e} /fs, k/k0 = {ratio:.3f}")
    return 0


def _cmd_trace(args):
    config, _ = _build_config(args)
    params = config.params
    model = build_energy_model(params, config.cavity_mode)
    n_steps = max(1, int(round(config.t_max / params.dt)))
    rec_every = max(1, int(round(config.stride / params.dt)))
    trace_every = max(1, int(round(convert_units(args.trace_stride_fs, "femtosecond")
                                   / params.dt)))
    if config.method != "mash":
        raise ConfigurationError("trace output is defined for the mash method")
    res = dynamics.run_trajectory(model, config.method, params.seed, args.traj,
                                  params.dt, n_steps, rec_every,
                                  epsilon=config.epsilon_mash,
                                  trace_every=trace_every)
    out = config.output_dir
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, f"trace_{args.traj}.csv")
    tr = res.trace
    ns = model.n_states
    with open(path, "w") as fh:
        cols = ",".join(f"E{m}_cm1" for m in range(ns))
        fh.write(f"t_fs,active,n_photon,d_an,{cols}\n")
        for i, t in enumerate(tr["times"]):
            evals = ",".join(f"{e * AU_TO_WAVENUMBER:.17g}" for e in tr["E"][i])
            fh.write(f"{t * AU_TO_FS:.17g},{int(tr['active'][i])},"
                     f"{tr['n_photon'][i]:.17g},{tr['d_an'][i]:.17g},{evals}\n")
    print(f"wrote {path}")
    print("hop counters:", {n: int(v) for n, v in
                            zip(dynamics.COUNTER_NAMES, res.counters)})
    return 0


def build_parser():
    ap = argparse.ArgumentParser(
        prog="vscmash",
        description="Mixed quantum-classical rate simulations of a single "
                    "molecule under vibrational strong coupling")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("model", help="build and inspect the quantum subsystem")
    _add_common(p)
    p.add_argument("--dump-model", action="store_true")
    p.add_argument("--dump-spectrum", type=int, default=None, metavar="N_P",
                   help="dump bare/polaron eigenvalue tables at this N_p")
    p.add_argument("--dump-bath", action="store_true")
    p.set_defaults(func=_cmd_model)

    p = sub.add_parser("run", help="run a single trajectory ensemble")
    _add_common(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="rate profile over cavity frequencies")
    _add_common(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("trace", help="single-trajectory debug trace")
    _add_common(p)
    p.add_argument("--traj", type=int, default=0, help="trajectory index")
    p.add_argument("--trace-stride-fs", type=float, default=1.0)
    p.set_defaults(func=_cmd_trace)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (NumericalFailureBudgetExceeded, NumericalError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
