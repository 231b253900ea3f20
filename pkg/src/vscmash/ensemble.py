"""Ensemble orchestration: parallel trajectories, checkpoints, artifacts.

Trajectories are independent units of work keyed by (master seed,
trajectory index); they are dispatched in fixed blocks of 256 and merged
in index order, so the ensemble statistics are bit-identical for any
worker count.  Each completed block lands in a checkpoint file, making
interrupted runs resumable without changing the final numbers.
"""

import hashlib
import json
import multiprocessing as mp
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import dynamics
from .dvr import NumericalError
from .model import build_energy_model
from .rates import PopulationSeries, rate_estimator, sweep_profile
from .units import AU_TO_FS, AU_TO_WAVENUMBER

BLOCK_SIZE = 256
FAILURE_BUDGET = 1e-3          # abort if more than 0.1% of trajectories fail


class NumericalFailureBudgetExceeded(RuntimeError):
    pass


# Worker processes are forked, so the model bundle is shared by reference.
_WORKER_CTX = {}


def _propagation_grid(config, params):
    n_steps = max(1, int(round(config.t_max / params.dt)))
    rec_every = max(1, int(round(config.stride / params.dt)))
    n_rec = n_steps // rec_every + 1
    times = np.arange(n_rec) * rec_every * params.dt
    return n_steps, rec_every, times


def _run_block(block):
    """Propagate one block of trajectory indices (runs in a worker)."""
    model = _WORKER_CTX["model"]
    method = _WORKER_CTX["method"]
    seed = _WORKER_CTX["seed"]
    dt = _WORKER_CTX["dt"]
    n_steps = _WORKER_CTX["n_steps"]
    rec_every = _WORKER_CTX["rec_every"]
    epsilon = _WORKER_CTX["epsilon"]
    n_rec = n_steps // rec_every + 1

    b, start, end = block
    nb = end - start
    pops = np.empty((nb, n_rec))
    status = np.empty(nb, dtype=np.int8)
    counters = np.zeros((nb, dynamics.N_COUNTERS), dtype=np.int64)
    diag = np.zeros((nb, dynamics.N_DIAG))
    for k, idx in enumerate(range(start, end)):
        try:
            res = dynamics.run_trajectory(model, method, seed, idx, dt,
                                          n_steps, rec_every, epsilon=epsilon)
            pops[k] = res.pops
            status[k] = res.status
            counters[k] = res.counters
            diag[k] = res.diag
        except NumericalError:
            pops[k] = np.nan
            status[k] = 9
    return b, pops, status, counters, diag


def _config_key(config, params, n_steps, rec_every):
    payload = {
        "method": config.method, "cavity_mode": config.cavity_mode,
        "epsilon": config.epsilon_mash, "omega_c": params.omega_c,
        "eta_c": params.eta_c, "dt": params.dt, "n_steps": n_steps,
        "rec_every": rec_every, "seed": params.seed, "n_traj": params.n_traj,
        "N_B": params.N_B, "N_p": params.N_p, "n_R": params.n_R,
        "beta": params.beta, "lambda_s": params.lambda_s,
        "lambda_c": params.lambda_c,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


@dataclass
class EnsembleResult:
    tag: str
    series: PopulationSeries
    estimate: object
    counters: np.ndarray
    n_failed: int
    files: list = field(default_factory=list)
    diag_max: np.ndarray = None


def run_ensemble(config, point=None, workers=1, tag=None, log=None,
                 checkpoint=True, estimate_rate=True):
    """Run one trajectory ensemble and write its population artifacts.

    Parameters
    ----------
    config : RunConfig
    point : (omega_c, eta_c), optional
        Sweep point in a.u.; defaults to the configured parameters.
        lambda_c is re-derived for the new cavity frequency.
    workers : int
        Process count; results are identical for any value.
    """
    params = config.params if point is None else config.params.at_sweep_point(*point)
    if tag is None:
        tag = (f"{config.method}_{config.cavity_mode}"
               f"_wc{params.omega_c * AU_TO_WAVENUMBER:.0f}_eta{params.eta_c:g}")
    log = log or (lambda msg: None)

    model = build_energy_model(params, config.cavity_mode)
    n_steps, rec_every, times = _propagation_grid(config, params)
    n_traj = params.n_traj
    n_rec = times.size

    n_blocks = (n_traj + BLOCK_SIZE - 1) // BLOCK_SIZE
    blocks = [(b, b * BLOCK_SIZE, min((b + 1) * BLOCK_SIZE, n_traj))
              for b in range(n_blocks)]

    pops = np.full((n_traj, n_rec), np.nan)
    status = np.full(n_traj, -1, dtype=np.int8)
    counters = np.zeros((n_traj, dynamics.N_COUNTERS), dtype=np.int64)
    diag = np.zeros((n_traj, dynamics.N_DIAG))
    done = np.zeros(n_blocks, dtype=bool)

    os.makedirs(config.output_dir, exist_ok=True)
    ckpt_path = os.path.join(config.output_dir, f"checkpoint_{tag}.npz")
    key = _config_key(config, params, n_steps, rec_every)
    if checkpoint and os.path.exists(ckpt_path):
        with np.load(ckpt_path, allow_pickle=False) as ck:
            if str(ck["key"]) == key:
                done = ck["done"]
                pops[: ck["pops"].shape[0]] = ck["pops"]
                status[: ck["status"].shape[0]] = ck["status"]
                counters[: ck["counters"].shape[0]] = ck["counters"]
                diag[: ck["diag"].shape[0]] = ck["diag"]
                log(f"[{tag}] resumed checkpoint: {int(done.sum())}/{n_blocks} blocks done")
            else:
                log(f"[{tag}] checkpoint config changed; starting fresh")

    def _save_checkpoint():
        if checkpoint:
            tmp = ckpt_path + ".tmp.npz"
            np.savez(tmp, key=key, done=done, pops=pops, status=status,
                     counters=counters, diag=diag)
            os.replace(tmp, ckpt_path)

    def _store(result):
        b, bp, bs, bc, bd = result
        _, start, end = blocks[b]
        pops[start:end] = bp
        status[start:end] = bs
        counters[start:end] = bc
        diag[start:end] = bd
        done[b] = True

    todo = [blocks[b] for b in range(n_blocks) if not done[b]]
    _WORKER_CTX.update(model=model, method=config.method, seed=params.seed,
                       dt=params.dt, n_steps=n_steps, rec_every=rec_every,
                       epsilon=config.epsilon_mash)
    t_start = time.time()
    last_save = t_start
    if todo:
        if workers <= 1:
            for i, blk in enumerate(todo):
                _store(_run_block(blk))
                if time.time() - last_save > 60:
                    _save_checkpoint()
                    last_save = time.time()
                if (i + 1) % 4 == 0:
                    frac = (i + 1) / len(todo)
                    log(f"[{tag}] {i + 1}/{len(todo)} blocks "
                        f"({time.time() - t_start:.0f} s, {frac:4.0%})")
        else:
            ctx = mp.get_context("fork")
            with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
                for i, result in enumerate(pool.map(_run_block, todo)):
                    _store(result)
                    if time.time() - last_save > 60:
                        _save_checkpoint()
                        last_save = time.time()
                    if (i + 1) % 4 == 0:
                        log(f"[{tag}] {i + 1}/{len(todo)} blocks "
                            f"({time.time() - t_start:.0f} s)")
        _save_checkpoint()

    ok = status == 0
    n_failed = int(n_traj - ok.sum())
    if n_failed:
        log(f"[{tag}] {n_failed} failed trajectories (statuses "
            f"{np.unique(status[~ok]).tolist()})")
    if n_failed > max(1, FAILURE_BUDGET * n_traj):
        raise NumericalFailureBudgetExceeded(
            f"{n_failed}/{n_traj} trajectories failed (> {FAILURE_BUDGET:.1%})")

    series = PopulationSeries.from_trajectories(times, pops[ok])
    estimate = None
    if estimate_rate:
        estimate = rate_estimator(series, window=config.plateau_window,
                                  smoothing=config.smoothing,
                                  pops_matrix=pops[ok])

    files = [_write_populations_csv(config.output_dir, tag, series)]
    if estimate is not None:
        files.append(_write_kt_csv(config.output_dir, tag, estimate))
    log(f"[{tag}] done in {time.time() - t_start:.0f} s"
        + (f", k = {estimate.plateau_rate_inv_fs:.3e} /fs" if estimate else ""))

    return EnsembleResult(tag=tag, series=series, estimate=estimate,
                          counters=counters[ok].sum(axis=0), n_failed=n_failed,
                          files=files, diag_max=diag[ok].max(axis=0) if ok.any() else None)


def _write_populations_csv(out_dir, tag, series):
    path = os.path.join(out_dir, f"populations_{tag}.csv")
    with open(path, "w") as fh:
        fh.write("t_fs,P_R,sem\n")
        for t, p, s in zip(series.times, series.P_R, series.sem):
            fh.write(f"{t * AU_TO_FS:.17g},{p:.17g},{s:.17g}\n")
    return path


def _write_kt_csv(out_dir, tag, estimate):
    path = os.path.join(out_dir, f"kt_{tag}.csv")
    with open(path, "w") as fh:
        fh.write("t_fs,k_inv_fs\n")
        for t, k in zip(estimate.times, estimate.k_t):
            fh.write(f"{t * AU_TO_FS:.17g},{k / AU_TO_FS:.17g}\n")
    return path


def _write_profile_csv(out_dir, profile):
    path = os.path.join(out_dir, "rate_profile.csv")
    with open(path, "w") as fh:
        fh.write("omega_c_cm1,eta_c,k_inv_fs,ci99,k_over_k0\n")
        for w_cm1, eta, k, ci, ratio in profile.as_csv_rows():
            fh.write(f"{w_cm1:.17g},{eta:.17g},{k:.17g},{ci:.17g},{ratio:.17g}\n")
    return path


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def resolved_config_dict(config):
    params = config.params
    d = {f: getattr(params, f) for f in params.__dataclass_fields__}
    d.update(method=config.method, cavity_mode=config.cavity_mode,
             epsilon_mash=config.epsilon_mash,
             plateau_window=list(config.plateau_window),
             t_max=config.t_max, stride=config.stride,
             smoothing=config.smoothing,
             sweep=[list(pt) for pt in config.sweep])
    return d


def write_manifest(out_dir, config, files, extra=None):
    """JSON run manifest: resolved config, seeds, and output hashes."""
    entries = {}
    for path in files:
        entries[os.path.basename(path)] = {
            "sha256": _sha256(path),
            "bytes": os.path.getsize(path),
        }
    manifest = {
        "config": resolved_config_dict(config),
        "outputs": entries,
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return path


def run_sweep(config, workers=1, log=None, reference_eta0=True):
    """One ensemble per sweep point plus the outside-cavity reference.

    Writes rate_profile.csv and a manifest covering every artifact; a
    hard failure at any point still leaves a manifest of the completed
    artifacts behind.
    """
    log = log or (lambda msg: None)
    if not config.sweep:
        from .units import ConfigurationError
        raise ConfigurationError("sweep list is empty")

    results = {}
    files = []
    try:
        k0_est = None
        if reference_eta0:
            res0 = run_ensemble(config, point=(config.params.omega_c, 0.0),
                                workers=workers, log=log)
            k0_est = res0.estimate
            files.extend(res0.files)
        for point in config.sweep:
            res = run_ensemble(config, point=point, workers=workers, log=log)
            results[point] = res.estimate
            files.extend(res.files)
    except Exception:
        if files:
            write_manifest(config.output_dir, config, files,
                           extra={"status": "partial"})
        raise

    profile = sweep_profile(results, k0=k0_est)
    files.append(_write_profile_csv(config.output_dir, profile))
    write_manifest(config.output_dir, config, files, extra={"status": "complete"})
    return profile
