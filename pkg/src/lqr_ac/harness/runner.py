"""Multi-seed execution of a parsed experiment config."""
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ..algos import Projection, Schedules, double_loop_nac, two_timescale_nac, zeroth_order_npg
from ..env import make_rng
from ..oracle import LqrProblem, random_stabilizing_gain


def _problem_from(normalized):
    p = normalized["problem"]
    return LqrProblem(
        np.array(p["A"]), np.array(p["B"]), np.array(p["Q"]), np.array(p["R"]),
        np.array(p["D0"]), p["sigma"],
    )


def initial_gain(prob, init, seed):
    """Configured K0, or a seeded perturbation of K* with rho(A - BK0) < rho_max."""
    if init["K0"] is not None:
        return np.array(init["K0"], dtype=float)
    return random_stabilizing_gain(prob, make_rng(seed, "init"), scale=init["scale"], rho_max=init["rho_max"])


def run_seed(normalized, chash, seed):
    """Run one seed from a normalized config dict (picklable for worker processes)."""
    prob = _problem_from(normalized)
    p = normalized["params"]
    K0 = initial_gain(prob, normalized["init"], seed)
    rng = make_rng(seed, "algorithm")
    alg = normalized["algorithm"]
    if alg == "ac2t":
        sched = Schedules(p["c_alpha"], p["delta"], p["c_beta"], p["v"], p["c_gamma"], p["T"])
        proj = Projection(p["omega_radius"], p["eta_cap"], p["projection_scale"])
        return two_timescale_nac(
            prob, K0, sched, proj, rng, seed=seed, sampling=p["sampling"], mix_steps=p["mix_steps"],
            trace_every=normalized["trace_every"], on_instability=p["on_instability"], config_hash=chash,
        )
    if alg == "double-loop":
        return double_loop_nac(
            prob, K0, p["inner_T"], p["outer_J"], p["c_alpha"], p["eta_step"], p["theta_radius"],
            p["dual_radius"], rng, seed=seed, max_samples=p["max_samples"], config_hash=chash,
        )
    return zeroth_order_npg(
        prob, K0, p["z"], p["l"], p["r"], p["eta"], p["outer_J"], p["init_dist"], rng, seed=seed,
        rollout_sigma=p["rollout_sigma"], dimension_scaled=p["dimension_scaled"],
        max_samples=p["max_samples"], config_hash=chash,
    )


def default_workers():
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def run_experiment(cfg, workers=None):
    """Run every seed; returns records sorted by seed regardless of completion order."""
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise ValueError("workers must be >= 1")
    seeds = sorted(cfg.seeds)
    if workers == 1 or len(seeds) == 1:
        records = [run_seed(cfg.normalized, cfg.config_hash, s) for s in seeds]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(seeds))) as pool:
            futures = [pool.submit(run_seed, cfg.normalized, cfg.config_hash, s) for s in seeds]
            records = [f.result() for f in futures]
    return sorted(records, key=lambda r: r.seed)
