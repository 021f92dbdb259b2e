"""Implementations of the simulate, filter, reference and benchmark commands."""
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from src.cli import io
from src.cli.config import PARAMETER_FILTERS, STATE_FILTERS, ExperimentConfig
from src.core.errors import ConfigValidationError, NumericalError
from src.core.kalman import kalman_filter_exact
from src.core.model import StateSpaceModel
from src.core.rng import Phase, RngStream
from src.enkf.augmented import aenkf_run
from src.enkf.ensemble_kalman import default_obs_builder, enkf_init, enkf_step
from src.enkf.liu_west import LiuWestConfig
from src.filters.base import FilterResult, ParameterFilter
from src.filters.ibis import KalmanIbis
from src.filters.nenkf import NestedEnKF
from src.filters.penkf import Penkf
from src.filters.smc2 import Smc2
from src.filters.system import MoveConfig, PosteriorSummary, TriggerConfig
from src.models import build_model
from src.models.simulate import simulate_dataset
from src.pf.particle_filter import pf_init, pf_step
from src.rbsmc2.rbsmc2 import RbSmc2
from src.rejuvenate.proposals import MhProposalConfig
from src.rejuvenate.reference import enkf_evaluator, kf_evaluator, pf_evaluator, pilot_tuned_chain
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

CHAIN_ALGORITHMS = ("emcmc", "pmmh")

# Readings of under-determined choices, echoed into every run's metadata
CONVENTIONS = {
    "proposal_scale": "log",
    "liu_west_scale": "log",
    "surrogate_store": "frozen_per_sweep",
    "variance_target": "log_likelihood",
    "ess_check": "once_per_step",
    "rb_weight_obs_noise": "unscaled",
    "substeps": "equal",
}


@dataclass
class Estimate:
    """Final posterior mean and sd of the log-parameters from one run."""

    mean: np.ndarray
    sd: np.ndarray
    final_n: int = 0
    extra: Dict[str, float] = field(default_factory=dict)


def build_model_from(cfg: ExperimentConfig) -> StateSpaceModel:
    try:
        return build_model(cfg.model.name, cfg.model.params)
    except TypeError as exc:
        raise ConfigValidationError(f"Bad parameters for model '{cfg.model.name}': {exc}") from exc


def model_theta(cfg: ExperimentConfig, model: StateSpaceModel) -> np.ndarray:
    if cfg.model.theta is None:
        return model.default_theta
    theta = np.asarray(cfg.model.theta, dtype=float)
    if theta.shape != (model.d_theta,):
        raise ConfigValidationError(f"model.theta needs {model.d_theta} values, got {theta.size}")
    return theta


def proposal_config(cfg: ExperimentConfig) -> MhProposalConfig:
    algo = cfg.algorithm
    return MhProposalConfig(zeta2=algo.zeta2, leave_one_out=algo.leave_one_out, iterations=algo.move_iterations)


def build_filter(cfg: ExperimentConfig, model: StateSpaceModel, seed: int) -> ParameterFilter:
    """Instantiate the configured parameter filter."""
    algo = cfg.algorithm
    kwargs = dict(
        trigger=TriggerConfig(
            ess_fraction=algo.ess_fraction,
            sigma2_threshold=algo.sigma2_threshold,
            variance_runs=algo.variance_runs,
            growth=algo.growth,
            n_max=algo.n_max,
        ),
        move_cfg=MoveConfig(proposal_config(cfg), algo.delayed_acceptance, algo.k),
        seed=seed,
        n_jobs=cfg.run.n_jobs,
        common_random_numbers=algo.common_random_numbers,
    )
    if algo.resampler is not None and algo.name in ("smc2", "rbsmc2"):
        kwargs["resampler"] = algo.resampler

    if algo.name == "nenkf":
        return NestedEnKF(model, algo.m, algo.n, **kwargs)
    if algo.name == "penkf":
        return Penkf(model, algo.m, algo.n, liu_west=LiuWestConfig(algo.delta), **kwargs)
    if algo.name == "smc2":
        return Smc2(model, algo.m, algo.n, **kwargs)
    if algo.name == "rbsmc2":
        return RbSmc2(model, algo.m, algo.n, inflation=algo.inflation, weight=algo.weight, **kwargs)
    if algo.name == "kf-ibis":
        return KalmanIbis(model, algo.m, **kwargs)
    raise ConfigValidationError(f"'{algo.name}' is not a parameter filter; choose one of {PARAMETER_FILTERS}")


def run_state_filter(cfg: ExperimentConfig, model: StateSpaceModel, ys: np.ndarray, seed: int) -> Tuple[float, List[float], List[np.ndarray]]:
    """Filter the latent state at fixed parameters; returns (loglik, increments, means)."""
    theta = model_theta(cfg, model)
    name, n = cfg.algorithm.name, cfg.algorithm.n
    stream = RngStream(seed)

    if name == "kf-exact":
        result = kalman_filter_exact(model, theta, ys)
        return result.loglik, list(result.increments), list(result.means)

    if name == "pf":
        resampler = cfg.algorithm.resampler or "multinomial"
        particles, inc = pf_init(model, theta, n, ys[0], stream)
        increments, means = [inc], [particles.weighted_mean()]
        for t in range(1, ys.shape[0]):
            particles, inc = pf_step(model, theta, particles, ys[t], t, stream, resampler=resampler)
            increments.append(inc)
            means.append(particles.weighted_mean())
        return float(np.sum(increments)), increments, means

    obs = default_obs_builder(model)
    out = enkf_init(model, theta, n, ys[0], obs, stream)
    increments, means = [out.log_lik_increment], [out.ensemble.mean(axis=0)]
    for t in range(1, ys.shape[0]):
        out = enkf_step(model, theta, out.ensemble, ys[t], t, obs, stream)
        increments.append(out.log_lik_increment)
        means.append(out.ensemble.mean(axis=0))
    return float(np.sum(increments)), increments, means


def run_chain(cfg: ExperimentConfig, model: StateSpaceModel, ys: np.ndarray, seed: int, method: str):
    """Pilot-tuned MH chain with the likelihood named by ``method``."""
    ref = cfg.reference
    if method == "kf-exact":
        evaluator = kf_evaluator(model, ys)
    elif method == "pmmh":
        evaluator = pf_evaluator(model, ys, ref.n)
    else:
        evaluator = enkf_evaluator(model, ys, ref.n)
    return pilot_tuned_chain(
        model,
        evaluator,
        ref.iterations,
        proposal_config(cfg),
        RngStream(seed).child(Phase.CHAIN),
        thin=ref.thin,
        pilot_fraction=ref.pilot_fraction,
        progress=cfg.run.progress,
    )


def estimate_posterior(cfg: ExperimentConfig, ys: np.ndarray, seed: int) -> Estimate:
    """One replicate of the configured algorithm reduced to its final mean and sd."""
    model = build_model_from(cfg)
    name = cfg.algorithm.name
    if name in PARAMETER_FILTERS:
        result = build_filter(cfg, model, seed).run(ys)
        return Estimate(result.final.mean, result.final.sd, result.system.n_members)
    if name == "aenkf":
        run = aenkf_run(model, cfg.algorithm.m, ys, LiuWestConfig(cfg.algorithm.delta), RngStream(seed))
        phis = run.ensemble.log_params
        return Estimate(phis.mean(axis=0), phis.std(axis=0), cfg.algorithm.m)
    if name in CHAIN_ALGORITHMS:
        chain = run_chain(cfg, model, ys, seed, name)
        summary = chain.summary(cfg.reference.batches)
        return Estimate(summary["mean"], summary["sd"], cfg.reference.n, {"acceptance_rate": chain.acceptance_rate})
    raise ConfigValidationError(f"'{name}' does not estimate parameters; nothing to benchmark")


def _load(cfg: ExperimentConfig, data_path: Path) -> Tuple[StateSpaceModel, np.ndarray, np.ndarray]:
    model = build_model_from(cfg)
    times, ys = io.read_observations(data_path)
    if ys.shape[1] != model.d_y:
        raise ConfigValidationError(f"Observations have {ys.shape[1]} columns; {model.name} expects {model.d_y}")
    return model, times, ys


# --- commands -----------------------------------------------------------


def cmd_simulate(cfg: ExperimentConfig, out_dir: Path) -> Dict[str, Path]:
    model = build_model_from(cfg)
    data = simulate_dataset(
        model,
        theta=model_theta(cfg, model),
        n_obs=cfg.simulate.n_obs,
        seed=cfg.simulate.seed,
        fine_dt=cfg.simulate.fine_dt,
    )
    obs_path, latent_path = io.write_dataset(data, out_dir, model.name)
    logger.info(f"Wrote {obs_path} and {latent_path}")
    return {"observations": obs_path, "latent": latent_path}


def cmd_filter(cfg: ExperimentConfig, data_path: Path, out_dir: Path) -> Dict[str, Path]:
    """
    Run one filter over an observation file and write its outputs.

    Parameter filters write posterior_summary.csv, run_record.csv,
    final_cloud.csv and state_summary.csv; fixed-parameter state filters
    write state_summary.csv only.
    """
    model, times, ys = _load(cfg, data_path)
    name, seed = cfg.algorithm.name, cfg.run.seed
    out_dir = Path(out_dir)
    paths: Dict[str, Path] = {}
    meta = {
        "config": cfg.resolved(),
        "algorithm": name,
        "model": model.describe(),
        "n_obs": int(ys.shape[0]),
        "conventions": CONVENTIONS,
    }

    wall0, cpu0 = time.perf_counter(), time.process_time()
    if name in CHAIN_ALGORITHMS:
        raise ConfigValidationError(f"'{name}' runs a chain; use the reference command with method={name}")

    if name in STATE_FILTERS:
        loglik, increments, means = run_state_filter(cfg, model, ys, seed)
        frame = io.state_frame(times, means, model.d_x)
        frame["loglik_increment"] = increments
        paths["state_summary"] = io.write_csv(frame, out_dir / "state_summary.csv")
        meta.update(loglik=loglik, theta=model_theta(cfg, model))
    elif name == "aenkf":
        run = aenkf_run(model, cfg.algorithm.m, ys, LiuWestConfig(cfg.algorithm.delta), RngStream(seed))
        m = run.ensemble.n
        uniform = np.full(m, 1.0 / m)
        summaries = [PosteriorSummary.from_cloud(t, phis, uniform) for t, phis in enumerate(run.param_history)]
        paths.update(_write_parameter_outputs(model, times, summaries, run.state_means, out_dir))
        paths["final_cloud"] = io.write_csv(
            io.cloud_frame(run.ensemble.log_params, uniform, model.param_names), out_dir / "final_cloud.csv"
        )
        meta.update(loglik=float(np.sum(run.increments)))
    else:
        result = build_filter(cfg, model, seed).run(ys, progress=cfg.run.progress)
        paths.update(_write_parameter_outputs(model, times, result.summaries, result.state_means, out_dir))
        paths.update(_write_filter_diagnostics(model, result, out_dir))
        meta.update(final_n=result.system.n_members, moves=int(sum(r.moved for r in result.record.rows)))

    meta.update(wall_seconds=time.perf_counter() - wall0, cpu_seconds=time.process_time() - cpu0)
    paths["metadata"] = io.write_json(meta, out_dir / io.METADATA_FILE)
    logger.info(f"{name} outputs written to {out_dir}")
    return paths


def _write_parameter_outputs(model, times, summaries, state_means, out_dir: Path) -> Dict[str, Path]:
    return {
        "posterior_summary": io.write_csv(
            io.summaries_frame(summaries, model.param_names), out_dir / "posterior_summary.csv"
        ),
        "state_summary": io.write_csv(io.state_frame(times, state_means, model.d_x), out_dir / "state_summary.csv"),
    }


def _write_filter_diagnostics(model, result: FilterResult, out_dir: Path) -> Dict[str, Path]:
    system = result.system
    cloud = io.cloud_frame(system.log_params, system.normalised_weights(), model.param_names, system.logliks)
    return {
        "run_record": io.write_csv(result.record.to_frame(), out_dir / "run_record.csv"),
        "final_cloud": io.write_csv(cloud, out_dir / "final_cloud.csv"),
    }


def cmd_reference(cfg: ExperimentConfig, data_path: Path, out_dir: Path) -> Dict[str, Path]:
    """Long pilot-tuned chain whose mean and sd serve as the benchmark reference."""
    model, _, ys = _load(cfg, data_path)
    method = cfg.reference_method
    out_dir = Path(out_dir)
    logger.info(f"Reference chain for {model.name}: method={method}, iterations={cfg.reference.iterations}")

    chain = run_chain(cfg, model, ys, cfg.run.seed, method)
    summary = chain.summary(cfg.reference.batches)
    if not chain.valid:
        logger.warning("Reference chain never moved after thinning; marking it invalid")

    draws = pd.DataFrame(chain.phis, columns=[f"log_{p}" for p in model.param_names])
    draws["loglik"] = chain.logliks
    paths = {
        "reference": io.write_csv(io.reference_frame(summary, model.param_names), out_dir / "reference.csv"),
        "chain": io.write_csv(draws, out_dir / "chain.csv"),
    }
    paths["metadata"] = io.write_json(
        {
            "config": cfg.resolved(),
            "method": method,
            "conventions": CONVENTIONS,
            "valid": chain.valid,
            "acceptance_rate": chain.acceptance_rate,
            "iterations": chain.iterations,
            "thin": chain.thin,
        },
        out_dir / io.METADATA_FILE,
    )
    return paths


def replicate_seeds(seed: int, replicates: int) -> List[int]:
    return [int(np.random.SeedSequence([seed, r]).generate_state(1)[0]) for r in range(replicates)]


def bias_rmse(estimates: np.ndarray, reference: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Column-wise bias and RMSE of replicate estimates (R, k) against reference (k,)."""
    errors = np.atleast_2d(estimates) - np.asarray(reference, dtype=float)
    return errors.mean(axis=0), np.sqrt((errors ** 2).mean(axis=0))


def _replicate(cfg: ExperimentConfig, ys: np.ndarray, r: int, seed: int) -> dict:
    wall0, cpu0 = time.perf_counter(), time.process_time()
    try:
        est = estimate_posterior(cfg, ys, seed)
        out = {"ok": True, "mean": est.mean, "sd": est.sd, "final_n": est.final_n}
    except NumericalError as exc:
        logger.warning(f"Replicate {r} (seed={seed}) failed: {exc}")
        out = {"ok": False, "mean": None, "sd": None, "final_n": 0}
    out.update(replicate=r, seed=seed, wall_seconds=time.perf_counter() - wall0, cpu_seconds=time.process_time() - cpu0)
    return out


def benchmark_table(results: List[dict], reference: pd.DataFrame, param_names) -> pd.DataFrame:
    ok = [r for r in results if r["ok"]]
    means = np.array([r["mean"] for r in ok])
    sds = np.array([r["sd"] for r in ok])
    mean_bias, mean_rmse = bias_rmse(means, reference["mean"].to_numpy())
    sd_bias, sd_rmse = bias_rmse(sds, reference["sd"].to_numpy())

    rows = []
    for j, name in enumerate(param_names):
        rows.append({"summary": f"mean_log_{name}", "reference": reference["mean"].iloc[j],
                     "bias": mean_bias[j], "rmse": mean_rmse[j]})
        rows.append({"summary": f"sd_log_{name}", "reference": reference["sd"].iloc[j],
                     "bias": sd_bias[j], "rmse": sd_rmse[j]})
    table = pd.DataFrame(rows, columns=["summary", "reference", "bias", "rmse"])
    table["replicates"] = len(ok)
    table["failed"] = len(results) - len(ok)
    return table


def cmd_benchmark(cfg: ExperimentConfig, data_path: Path, reference_path: Path, out_dir: Path) -> Dict[str, Path]:
    """
    Replicate the configured algorithm and score it against a reference.

    Replicates run in separate processes; CPU seconds go to the metadata
    sidecar so the CSVs stay byte-reproducible.
    """
    if cfg.algorithm.name in STATE_FILTERS:
        raise ConfigValidationError(f"'{cfg.algorithm.name}' does not estimate parameters; nothing to benchmark")
    model, _, ys = _load(cfg, data_path)
    reference = io.read_reference(reference_path)
    if list(reference["param"]) != list(model.param_names):
        raise ConfigValidationError(f"Reference parameters {list(reference['param'])} do not match {model.param_names}")
    out_dir = Path(out_dir)

    seeds = replicate_seeds(cfg.run.seed, cfg.run.replicates)
    logger.info(f"Benchmarking {cfg.algorithm.name} on {model.name}: {len(seeds)} replicates")
    results = Parallel(n_jobs=cfg.run.replicate_jobs, backend="loky")(
        delayed(_replicate)(cfg, ys, r, s) for r, s in enumerate(seeds)
    )
    if not any(r["ok"] for r in results):
        raise NumericalError(f"All {len(results)} replicates failed")

    per_replicate = []
    for r in results:
        row = {"replicate": r["replicate"], "seed": r["seed"], "ok": r["ok"], "final_n": r["final_n"]}
        for j, name in enumerate(model.param_names):
            row[f"mean_log_{name}"] = r["mean"][j] if r["ok"] else np.nan
            row[f"sd_log_{name}"] = r["sd"][j] if r["ok"] else np.nan
        per_replicate.append(row)

    cpu = [r["cpu_seconds"] for r in results]
    paths = {
        "benchmark": io.write_csv(benchmark_table(results, reference, model.param_names), out_dir / "benchmark.csv"),
        "replicates": io.write_csv(pd.DataFrame(per_replicate), out_dir / "replicates.csv"),
    }
    paths["metadata"] = io.write_json(
        {
            "config": cfg.resolved(),
            "seeds": seeds,
            "cpu_seconds": cpu,
            "mean_cpu_seconds": float(np.mean(cpu)),
            "wall_seconds": [r["wall_seconds"] for r in results],
        },
        out_dir / io.METADATA_FILE,
    )
    return paths
