"""
Variance Profiler - log-likelihood estimator variance and cost against ensemble size
"""
import json
import sys
import time
from pathlib import Path

sys.path.append(str(Path(__file__).parent.parent))

import numpy as np

from src.core.rng import Phase, RngStream
from src.filters.dynamic_n import estimate_sigma2_n
from src.models import build_model
from src.models.simulate import simulate_dataset
from src.rejuvenate.reference import enkf_evaluator, pf_evaluator
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

EVALUATORS = {"pf": pf_evaluator, "enkf": enkf_evaluator}


class VarianceProfiler:
    """Estimate Var[log p_hat(y | theta)] and the cost per run for PF and EnKF over a grid of N"""

    def __init__(self, model_name: str = "ou", n_obs: int = 51, seed: int = 0, runs: int = 20):
        self.model = build_model(model_name)
        self.data = simulate_dataset(self.model, n_obs=n_obs, seed=seed)
        self.phi = np.log(self.data.theta)
        self.seed = seed
        self.runs = runs

    def profile(self, method: str, n: int) -> dict:
        evaluator = EVALUATORS[method](self.model, self.data.ys, n)
        stream = RngStream(self.seed).child(Phase.VARIANCE, n)

        start = time.perf_counter()
        sigma2 = estimate_sigma2_n(self.phi, lambda phi, s: evaluator(phi, s)[0], self.runs, stream)
        elapsed_ms = (time.perf_counter() - start) * 1000

        return {
            "method": method,
            "n": n,
            "sigma2": sigma2,
            "sigma2_times_n": sigma2 * n,
            "ms_per_run": elapsed_ms / self.runs,
        }

    def run_grid(self, methods=("pf", "enkf"), grid=(10, 30, 100, 300)) -> list:
        results = []
        for method in methods:
            logger.info(f"{'=' * 80}")
            logger.info(f"{method.upper()} on {self.model.name}")
            logger.info(f"{'=' * 80}")
            for n in grid:
                profile = self.profile(method, n)
                self._print_profile(profile)
                results.append(profile)
        return results

    def _print_profile(self, profile: dict):
        print(f"  N={profile['n']:>6}  sigma2={profile['sigma2']:>10.4f}  "
              f"N*sigma2={profile['sigma2_times_n']:>10.2f}  {profile['ms_per_run']:>8.2f}ms/run")

    def save_results(self, results: list, output_file: str = "diagnostics/results/variance_profile.json"):
        output_path = Path(output_file)
        output_path.parent.mkdir(parents=True, exist_ok=True)
        with open(output_path, "w", encoding="utf-8") as f:
            json.dump(results, f, indent=2)
        logger.info(f"Results saved to: {output_path}")


if __name__ == "__main__":
    profiler = VarianceProfiler()

    print("\n" + "=" * 80)
    print("VARIANCE PROFILER - log-likelihood estimators")
    print("=" * 80)

    results = profiler.run_grid()
    profiler.save_results(results)
