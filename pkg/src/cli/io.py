"""Result files: schema-stable CSVs plus a JSON metadata sidecar per run."""
import json
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.core.errors import ConfigValidationError
from src.filters.system import PosteriorSummary
from src.models.simulate import SimulatedData

FLOAT_FORMAT = "%.10g"
OBSERVATIONS_FILE = "observations.csv"
LATENT_FILE = "latent.csv"
METADATA_FILE = "metadata.json"


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def _to_builtin(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Cannot serialise {type(value).__name__}")


def write_json(payload: dict, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_to_builtin)
    return path


def read_json(path: Path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _columns(prefix: str, d: int) -> List[str]:
    return [f"{prefix}_{j + 1}" for j in range(d)]


def write_dataset(data: SimulatedData, out_dir: Path, model_name: str) -> Tuple[Path, Path]:
    """observations.csv (t, y_1..y_d) and latent.csv (t, x_1..x_d) plus metadata."""
    out_dir = Path(out_dir)
    obs = pd.DataFrame(data.ys, columns=_columns("y", data.ys.shape[1]))
    obs.insert(0, "t", data.times)
    latent = pd.DataFrame(data.xs, columns=_columns("x", data.xs.shape[1]))
    latent.insert(0, "t", data.times)
    obs_path = write_csv(obs, out_dir / OBSERVATIONS_FILE)
    latent_path = write_csv(latent, out_dir / LATENT_FILE)
    write_json({"model": model_name, "theta": data.theta, "seed": data.seed, **data.meta}, out_dir / METADATA_FILE)
    return obs_path, latent_path


def read_observations(path: Path) -> Tuple[np.ndarray, np.ndarray]:
    """
    Load (times, ys) from an observations CSV or a data set directory.

    Raises:
        ConfigValidationError: Missing file or no y_ columns
    """
    path = Path(path)
    if path.is_dir():
        path = path / OBSERVATIONS_FILE
    if not path.exists():
        raise ConfigValidationError(f"Observations not found: {path}")
    frame = pd.read_csv(path)
    y_cols = [c for c in frame.columns if c.startswith("y_")]
    if "t" not in frame.columns or not y_cols:
        raise ConfigValidationError(f"{path} needs a 't' column and at least one 'y_' column")
    return frame["t"].to_numpy(dtype=float), frame[y_cols].to_numpy(dtype=float)


def summaries_frame(summaries: Iterable[PosteriorSummary], param_names: Sequence[str]) -> pd.DataFrame:
    """One row per time: mean and 2.5%/97.5% quantiles of each log-parameter."""
    rows = []
    for s in summaries:
        row = {"t": s.t}
        for j, name in enumerate(param_names):
            row[f"mean_{name}"] = s.mean[j]
            row[f"q025_{name}"] = s.lower[j]
            row[f"q975_{name}"] = s.upper[j]
        rows.append(row)
    columns = ["t"] + [f"{p}_{name}" for name in param_names for p in ("mean", "q025", "q975")]
    return pd.DataFrame(rows, columns=columns)


def state_frame(times: np.ndarray, means: Sequence[np.ndarray], d_x: int) -> pd.DataFrame:
    frame = pd.DataFrame(np.vstack(means) if len(means) else np.empty((0, d_x)), columns=_columns("x", d_x))
    frame.insert(0, "t", np.asarray(times)[: len(frame)])
    return frame


def cloud_frame(
    log_params: np.ndarray,
    weights: np.ndarray,
    param_names: Sequence[str],
    logliks: Optional[np.ndarray] = None,
) -> pd.DataFrame:
    frame = pd.DataFrame(log_params, columns=[f"log_{name}" for name in param_names])
    frame["weight"] = weights
    if logliks is not None:
        frame["loglik"] = logliks
    return frame


def reference_frame(summary: dict, param_names: Sequence[str]) -> pd.DataFrame:
    return pd.DataFrame({
        "param": list(param_names),
        "mean": summary["mean"],
        "sd": summary["sd"],
        "mcse_mean": summary["mcse_mean"],
        "mcse_sd": summary["mcse_sd"],
    })


def read_reference(path: Path) -> pd.DataFrame:
    path = Path(path)
    if path.is_dir():
        path = path / "reference.csv"
    if not path.exists():
        raise ConfigValidationError(f"Reference posterior not found: {path}")
    return pd.read_csv(path)
