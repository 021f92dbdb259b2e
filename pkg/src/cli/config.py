"""Experiment configuration: one TOML file with a section per concern."""
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from config.settings import N_JOBS, OUTPUT_DIR
from src.core.errors import ConfigValidationError

ALGORITHMS = ("pf", "enkf", "aenkf", "penkf", "smc2", "nenkf", "rbsmc2", "emcmc", "pmmh", "kf-exact", "kf-ibis")
PARAMETER_FILTERS = ("penkf", "smc2", "nenkf", "rbsmc2", "kf-ibis")
STATE_FILTERS = ("pf", "enkf", "kf-exact")
EXACT_MODELS = ("ou",)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(_Section):
    name: Literal["ou", "lv", "sir", "lorenz96"] = "ou"
    # Keyword arguments for the model constructor (x0, dt, dim, ...)
    params: Dict[str, Any] = Field(default_factory=dict)
    # Natural-scale parameters for simulation and fixed-parameter filters
    theta: Optional[List[float]] = None


class AlgorithmSection(_Section):
    name: Literal[ALGORITHMS] = "nenkf"
    m: int = Field(1000, ge=1)
    n: int = Field(10, ge=1)
    ess_fraction: float = Field(0.4, ge=0.0, lt=1.0)
    delta: float = Field(0.97, gt=1.0 / 3.0, le=1.0)
    zeta2: Optional[float] = Field(None, ge=0.0)
    leave_one_out: bool = True
    k: int = Field(3, ge=1)
    delayed_acceptance: bool = True
    move_iterations: int = Field(1, ge=1)
    sigma2_threshold: float = Field(1.5, gt=0.0)
    variance_runs: int = Field(10, ge=2)
    growth: Literal["variance", "doubling", "none"] = "variance"
    n_max: int = Field(100_000, ge=2)
    inflation: float = Field(1.0, ge=1.0)
    weight: Literal["rb", "weight0"] = "rb"
    # Inner particle-filter resampler; None keeps each filter's default
    resampler: Optional[Literal["multinomial", "systematic"]] = None
    common_random_numbers: bool = False


class RunSection(_Section):
    seed: int = Field(0, ge=0)
    replicates: int = Field(2, ge=1)
    n_jobs: int = N_JOBS
    replicate_jobs: int = 1
    output_dir: Path = OUTPUT_DIR
    progress: bool = False


class SimulateSection(_Section):
    n_obs: Optional[int] = Field(None, ge=1)
    fine_dt: Optional[float] = Field(None, gt=0.0)
    seed: int = Field(0, ge=0)


class ReferenceSection(_Section):
    # None resolves per model via ExperimentConfig.reference_method
    method: Optional[Literal["kf-exact", "pmmh", "emcmc"]] = None
    iterations: int = Field(100_000, ge=2)
    n: int = Field(100, ge=1)
    thin: int = Field(10, ge=1)
    pilot_fraction: float = Field(0.1, gt=0.0, lt=1.0)
    batches: int = Field(20, ge=2)


class ExperimentConfig(_Section):
    model: ModelSection = Field(default_factory=ModelSection)
    algorithm: AlgorithmSection = Field(default_factory=AlgorithmSection)
    run: RunSection = Field(default_factory=RunSection)
    simulate: SimulateSection = Field(default_factory=SimulateSection)
    reference: ReferenceSection = Field(default_factory=ReferenceSection)

    @model_validator(mode="after")
    def check_compatibility(self) -> "ExperimentConfig":
        model, algo = self.model.name, self.algorithm
        if algo.name in ("kf-exact", "kf-ibis") and model not in EXACT_MODELS:
            raise ValueError(f"{algo.name} needs a linear-Gaussian model, got '{model}'")
        if algo.name == "rbsmc2" and algo.weight == "weight0" and model not in EXACT_MODELS:
            raise ValueError(f"weight0 needs a transition density; only {EXACT_MODELS} provide one")
        if self.reference.method == "kf-exact" and model not in EXACT_MODELS:
            raise ValueError(f"kf-exact reference needs a linear-Gaussian model, got '{model}'")
        if algo.name == "aenkf" and model == "sir":
            raise ValueError("aenkf needs an observation matrix independent of theta; SIR's R depends on sigma")
        return self

    @property
    def reference_method(self) -> str:
        """Explicit method, else the exact Kalman chain where available and PMMH elsewhere."""
        if self.reference.method is not None:
            return self.reference.method
        return "kf-exact" if self.model.name in EXACT_MODELS else "pmmh"

    def resolved(self) -> dict:
        """Every setting, defaults included, for the metadata sidecar."""
        data = self.model_dump(mode="json")
        data["reference"]["method"] = self.reference_method
        return data


def _merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    out = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        elif value is not None:
            out[key] = value
    return out


def build_config(data: Dict[str, Any], overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(_merge(data, overrides or {}))
    except ValidationError as exc:
        raise ConfigValidationError(str(exc)) from exc


def load_config(path: Optional[Path] = None, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    Load an experiment TOML file and apply CLI overrides.

    Args:
        path: TOML file; defaults only when None
        overrides: Nested dict of section -> key -> value (None values ignored)

    Returns:
        Validated ExperimentConfig
    """
    data: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigValidationError(f"Config file not found: {path}")
        try:
            with open(path, "rb") as f:
                data = tomllib.load(f)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigValidationError(f"Invalid TOML in {path}: {exc}") from exc
    return build_config(data, overrides)
