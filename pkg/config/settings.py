"""Configuration settings for the inference engine."""
from pathlib import Path

from dotenv import load_dotenv
from pydantic_settings import BaseSettings, SettingsConfigDict

# Load environment variables
load_dotenv()

# Base paths
BASE_DIR = Path(__file__).parent.parent


class EngineSettings(BaseSettings):
    """Process-level settings, overridable through NENKF_* environment variables."""

    model_config = SettingsConfigDict(env_prefix="NENKF_", env_file=".env", extra="ignore")

    data_dir: Path = BASE_DIR / "data"
    output_dir: Path = BASE_DIR / "runs"
    logs_dir: Path = BASE_DIR / "logs"

    log_level: str = "INFO"
    log_file: str = "engine.log"
    log_to_file: bool = True

    # Worker count for per-particle loops (1 = sequential)
    n_jobs: int = 1

    # Cholesky jitter policy: eps * trace(S) / d, escalated x10 up to max_escalations times
    jitter_eps: float = 1e-8
    jitter_max_escalations: int = 3


settings = EngineSettings()

DATA_DIR = settings.data_dir
OUTPUT_DIR = settings.output_dir
LOGS_DIR = settings.logs_dir

# Logging
LOG_LEVEL = settings.log_level
LOG_TO_FILE = settings.log_to_file
LOG_FILE = LOGS_DIR / settings.log_file if not Path(settings.log_file).is_absolute() else Path(settings.log_file)

N_JOBS = settings.n_jobs
JITTER_EPS = settings.jitter_eps
JITTER_MAX_ESCALATIONS = settings.jitter_max_escalations
