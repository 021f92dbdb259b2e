# Benchmark state-space models
from typing import Any, Dict

from src.core.model import StateSpaceModel
from src.models.lorenz96 import Lorenz96Model
from src.models.lotka_volterra import LotkaVolterraModel
from src.models.ou import OuModel
from src.models.sir import SirModel

MODEL_REGISTRY = {
    "ou": OuModel,
    "lv": LotkaVolterraModel,
    "sir": SirModel,
    "lorenz96": Lorenz96Model,
}


def build_model(name: str, params: Dict[str, Any] = None) -> StateSpaceModel:
    """Instantiate a registered model with keyword overrides."""
    if name not in MODEL_REGISTRY:
        raise ValueError(f"Unknown model '{name}'. Available: {sorted(MODEL_REGISTRY)}")
    return MODEL_REGISTRY[name](**(params or {}))
