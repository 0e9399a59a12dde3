"""Model registry used to rebuild models from checkpoints."""
from __future__ import annotations

from .baselines import VanillaNode
from .building import BuildingModel
from .gas_piston import LearnedGasPiston

MODEL_KINDS = {
    "building": BuildingModel,
    "gas": LearnedGasPiston,
    "vanilla": VanillaNode,
}


def model_from_config(cfg: dict, values=None):
    try:
        cls = MODEL_KINDS[cfg["kind"]]
    except KeyError:
        raise ValueError(f"unknown model kind {cfg.get('kind')!r}") from None
    return cls.from_config(cfg, values)
