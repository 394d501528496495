"""Greedy layer-by-layer Ax-BxP configuration search.

Layers are visited in order. For each one, candidates from the pruned design
space are tried cheapest first (fewest block products) and the first whose
accuracy drop against the exact FxP8 baseline is within ``gamma`` is kept;
the layer is then frozen before moving to the next one. When every candidate
exceeds ``gamma`` the minimum-drop candidate is kept and flagged. Once all
layers are assigned the network is optionally fine-tuned.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .blocked import check_k
from .config import AxBxPConfig, Mode
from .design_space import enumerate_pruned
from .engine.data import Dataset
from .engine.layers import FloatModel
from .engine.quant import QuantModel, accuracy, quantize_model
from .engine.train import finetune_axbxp
from .errors import ConfigurationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchSettings:
    gamma: float = 1.0
    k_tgt: int = 2
    eval_subset: int | None = None
    max_epoch: int = 0
    seed: int = 0
    mode: Mode = Mode.DYNAMIC
    pin_first_last: bool = True
    retrain_candidates: bool = False
    lr: float = 1e-3

    def __post_init__(self) -> None:
        if self.gamma < 0:
            raise ConfigurationError(f"gamma must be >= 0, got {self.gamma}")
        check_k(self.k_tgt)
        object.__setattr__(self, "mode", Mode(self.mode))


@dataclass
class Candidate:
    config: AxBxPConfig
    accuracy: float
    drop: float


@dataclass
class LayerChoice:
    layer_index: int
    kind: str
    config: AxBxPConfig
    accuracy: float
    drop: float
    accepted: bool
    trail: list[Candidate] = field(default_factory=list)


@dataclass
class SearchReport:
    baseline_accuracy: float
    search_accuracy: float
    final_accuracy: float
    gamma: float
    epochs_run: int
    layers: list[LayerChoice]
    model: QuantModel | None = None
    evaluations: int = 0

    @property
    def final_drop(self) -> float:
        return self.baseline_accuracy - self.final_accuracy

    @property
    def best_effort(self) -> bool:
        return self.final_drop > self.gamma

    def assignment(self) -> dict[int, AxBxPConfig]:
        return {c.layer_index: c.config for c in self.layers}

    def to_dict(self) -> dict:
        def cand(c: Candidate) -> dict:
            return {"config": c.config.to_dict(), "accuracy": c.accuracy, "drop": c.drop}

        return {
            "baseline_accuracy": self.baseline_accuracy,
            "search_accuracy": self.search_accuracy,
            "final_accuracy": self.final_accuracy,
            "final_drop": self.final_drop,
            "gamma": self.gamma,
            "best_effort": self.best_effort,
            "epochs_run": self.epochs_run,
            "evaluations": self.evaluations,
            "layers": [
                {"layer_index": c.layer_index, "kind": c.kind, "config": c.config.to_dict(),
                 "accuracy": c.accuracy, "drop": c.drop, "accepted": c.accepted,
                 "trail": [cand(t) for t in c.trail]}
                for c in self.layers
            ],
        }


def _eval_split(dataset: Dataset, settings: SearchSettings) -> Dataset:
    return dataset.subset(None, settings.eval_subset)


def get_best_config(model: QuantModel, layer_index: int, settings: SearchSettings,
                    dataset: Dataset, baseline: float) -> tuple[LayerChoice, QuantModel]:
    """Pick a configuration for one layer with earlier layers frozen.

    Returns the choice and the model with the choice applied (retrained if
    ``settings.retrain_candidates``).
    """
    space = enumerate_pruned(settings.k_tgt, settings.mode)
    if not len(space):
        raise ConfigurationError(f"empty design space for K={settings.k_tgt}")
    ev = _eval_split(dataset, settings)
    trail: list[Candidate] = []
    models: list[QuantModel] = []
    for cfg in space:
        m = model.with_configs({layer_index: cfg})
        if settings.retrain_candidates:
            m, _ = finetune_axbxp(m, None, dataset, 1, lr=settings.lr, seed=settings.seed)
        acc = accuracy(m, ev.test_x, ev.test_y)
        trail.append(Candidate(cfg, acc, baseline - acc))
        models.append(m)
        log.info("layer %d %s: acc %.2f drop %.2f", layer_index, cfg, acc, baseline - acc)
        if baseline - acc <= settings.gamma:
            break
    pick = len(trail) - 1
    accepted = trail[pick].drop <= settings.gamma
    if not accepted:
        pick = int(np.argmin([c.drop for c in trail]))  # first minimum = cheapest
    c = trail[pick]
    choice = LayerChoice(layer_index, model.layers[layer_index].kind, c.config, c.accuracy,
                         c.drop, accepted, trail)
    return choice, models[pick]


def design_axbxp_dnn(model: QuantModel | FloatModel, dataset: Dataset,
                     settings: SearchSettings) -> SearchReport:
    """Assign a configuration to every approximable layer, then fine-tune."""
    if isinstance(model, FloatModel):
        model = quantize_model(model, dataset.train_x)
    ev = _eval_split(dataset, settings)
    current = model.cleared()
    baseline = accuracy(current, ev.test_x, ev.test_y, approx=False)
    choices = []
    evaluations = 0
    for idx in current.approximable_indices(settings.pin_first_last):
        choice, current = get_best_config(current, idx, settings, dataset, baseline)
        evaluations += len(choice.trail)
        choices.append(choice)
    search_acc = accuracy(current, ev.test_x, ev.test_y)
    epochs = 0
    if settings.max_epoch > 0 and choices:
        current, epochs = finetune_axbxp(current, None, ev, settings.max_epoch,
                                         gamma=settings.gamma, baseline=baseline,
                                         lr=settings.lr, seed=settings.seed)
    final = accuracy(current, ev.test_x, ev.test_y)
    return SearchReport(baseline, search_acc, final, settings.gamma, epochs, choices,
                        current, evaluations)
