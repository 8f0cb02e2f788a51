"""Synthetic Monte-Carlo sample sets with known labels.

Generator: NumPy ``PCG64`` bit generator seeded with ``SimConfig.seed``,
consumed in this fixed order:

1. true class per item            ``integers(0, C, N)``
2. ambiguity flag per item        ``random(N) < difficulty_mix``
3. competing class offset         ``integers(1, C, N)``
4. competing logit jitter         ``standard_normal(N)``
5. per-item spread multiplier     ``uniform(0.25, 3.0, N)``
6. per-item logit offset          ``standard_normal((N, C))``
7. per-pass logit perturbation    ``standard_normal((T, N, C))``

Each item gets a base logit vector with ``concentration`` on its true class.
Ambiguous items also get a competing class whose logit sits near the true
one. The per-item offset (step 6) stands in for the systematic error of the
deterministic part of the network, and the per-pass perturbation (step 7) for
the dropweight masks. The perturbation has standard deviation ``noise_scale``
times the item's spread multiplier and the offset ``OFFSET_RATIO`` times that,
so items with larger pass-to-pass spread are also more likely to be
misclassified. Every pass is a softmax of perturbed logits.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from mcuq.metrics import METRICS, metric_matrix
from mcuq.tensor import LabelSet, MCSampleSet

# Competing logit for ambiguous items: concentration + AMBIG_SHIFT + AMBIG_JITTER * z
AMBIG_SHIFT = -0.4
AMBIG_JITTER = 0.6
OFFSET_RATIO = 1.5
SPREAD_RANGE = (0.25, 3.0)


@dataclass(frozen=True)
class SimConfig:
    n_items: int = 1000
    n_classes: int = 4
    n_passes: int = 50
    concentration: float = 3.0
    noise_scale: float = 0.8
    difficulty_mix: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.n_items < 1:
            raise ValueError("n_items must be >= 1")
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if self.n_passes < 1:
            raise ValueError("n_passes must be >= 1")
        if not self.concentration > 0:
            raise ValueError("concentration must be > 0")
        if not self.noise_scale >= 0:
            raise ValueError("noise_scale must be >= 0")
        if not 0.0 <= self.difficulty_mix <= 1.0:
            raise ValueError("difficulty_mix must lie in [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return asdict(self)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _item_draws(cfg: SimConfig, rng: np.random.Generator):
    N, C = cfg.n_items, cfg.n_classes
    labels = rng.integers(0, C, N)
    ambiguous = rng.random(N) < cfg.difficulty_mix
    competitor = (labels + rng.integers(1, C, N)) % C
    jitter = rng.standard_normal(N)
    spread = rng.uniform(*SPREAD_RANGE, N)
    return labels, ambiguous, competitor, jitter, spread


def ambiguous_mask(cfg: SimConfig) -> np.ndarray:
    """Replay the generator to recover which items were drawn as ambiguous."""
    return _item_draws(cfg, _rng(cfg.seed))[1]


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def simulate(cfg: SimConfig) -> tuple[MCSampleSet, LabelSet]:
    """Draw a labelled sample set; identical configs give identical output."""
    rng = _rng(cfg.seed)
    N, C, T = cfg.n_items, cfg.n_classes, cfg.n_passes
    labels, ambiguous, competitor, jitter, spread = _item_draws(cfg, rng)

    base = np.zeros((N, C))
    rows = np.arange(N)
    base[rows, labels] = cfg.concentration
    amb = rows[ambiguous]
    base[amb, competitor[amb]] = cfg.concentration + AMBIG_SHIFT + AMBIG_JITTER * jitter[amb]

    scale = (cfg.noise_scale * spread)[:, None]
    offset = rng.standard_normal((N, C)) * (OFFSET_RATIO * scale)
    perturb = rng.standard_normal((T, N, C)) * scale[None]
    logits = base[None] + offset[None] + perturb
    probs = _softmax(logits)
    # float rounding can leave rows a few ulps off; one division pins them
    probs /= probs.sum(axis=-1, keepdims=True)
    return MCSampleSet(probs), LabelSet(labels, C)


def _group_stats(mask: np.ndarray, correct: np.ndarray, m: dict) -> Optional[dict]:
    if not mask.any():
        return None
    out = {
        "count": int(mask.sum()),
        "error_rate": float(1.0 - correct[mask].mean()),
    }
    out["mean_uncertainty"] = {k: float(m[k][mask].mean()) for k in METRICS}
    return out


def describe(cfg: SimConfig, mcs: MCSampleSet, labels: LabelSet) -> dict:
    """Counts, error rates and mean uncertainties for clean and ambiguous items.

    A group with no members is reported as None.
    """
    if mcs.N != cfg.n_items or mcs.C != cfg.n_classes or mcs.T != cfg.n_passes:
        raise ValueError("sample set dimensions do not match the config")
    labels.check_against(mcs)
    amb = ambiguous_mask(cfg)
    m = metric_matrix(mcs)
    correct = m["pred"] == labels.labels
    return {
        "config": cfg.to_dict(),
        "clean": _group_stats(~amb, correct, m),
        "ambiguous": _group_stats(amb, correct, m),
    }
