"""Monte Carlo proxy-item sampling: the items that stand in for a critiqued keyphrase.

A keyphrase has no direct preference score under a CF model, so critiques on it are
routed through items the graph links to it.  ``multihop_sample`` draws a fixed quota
from the hop-1 set and the rest from hop 2, uniformly with replacement within each
hop; ``random_sample`` is the KG-blind ablation arm.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import KnowledgeGraph, ValidationError


@dataclass
class SamplerConfig:
    m: int = 5            # proxies drawn per critique
    l_max: int = 2
    r: float = 0.8        # fraction of draws taken from the hop-1 set
    mode: str = "kg"      # kg | random | direct
    seed: int | None = None

    def validate(self):
        if self.m < 1:
            raise ValidationError("sampler m must be >= 1")
        if not 0.0 <= self.r <= 1.0:
            raise ValidationError("sampler r must be in [0, 1]")
        if self.l_max < 1:
            raise ValidationError("sampler l_max must be >= 1")
        if self.mode not in ("kg", "random", "direct"):
            raise ValidationError(f"unknown sampler mode {self.mode!r}")


@dataclass
class ProxySet:
    keyphrase: int
    items: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))
    hops: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))

    def __len__(self):
        return len(self.items)

    @property
    def empty(self) -> bool:
        return len(self.items) == 0


def hop_quotas(m: int, r: float, hop1_size: int, hop2_size: int):
    """(hop-1 draws, hop-2 draws): round-half-up split of m, with empty-hop spillover."""
    if hop1_size == 0 and hop2_size == 0:
        return 0, 0
    if hop1_size == 0:
        return 0, m
    if hop2_size == 0:
        return m, 0
    m1 = int(np.floor(r * m + 0.5))
    return m1, m - m1


def multihop_sample(keyphrase: int, kg: KnowledgeGraph, cfg: SamplerConfig,
                    rng: np.random.Generator | None = None) -> ProxySet:
    """Draw cfg.m proxy items for a keyphrase from its hop-1/hop-2 neighborhoods."""
    cfg.validate()
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    hop1 = kg.multihop_items(keyphrase, 1)
    hop2 = (kg.multihop_items(keyphrase, 2)
            if min(cfg.l_max, kg.l_max) >= 2 else np.array([], dtype=np.int64))
    m1, m2 = hop_quotas(cfg.m, cfg.r, len(hop1), len(hop2))
    if m1 + m2 == 0:
        return ProxySet(keyphrase)
    picks, tags = [], []
    if m1:
        picks.append(hop1[rng.integers(0, len(hop1), size=m1)])
        tags.append(np.ones(m1, dtype=np.int64))
    if m2:
        picks.append(hop2[rng.integers(0, len(hop2), size=m2)])
        tags.append(np.full(m2, 2, dtype=np.int64))
    return ProxySet(keyphrase, np.concatenate(picks), np.concatenate(tags))


def random_sample(m: int, item_count: int, rng: np.random.Generator | int | None = None,
                  keyphrase: int = -1) -> ProxySet:
    """KG-blind control: m uniform draws over the whole item catalogue."""
    if item_count < 1:
        raise ValidationError("item_count must be >= 1")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    items = rng.integers(0, item_count, size=m)
    return ProxySet(keyphrase, items.astype(np.int64), np.zeros(m, dtype=np.int64))


def implied_hop_weights(m: int, r: float, hop1_size: int, hop2_size: int):
    """Per-hop probability mass the quota sampler actually targets (m1/m, m2/m)."""
    m1, m2 = hop_quotas(m, r, hop1_size, hop2_size)
    total = m1 + m2
    if total == 0:
        return 0.0, 0.0
    return m1 / total, m2 / total
