"""Seeded synthetic dataset with planted user/item/keyphrase cluster structure.

Items and keyphrases are partitioned into clusters.  Every cluster has a couple of
"hub" keyphrases linked to each of its items (genre-like tags) plus sparse
keyphrases linked to a few items each; every item also carries one cross-cluster
noise link.  Users prefer one cluster but a slice of their interactions is drawn
from the rest of the catalogue, so a briefly trained base model leaves visible
headroom for critiquing.

Entity id layout: items occupy [0, n_items), keyphrases [n_items, n_items + n_keyphrases).
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import InteractionSet, KnowledgeGraph


@dataclass
class SyntheticConfig:
    n_users: int = 200
    n_items: int = 100
    n_keyphrases: int = 300
    n_clusters: int = 5
    hub_keyphrases_per_cluster: int = 2
    kp_per_item: int = 4             # sparse own-cluster links per item
    noise_kp_per_item: int = 1       # cross-cluster links per item
    interactions_per_user: int = 18
    in_cluster_fraction: float = 0.7
    n_relations: int = 3
    seed: int = 20240401


def generate(cfg: SyntheticConfig | None = None):
    """Return (triples, item_ids, interaction_pairs) using external entity ids."""
    cfg = cfg or SyntheticConfig()
    rng = np.random.default_rng(cfg.seed)
    C = cfg.n_clusters
    item_cluster = np.arange(cfg.n_items) % C
    kp_cluster = np.arange(cfg.n_keyphrases) % C
    kp_ext = cfg.n_items + np.arange(cfg.n_keyphrases)

    cluster_items = [np.nonzero(item_cluster == c)[0] for c in range(C)]
    cluster_kps = [np.nonzero(kp_cluster == c)[0] for c in range(C)]

    triples = []

    def link(item, kp_dense):
        rel = int(rng.integers(0, cfg.n_relations))
        triples.append((int(item), rel, int(kp_ext[kp_dense])))

    for c in range(C):
        hubs = cluster_kps[c][: cfg.hub_keyphrases_per_cluster]
        for v in cluster_items[c]:
            for hub in hubs:
                link(v, hub)

    for v in range(cfg.n_items):
        c = item_cluster[v]
        own = cluster_kps[c][cfg.hub_keyphrases_per_cluster:]
        picked = rng.choice(own, size=min(cfg.kp_per_item, len(own)), replace=False)
        for kp in picked:
            link(v, kp)
        others = np.nonzero(kp_cluster != c)[0]
        for kp in rng.choice(others, size=cfg.noise_kp_per_item, replace=False):
            link(v, kp)

    # every keyphrase exists as an entity: give unlinked ones one in-cluster item
    linked = {t for _, _, t in triples}
    for j in range(cfg.n_keyphrases):
        if int(kp_ext[j]) not in linked:
            c = kp_cluster[j]
            link(rng.choice(cluster_items[c]), j)

    interactions = []
    n_in = int(round(cfg.in_cluster_fraction * cfg.interactions_per_user))
    for u in range(cfg.n_users):
        c = u % C
        own = cluster_items[c]
        take_in = min(n_in, len(own))
        chosen = set(int(v) for v in rng.choice(own, size=take_in, replace=False))
        pool = np.array([v for v in range(cfg.n_items) if v not in chosen])
        extra = rng.choice(pool, size=cfg.interactions_per_user - take_in, replace=False)
        chosen.update(int(v) for v in extra)
        for v in sorted(chosen):
            interactions.append((u, v))

    item_ids = list(range(cfg.n_items))
    return triples, item_ids, interactions


def build(cfg: SyntheticConfig | None = None, split_ratio: float = 0.8,
          split_seed: int = 0, l_max: int = 2):
    """In-memory KnowledgeGraph and InteractionSet for the synthetic dataset."""
    cfg = cfg or SyntheticConfig()
    triples, item_ids, interactions = generate(cfg)
    kg = KnowledgeGraph(triples, item_ids, l_max=l_max)
    pairs = [(u, kg.item_index(v)) for u, v in interactions]
    inter = InteractionSet.from_pairs(pairs, kg.n_items,
                                      split_ratio=split_ratio, seed=split_seed)
    return kg, inter


def write_dataset(out_dir, cfg: SyntheticConfig | None = None):
    """Materialize triples.tsv / items.txt / interactions.tsv / labels.tsv."""
    cfg = cfg or SyntheticConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    triples, item_ids, interactions = generate(cfg)

    with open(out / "triples.tsv", "w", encoding="utf-8") as fh:
        for h, r, t in triples:
            fh.write(f"{h}\t{r}\t{t}\n")
    with open(out / "items.txt", "w", encoding="utf-8") as fh:
        for v in item_ids:
            fh.write(f"{v}\n")
    with open(out / "interactions.tsv", "w", encoding="utf-8") as fh:
        for u, v in interactions:
            fh.write(f"{u}\t{v}\n")
    C = cfg.n_clusters
    with open(out / "labels.tsv", "w", encoding="utf-8") as fh:
        for v in range(cfg.n_items):
            fh.write(f"{v}\titem c{v % C} #{v // C}\n")
        for j in range(cfg.n_keyphrases):
            kind = "genre" if j // C < cfg.hub_keyphrases_per_cluster else "tag"
            fh.write(f"{cfg.n_items + j}\t{kind} c{j % C} #{j // C}\n")
    return out
