"""Knowledge graph storage, the item/keyphrase partition, and hop-indexed neighborhoods.

The entity universe is defined by two files: a triples file (``head<TAB>relation<TAB>tail``,
integer ids) and an items file declaring which entity ids are items.  Every entity that
occurs in a triple and is not declared an item is a keyphrase.  External ids may be any
non-negative integers; each class (item / keyphrase / relation / user) is re-indexed to a
dense ``[0, count)`` range, ordered by ascending external id.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np


class ParseError(ValueError):
    """A line of an input file could not be parsed."""

    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class ValidationError(ValueError):
    """Structurally parseable input that violates a dataset invariant."""


def _read_int_rows(path, n_fields: int):
    """Yield (line_no, fields) for every non-empty line; raises ParseError."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != n_fields:
                raise ParseError(path, line_no, f"expected {n_fields} fields, got {len(parts)}")
            try:
                fields = [int(p) for p in parts]
            except ValueError:
                raise ParseError(path, line_no, f"non-integer field in {parts!r}") from None
            if any(f < 0 for f in fields):
                raise ParseError(path, line_no, "negative id")
            rows.append((line_no, fields))
    return rows


class KnowledgeGraph:
    """Triple store with an item/keyphrase partition and per-keyphrase hop sets.

    Hop semantics: hop 1 of a keyphrase is the set of items directly linked to it by
    some triple.  Hop h+1 contains items adjacent to a hop-h item, either through a
    direct item-item triple or through a shared keyphrase, and not already in an
    earlier hop (hop sets are disjoint).  Keyphrase-keyphrase edges are kept in the
    store but are never walked when expanding hops.

    Immutable after construction; safe for concurrent readers.
    """

    def __init__(self, triples, item_ids, l_max: int = 2):
        if l_max < 1:
            raise ValidationError("l_max must be >= 1")
        self.l_max = l_max

        item_set = set(int(i) for i in item_ids)
        entity_ids = set(item_set)
        relation_ids = set()
        for h, r, t in triples:
            if h == t:
                raise ValidationError(f"triple has head == tail ({h})")
            entity_ids.add(int(h))
            entity_ids.add(int(t))
            relation_ids.add(int(r))

        self.item_ids = np.array(sorted(item_set), dtype=np.int64)
        self.keyphrase_ids = np.array(sorted(entity_ids - item_set), dtype=np.int64)
        self.relation_ids = np.array(sorted(relation_ids), dtype=np.int64)
        self.n_items = len(self.item_ids)
        self.n_keyphrases = len(self.keyphrase_ids)
        self.n_relations = len(self.relation_ids)

        self._item_index = {int(e): i for i, e in enumerate(self.item_ids)}
        self._keyphrase_index = {int(e): i for i, e in enumerate(self.keyphrase_ids)}
        self._relation_index = {int(e): i for i, e in enumerate(self.relation_ids)}

        n = len(triples)
        h_item = np.zeros(n, dtype=bool)
        h_idx = np.zeros(n, dtype=np.int64)
        r_idx = np.zeros(n, dtype=np.int64)
        t_item = np.zeros(n, dtype=bool)
        t_idx = np.zeros(n, dtype=np.int64)
        for i, (h, r, t) in enumerate(triples):
            h, r, t = int(h), int(r), int(t)
            h_item[i] = h in item_set
            h_idx[i] = self._item_index[h] if h_item[i] else self._keyphrase_index[h]
            r_idx[i] = self._relation_index[r]
            t_item[i] = t in item_set
            t_idx[i] = self._item_index[t] if t_item[i] else self._keyphrase_index[t]
        self._triples = (h_item, h_idx, r_idx, t_item, t_idx)

        self._build_adjacency()
        self._build_hop_index()

    # -- construction ---------------------------------------------------------

    def _build_adjacency(self):
        h_item, h_idx, _, t_item, t_idx = self._triples
        item_kp = [set() for _ in range(self.n_items)]
        kp_items = [set() for _ in range(self.n_keyphrases)]
        item_item = [set() for _ in range(self.n_items)]
        for i in range(len(h_idx)):
            hi, ti = int(h_idx[i]), int(t_idx[i])
            if h_item[i] and t_item[i]:
                item_item[hi].add(ti)
                item_item[ti].add(hi)
            elif h_item[i] and not t_item[i]:
                item_kp[hi].add(ti)
                kp_items[ti].add(hi)
            elif not h_item[i] and t_item[i]:
                item_kp[ti].add(hi)
                kp_items[hi].add(ti)
            # keyphrase-keyphrase edges carry no hop connectivity
        self._item_kp = [np.array(sorted(s), dtype=np.int64) for s in item_kp]
        self._kp_items = [np.array(sorted(s), dtype=np.int64) for s in kp_items]
        self._item_item = [np.array(sorted(s), dtype=np.int64) for s in item_item]
        self.keyphrase_degree = np.array([len(s) for s in kp_items], dtype=np.int64)

    def _build_hop_index(self):
        self._hop_index = []
        for k in range(self.n_keyphrases):
            hops = []
            seen = set(int(v) for v in self._kp_items[k])
            frontier = sorted(seen)
            hops.append(np.array(frontier, dtype=np.int64))
            for _ in range(2, self.l_max + 1):
                nxt = set()
                for v in frontier:
                    nxt.update(int(w) for w in self._item_item[v])
                    for k2 in self._item_kp[v]:
                        nxt.update(int(w) for w in self._kp_items[k2])
                nxt -= seen
                seen |= nxt
                frontier = sorted(nxt)
                hops.append(np.array(frontier, dtype=np.int64))
            self._hop_index.append(hops)

    # -- queries ---------------------------------------------------------------

    @property
    def triples(self):
        """Dense triple arrays (head_is_item, head_idx, rel_idx, tail_is_item, tail_idx)."""
        return self._triples

    @property
    def n_triples(self) -> int:
        return len(self._triples[1])

    def is_item_entity(self, entity_id: int) -> bool:
        return int(entity_id) in self._item_index

    def item_index(self, entity_id: int) -> int:
        return self._item_index[int(entity_id)]

    def keyphrase_index(self, entity_id: int) -> int:
        return self._keyphrase_index[int(entity_id)]

    def multihop_items(self, keyphrase: int, hop: int) -> np.ndarray:
        """Items whose hop distance from `keyphrase` is exactly `hop` (sorted, disjoint across hops)."""
        if not 0 <= keyphrase < self.n_keyphrases:
            raise ValidationError(f"{keyphrase} is not a keyphrase index")
        if not 1 <= hop <= self.l_max:
            raise ValidationError(f"hop {hop} outside [1, {self.l_max}]")
        return self._hop_index[keyphrase][hop - 1]

    def item_keyphrases(self, item: int) -> np.ndarray:
        """Keyphrases directly linked to an item (its explanation vocabulary)."""
        return self._item_kp[item]

    def keyphrase_items(self, keyphrase: int) -> np.ndarray:
        return self._kp_items[keyphrase]


def load_graph(triples_path, items_path, l_max: int = 2) -> KnowledgeGraph:
    """Build a KnowledgeGraph from a triples file and an items file."""
    item_rows = _read_int_rows(items_path, 1)
    item_ids = [f[0] for _, f in item_rows]
    triple_rows = _read_int_rows(triples_path, 3)
    triples = []
    for line_no, (h, r, t) in triple_rows:
        if h == t:
            raise ValidationError(f"{triples_path}:{line_no}: head equals tail ({h})")
        triples.append((h, r, t))
    return KnowledgeGraph(triples, item_ids, l_max=l_max)


class InteractionSet:
    """User-item interactions with a per-user train/test split.

    Users are re-indexed densely by ascending external id.  Items are referenced by
    their dense KnowledgeGraph index.  ``train(u)`` and ``test(u)`` are disjoint;
    users with fewer than 2 interactions go wholly to train.
    """

    def __init__(self, user_ids, train_items, test_items):
        self.user_ids = np.asarray(user_ids, dtype=np.int64)
        self.n_users = len(self.user_ids)
        self._user_index = {int(u): i for i, u in enumerate(self.user_ids)}
        self._train = [np.asarray(t, dtype=np.int64) for t in train_items]
        self._test = [np.asarray(t, dtype=np.int64) for t in test_items]
        self._train_sets = [frozenset(int(v) for v in t) for t in self._train]

    @classmethod
    def from_pairs(cls, pairs, n_items: int, split_ratio: float = 0.8, seed: int = 0):
        """Split deduplicated (user_ext_id, item_dense_idx) pairs into train/test.

        Users with >= 2 interactions keep at least one test item; the train share is
        round(split_ratio * n).  Deterministic for a given seed.
        """
        if not 0.0 < split_ratio < 1.0:
            raise ValidationError(f"split_ratio {split_ratio} outside (0, 1)")
        by_user = {}
        for u, v in pairs:
            u, v = int(u), int(v)
            if not 0 <= v < n_items:
                raise ValidationError(f"item index {v} out of range")
            by_user.setdefault(u, set()).add(v)
        user_ids = sorted(by_user)
        rng = np.random.default_rng(seed)
        train_items, test_items = [], []
        for u in user_ids:
            items = np.array(sorted(by_user[u]), dtype=np.int64)
            n = len(items)
            if n < 2:
                train_items.append(items)
                test_items.append(np.array([], dtype=np.int64))
                continue
            perm = rng.permutation(n)
            n_test = max(1, n - int(np.floor(split_ratio * n + 0.5)))
            test_items.append(np.sort(items[perm[:n_test]]))
            train_items.append(np.sort(items[perm[n_test:]]))
        return cls(user_ids, train_items, test_items)

    def train(self, user: int) -> np.ndarray:
        return self._train[user]

    def test(self, user: int) -> np.ndarray:
        return self._test[user]

    def train_set(self, user: int) -> frozenset:
        return self._train_sets[user]

    def evaluable_users(self):
        """Dense user indices that have at least one test item."""
        return [u for u in range(self.n_users) if len(self._test[u]) > 0]

    @property
    def n_train(self) -> int:
        return int(sum(len(t) for t in self._train))


def load_interactions(path, kg: KnowledgeGraph, split_ratio: float = 0.8, seed: int = 0) -> InteractionSet:
    """Parse a ``user<TAB>item`` file against a loaded graph and split it."""
    rows = _read_int_rows(path, 2)
    pairs = []
    for line_no, (u, v) in rows:
        if not kg.is_item_entity(v):
            raise ValidationError(f"{path}:{line_no}: id {v} is not a declared item")
        pairs.append((u, kg.item_index(v)))
    return InteractionSet.from_pairs(pairs, kg.n_items, split_ratio=split_ratio, seed=seed)


def load_labels(path):
    """Optional sidecar mapping external entity id -> human label (tab separated)."""
    labels = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t", 1)
            if len(parts) != 2:
                raise ParseError(path, line_no, "expected 'id<TAB>label'")
            try:
                eid = int(parts[0])
            except ValueError:
                raise ParseError(path, line_no, f"non-integer id {parts[0]!r}") from None
            labels[eid] = parts[1]
    return labels
