"""Reference base recommender: joint BPR + translational KG embedding training.

Produces the user/item/keyphrase/relation embedding matrices that the critique
engine refines at inference time.  Training is plain seeded mini-batch SGD so the
whole pipeline stays deterministic; externally trained embeddings can be plugged
in through the import/export format instead.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import InteractionSet, KnowledgeGraph, ValidationError
from .mathutil import log_sigmoid, sigmoid

EMB_MAGIC = "IPGC-EMB v1"


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, batch: int):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class TrainConfig:
    dim: int = 16
    epochs: int = 30
    learning_rate: float = 0.05
    batch_size: int = 256
    kg_loss_weight: float = 1.0
    l2_weight: float = 1e-5
    seed: int = 0

    def validate(self):
        if self.dim < 2:
            raise ValidationError("dim must be >= 2")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be > 0")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValidationError("epochs must be >= 0 and batch_size >= 1")


class EmbeddingStore:
    """Dense user/item/keyphrase/relation vectors.

    Arrays are float64 for numerics but always hold float32-representable values,
    so the binary file round-trip is bit exact.
    """

    def __init__(self, users, items, keyphrases, relations):
        self.users = np.asarray(users, dtype=np.float64)
        self.items = np.asarray(items, dtype=np.float64)
        self.keyphrases = np.asarray(keyphrases, dtype=np.float64)
        self.relations = np.asarray(relations, dtype=np.float64)
        dims = {a.shape[1] for a in (self.users, self.items, self.keyphrases, self.relations) if a.size}
        if len(dims) > 1:
            raise ValidationError(f"inconsistent embedding dims {dims}")
        self.dim = self.users.shape[1]

    @property
    def n_users(self):
        return self.users.shape[0]

    @property
    def n_items(self):
        return self.items.shape[0]

    def copy(self) -> "EmbeddingStore":
        return EmbeddingStore(self.users.copy(), self.items.copy(),
                              self.keyphrases.copy(), self.relations.copy())

    def equals(self, other) -> bool:
        return (np.array_equal(self.users, other.users) and np.array_equal(self.items, other.items)
                and np.array_equal(self.keyphrases, other.keyphrases)
                and np.array_equal(self.relations, other.relations))


def _f32_grid(a: np.ndarray) -> np.ndarray:
    # snap to float32-representable values, keep float64 dtype
    return a.astype("<f4").astype(np.float64)


def init_store(n_users: int, kg: KnowledgeGraph, cfg: TrainConfig) -> EmbeddingStore:
    """Seeded uniform(-1/sqrt(d), 1/sqrt(d)) initialization for all entity classes."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    scale = 1.0 / np.sqrt(cfg.dim)

    def mat(n):
        return _f32_grid(rng.uniform(-scale, scale, size=(n, cfg.dim)))

    return EmbeddingStore(mat(n_users), mat(kg.n_items), mat(kg.n_keyphrases), mat(kg.n_relations))


# -- scoring and losses --------------------------------------------------------


def score(u: np.ndarray, v: np.ndarray) -> float:
    """Preference score of a user vector for an item vector (dot product)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValidationError(f"dimension mismatch {u.shape} vs {v.shape}")
    return float(u @ v)


def bpr_pair_loss(u, v_pos, v_neg) -> float:
    """-log sigma(u.v_pos - u.v_neg); non-negative."""
    return float(-log_sigmoid(score(u, v_pos) - score(u, v_neg)))


def bpr_pair_grads(u, v_pos, v_neg):
    """Analytic gradients of bpr_pair_loss w.r.t. (u, v_pos, v_neg)."""
    u = np.asarray(u, dtype=np.float64)
    v_pos = np.asarray(v_pos, dtype=np.float64)
    v_neg = np.asarray(v_neg, dtype=np.float64)
    coef = -(1.0 - sigmoid(u @ (v_pos - v_neg)))
    return coef * (v_pos - v_neg), coef * u, -coef * u


def kg_triple_loss(h, r, t, t_neg) -> float:
    """Translational ranking energy: -log sigma(||h+r-t'||^2 - ||h+r-t||^2)."""
    h = np.asarray(h, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    t_neg = np.asarray(t_neg, dtype=np.float64)
    d = h + r - t
    dn = h + r - t_neg
    return float(-log_sigmoid(dn @ dn - d @ d))


def kg_triple_grads(h, r, t, t_neg):
    """Analytic gradients of kg_triple_loss w.r.t. (h, r, t, t_neg)."""
    h = np.asarray(h, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    t_neg = np.asarray(t_neg, dtype=np.float64)
    d = h + r - t
    dn = h + r - t_neg
    coef = -(1.0 - sigmoid(dn @ dn - d @ d))
    gh = coef * 2.0 * (dn - d)
    return gh, gh.copy(), coef * 2.0 * d, coef * (-2.0) * dn


# -- training -------------------------------------------------------------------


def _sample_bpr_negatives(inter: InteractionSet, users, n_items, rng):
    neg = rng.integers(0, n_items, size=len(users))
    for i, u in enumerate(users):
        owned = inter.train_set(int(u))
        if len(owned) >= n_items:
            continue
        tries = 0
        while int(neg[i]) in owned and tries < 100:
            neg[i] = rng.integers(0, n_items)
            tries += 1
    return neg


def _gather(V, K, is_item, idx):
    out = np.empty((len(idx), V.shape[1]))
    if is_item.any():
        out[is_item] = V[idx[is_item]]
    if (~is_item).any():
        out[~is_item] = K[idx[~is_item]]
    return out


def _scatter_add(V, K, is_item, idx, grads):
    if is_item.any():
        np.add.at(V, idx[is_item], grads[is_item])
    if (~is_item).any():
        np.add.at(K, idx[~is_item], grads[~is_item])


def train_base(kg: KnowledgeGraph, inter: InteractionSet, cfg: TrainConfig,
               epoch_callback=None) -> EmbeddingStore:
    """Train the base model; deterministic for a given seed.

    Each epoch runs one shuffled pass over interaction pairs (BPR with one uniform
    negative per positive) and, when kg_loss_weight > 0, one shuffled pass over KG
    triples (corrupted-tail translational ranking).  The KG is never read when
    kg_loss_weight == 0.
    """
    cfg.validate()
    store = init_store(inter.n_users, kg, cfg)
    U, V, K, R = store.users, store.items, store.keyphrases, store.relations
    rng = np.random.default_rng(cfg.seed)

    pairs = np.array([(u, v) for u in range(inter.n_users) for v in inter.train(u)],
                     dtype=np.int64)
    use_kg = cfg.kg_loss_weight > 0.0
    if use_kg:
        h_item, h_idx, r_idx, t_item, t_idx = kg.triples
        n_triples = len(h_idx)
    lr, l2 = cfg.learning_rate, cfg.l2_weight

    for epoch in range(cfg.epochs):
        loss_sum, loss_n = 0.0, 0

        if len(pairs):
            order = rng.permutation(len(pairs))
            for bi, start in enumerate(range(0, len(order), cfg.batch_size)):
                b = pairs[order[start:start + cfg.batch_size]]
                users, pos = b[:, 0], b[:, 1]
                neg = _sample_bpr_negatives(inter, users, kg.n_items, rng)
                u, vp, vn = U[users], V[pos], V[neg]
                z = np.einsum("ij,ij->i", u, vp - vn)
                batch_loss = float(np.mean(-log_sigmoid(z)))
                if not np.isfinite(batch_loss):
                    raise TrainingDiverged(epoch, bi)
                loss_sum += batch_loss * len(b)
                loss_n += len(b)
                # per-sample SGD semantics: batch gradients are summed, not averaged
                coef = (-(1.0 - sigmoid(z)))[:, None]
                np.add.at(U, users, -lr * (coef * (vp - vn) + 2 * l2 * u))
                np.add.at(V, pos, -lr * (coef * u + 2 * l2 * vp))
                np.add.at(V, neg, -lr * (-coef * u + 2 * l2 * vn))

        if use_kg and n_triples:
            order = rng.permutation(n_triples)
            for bi, start in enumerate(range(0, len(order), cfg.batch_size)):
                sel = order[start:start + cfg.batch_size]
                hi_item, hi = h_item[sel], h_idx[sel]
                ri = r_idx[sel]
                ti_item, ti = t_item[sel], t_idx[sel]
                # corrupt tails within the tail's entity class
                tn = np.where(ti_item,
                              rng.integers(0, max(kg.n_items, 1), size=len(sel)),
                              rng.integers(0, max(kg.n_keyphrases, 1), size=len(sel)))
                clash = tn == ti
                if clash.any():
                    bump = np.where(ti_item, kg.n_items, kg.n_keyphrases)
                    tn[clash] = (tn[clash] + 1) % np.maximum(bump[clash], 1)

                hm = _gather(V, K, hi_item, hi)
                rm = R[ri]
                tm = _gather(V, K, ti_item, ti)
                tnm = _gather(V, K, ti_item, tn)
                d = hm + rm - tm
                dn = hm + rm - tnm
                z = np.einsum("ij,ij->i", dn, dn) - np.einsum("ij,ij->i", d, d)
                batch_loss = float(np.mean(-log_sigmoid(z)))
                if not np.isfinite(batch_loss):
                    raise TrainingDiverged(epoch, bi)
                loss_sum += cfg.kg_loss_weight * batch_loss * len(sel)
                loss_n += len(sel)
                coef = (-(1.0 - sigmoid(z)))[:, None] * cfg.kg_loss_weight
                gh = coef * 2.0 * (dn - d)
                _scatter_add(V, K, hi_item, hi, -lr * (gh + 2 * l2 * hm))
                np.add.at(R, ri, -lr * (gh + 2 * l2 * rm))
                _scatter_add(V, K, ti_item, ti, -lr * (coef * 2.0 * d + 2 * l2 * tm))
                _scatter_add(V, K, ti_item, tn, -lr * (coef * (-2.0) * dn + 2 * l2 * tnm))

        if epoch_callback is not None:
            epoch_callback(epoch, loss_sum / max(loss_n, 1))

    return EmbeddingStore(_f32_grid(U), _f32_grid(V), _f32_grid(K), _f32_grid(R))


# -- persistence ----------------------------------------------------------------


def export_embeddings(store: EmbeddingStore, path):
    """Write `IPGC-EMB v1` header + row-major little-endian float32 U, V, K, R."""
    header = (f"{EMB_MAGIC} {store.dim} {store.n_users} {store.n_items} "
              f"{store.keyphrases.shape[0]} {store.relations.shape[0]}\n")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        for mat in (store.users, store.items, store.keyphrases, store.relations):
            fh.write(np.ascontiguousarray(mat, dtype="<f4").tobytes())


def import_embeddings(path) -> EmbeddingStore:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").strip()
        parts = header.split()
        if len(parts) != 7 or " ".join(parts[:2]) != EMB_MAGIC:
            raise ValidationError(f"{path}: bad embedding header {header!r}")
        dim, n_users, n_items, n_kp, n_rel = (int(p) for p in parts[2:])
        payload = fh.read()
    counts = [n_users, n_items, n_kp, n_rel]
    expected = sum(c * dim for c in counts) * 4
    if len(payload) != expected:
        raise ValidationError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    mats, off = [], 0
    for c in counts:
        nbytes = c * dim * 4
        mats.append(np.frombuffer(payload[off:off + nbytes], dtype="<f4")
                    .reshape(c, dim).astype(np.float64))
        off += nbytes
    return EmbeddingStore(*mats)
