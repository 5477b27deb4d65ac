"""Inference-time critique engine: importance weights, critique likelihoods, MAP update.

A session owns a mutable copy of one user's embedding.  Each critique round minimizes

    sum over critiques of the proxy likelihood loss  +  lambda_omega * prior penalty

with a few Adam steps, resampling the proxy items at every step.  Item, keyphrase and
relation embeddings are never written.

Polarity convention: the likelihood of a critique ranks the proxy item against the
threshold constant ``h`` in the direction the feedback implies, i.e. the per-sample
loss is ``-log sigmoid(eta * (u.v - h))``.  A negative critique therefore drives the
proxy scores below ``h``, a positive one above it; this is the same pairwise form the
train-pair variant uses with a real positive item in place of ``h``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .base_model import EmbeddingStore
from .graph import InteractionSet, KnowledgeGraph, ValidationError
from .mathutil import log_sigmoid, sigmoid
from .sampling import ProxySet, SamplerConfig, multihop_sample, random_sample

OMEGA_MAGIC = "IPGC-OMEGA v1"


@dataclass(frozen=True)
class Critique:
    user: int
    keyphrase: int
    eta: int  # +1 accept, -1 argue

    def __post_init__(self):
        if self.eta not in (-1, 1):
            raise ValidationError(f"eta must be +1 or -1, got {self.eta}")


@dataclass
class CritiqueConfig:
    learning_rate: float = 0.005
    lambda_omega: float = 1e-3
    h: float = 1.0                  # score threshold the proxies are ranked against
    steps_per_critique: int = 5     # optimizer steps per critique round
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    variant: str = "ipgc"           # ipgc | ipgc-t
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def validate(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be > 0")
        if self.lambda_omega < 0:
            raise ValidationError("lambda_omega must be >= 0")
        if self.steps_per_critique < 0:
            raise ValidationError("steps_per_critique must be >= 0")
        if self.variant not in ("ipgc", "ipgc-t"):
            raise ValidationError(f"unknown variant {self.variant!r}")
        self.sampler.validate()


@dataclass
class SessionState:
    """One user's critiquing session; exclusively owned by its caller."""
    user: int
    u_prior: np.ndarray
    u_post: np.ndarray
    omega_u: np.ndarray
    history: list = field(default_factory=list)
    adam_m: np.ndarray = None
    adam_v: np.ndarray = None
    adam_t: int = 0
    rng: np.random.Generator = None

    def critiqued_keyphrases(self) -> set:
        return {c.keyphrase for c in self.history}

    def reset(self):
        self.u_post = self.u_prior.copy()
        self.history.clear()
        self.adam_m = np.zeros_like(self.u_prior)
        self.adam_v = np.zeros_like(self.u_prior)
        self.adam_t = 0


@dataclass
class ApplyReport:
    steps: int = 0
    empty_proxy_keyphrases: list = field(default_factory=list)

    @property
    def noop(self) -> bool:
        return self.steps == 0


def open_session(store: EmbeddingStore, omega: np.ndarray, user: int,
                 seed=None) -> SessionState:
    if not 0 <= user < store.n_users:
        raise ValidationError(f"unknown user {user}")
    prior = store.users[user].copy()
    prior.setflags(write=False)
    return SessionState(
        user=user,
        u_prior=prior,
        u_post=prior.copy(),
        omega_u=omega[user].copy(),
        adam_m=np.zeros_like(prior),
        adam_v=np.zeros_like(prior),
        rng=seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed),
    )


# -- importance weights ----------------------------------------------------------


def importance_weights(store: EmbeddingStore, inter: InteractionSet) -> np.ndarray:
    """Per-user, per-dimension sensitivity of predicted scores to embedding shifts.

    For each train interaction the magnitude of d|u.v|/du_i is |v_i|; the row is the
    mean over the user's train items.  Users without train interactions get zeros.
    """
    omega = np.zeros_like(store.users)
    for u in range(inter.n_users):
        items = inter.train(u)
        if len(items):
            omega[u] = np.mean(np.abs(store.items[items]), axis=0)
    return omega.astype("<f4").astype(np.float64)


def perturbation_estimate(u, v, delta) -> float:
    """First-order predicted change of |u.v| under u -> u + delta."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    return float(np.sign(u @ v) * (v @ delta))


# -- loss terms -------------------------------------------------------------------


def prior_penalty(u_post, u_prior, omega_u) -> float:
    """Importance-weighted squared drift from the pre-critiquing embedding."""
    diff = np.asarray(u_prior, dtype=np.float64) - np.asarray(u_post, dtype=np.float64)
    return float(np.asarray(omega_u, dtype=np.float64) @ (diff * diff))


def prior_penalty_grad(u_post, u_prior, omega_u) -> np.ndarray:
    return 2.0 * np.asarray(omega_u) * (np.asarray(u_post) - np.asarray(u_prior))


def likelihood_loss(u, proxy_vecs, eta: int, h: float) -> float:
    """Mean pairwise loss ranking each proxy across the threshold per polarity."""
    z = eta * (proxy_vecs @ u - h)
    return float(np.mean(-log_sigmoid(z)))


def likelihood_grad(u, proxy_vecs, eta: int, h: float) -> np.ndarray:
    z = eta * (proxy_vecs @ u - h)
    coef = -(1.0 - sigmoid(z)) * eta
    return coef @ proxy_vecs / len(proxy_vecs)


def likelihood_loss_t(u, proxy_vecs, pos_vecs) -> float:
    """Train-pair variant: BPR of a held positive item over each proxy (negative critiques)."""
    z = (pos_vecs - proxy_vecs) @ u
    return float(np.mean(-log_sigmoid(z)))


def likelihood_grad_t(u, proxy_vecs, pos_vecs) -> np.ndarray:
    z = (pos_vecs - proxy_vecs) @ u
    coef = -(1.0 - sigmoid(z))
    return coef @ (pos_vecs - proxy_vecs) / len(proxy_vecs)


def critique_likelihood_loss(session: SessionState, proxies: ProxySet,
                             store: EmbeddingStore, eta: int, cfg: CritiqueConfig) -> float:
    if proxies.empty:
        raise ValidationError("empty proxy set has no likelihood")
    return likelihood_loss(session.u_post, store.items[proxies.items], eta, cfg.h)


def critique_likelihood_loss_t(session: SessionState, proxies: ProxySet,
                               store: EmbeddingStore, eta: int, cfg: CritiqueConfig,
                               inter: InteractionSet,
                               rng: np.random.Generator | None = None) -> float:
    """Train-pair likelihood; eta must be -1.  Falls back to the threshold form when
    the user has no train interactions."""
    if eta != -1:
        raise ValidationError("train-pair variant applies to negative critiques only")
    if proxies.empty:
        raise ValidationError("empty proxy set has no likelihood")
    train = inter.train(session.user)
    if len(train) == 0:
        return critique_likelihood_loss(session, proxies, store, eta, cfg)
    rng = rng if rng is not None else session.rng
    pos = store.items[train[rng.integers(0, len(train), size=len(proxies))]]
    return likelihood_loss_t(session.u_post, store.items[proxies.items], pos)


def full_loss(u, proxy_sets, etas, store, omega_u, u_prior, cfg,
              pos_sets=None) -> float:
    """Complete MAP objective for one round (used directly by the gradient checks)."""
    total = cfg.lambda_omega * prior_penalty(u, u_prior, omega_u)
    for i, p in enumerate(proxy_sets):
        vecs = store.items[p.items]
        if pos_sets is not None and pos_sets[i] is not None:
            total += likelihood_loss_t(u, vecs, pos_sets[i])
        else:
            total += likelihood_loss(u, vecs, etas[i], cfg.h)
    return total


def full_grad(u, proxy_sets, etas, store, omega_u, u_prior, cfg,
              pos_sets=None) -> np.ndarray:
    g = cfg.lambda_omega * prior_penalty_grad(u, u_prior, omega_u)
    for i, p in enumerate(proxy_sets):
        vecs = store.items[p.items]
        if pos_sets is not None and pos_sets[i] is not None:
            g = g + likelihood_grad_t(u, vecs, pos_sets[i])
        else:
            g = g + likelihood_grad(u, vecs, etas[i], cfg.h)
    return g


# -- MAP update --------------------------------------------------------------------


def _hops_empty(keyphrase: int, kg: KnowledgeGraph, sampler: SamplerConfig) -> bool:
    if len(kg.multihop_items(keyphrase, 1)):
        return False
    return not (min(sampler.l_max, kg.l_max) >= 2 and len(kg.multihop_items(keyphrase, 2)))


def _draw_proxies(critique: Critique, store: EmbeddingStore, kg: KnowledgeGraph,
                  cfg: CritiqueConfig, rng) -> tuple[np.ndarray | None, ProxySet | None]:
    mode = cfg.sampler.mode
    if mode == "direct":
        # ablation arm: critique the keyphrase embedding itself, no proxy items
        return store.keyphrases[critique.keyphrase][None, :], None
    if mode == "random":
        p = random_sample(cfg.sampler.m, store.n_items, rng, keyphrase=critique.keyphrase)
    else:
        p = multihop_sample(critique.keyphrase, kg, cfg.sampler, rng)
    if p.empty:
        return None, p
    return store.items[p.items], p


def apply_critiques(session: SessionState, critiques, store: EmbeddingStore,
                    kg: KnowledgeGraph, cfg: CritiqueConfig,
                    inter: InteractionSet | None = None) -> ApplyReport:
    """Append critiques to the session history and run one MAP optimization round.

    All critiques of the round contribute to a single summed loss.  Proxies are
    resampled every step from the session's stream.  Keyphrases whose proxy draw is
    empty are reported back and contribute nothing; if every critique is empty the
    session is left untouched.
    """
    cfg.validate()
    critiques = list(critiques)
    for c in critiques:
        if c.user != session.user:
            raise ValidationError(f"critique user {c.user} != session user {session.user}")
    if cfg.variant == "ipgc-t" and inter is None:
        raise ValidationError("train-pair variant needs the interaction set")
    session.history.extend(critiques)
    report = ApplyReport()

    live = []
    empty = []
    for c in critiques:
        if cfg.sampler.mode == "kg" and _hops_empty(c.keyphrase, kg, cfg.sampler):
            empty.append(c.keyphrase)
        else:
            live.append(c)
    report.empty_proxy_keyphrases = empty
    if not live or cfg.steps_per_critique == 0:
        return report

    train = inter.train(session.user) if inter is not None else np.array([], dtype=np.int64)
    use_pairs = cfg.variant == "ipgc-t" and len(train) > 0
    b1, b2, eps, lr, lam = (cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps,
                            cfg.learning_rate, cfg.lambda_omega)
    u = session.u_post
    for _ in range(cfg.steps_per_critique):
        g = lam * prior_penalty_grad(u, session.u_prior, session.omega_u)
        for c in live:
            vecs, _ = _draw_proxies(c, store, kg, cfg, session.rng)
            if vecs is None:
                continue
            if use_pairs and c.eta == -1:
                pos = store.items[train[session.rng.integers(0, len(train), size=len(vecs))]]
                g = g + likelihood_grad_t(u, vecs, pos)
            else:
                g = g + likelihood_grad(u, vecs, c.eta, cfg.h)

        session.adam_t += 1
        session.adam_m = b1 * session.adam_m + (1 - b1) * g
        session.adam_v = b2 * session.adam_v + (1 - b2) * g * g
        m_hat = session.adam_m / (1 - b1 ** session.adam_t)
        v_hat = session.adam_v / (1 - b2 ** session.adam_t)
        u = u - lr * m_hat / (np.sqrt(v_hat) + eps)
        # Exact proximal shrink of the quadratic prior term.  Adam's normalized
        # steps cannot feel the penalty's scale, only its direction, so for stiff
        # lambda the plain step oscillates around the prior instead of pinning to
        # it; the closed-form shrink restores the large-lambda limit.
        u = session.u_prior + (u - session.u_prior) / (1.0 + 2.0 * lr * lam * session.omega_u)
        report.steps += 1
    session.u_post = u
    return report


def apply_critique(session: SessionState, critique: Critique, store: EmbeddingStore,
                   kg: KnowledgeGraph, cfg: CritiqueConfig,
                   inter: InteractionSet | None = None) -> ApplyReport:
    return apply_critiques(session, [critique], store, kg, cfg, inter=inter)


# -- ranking -----------------------------------------------------------------------


def rank_scores(u_vec: np.ndarray, items: np.ndarray, exclude=(), k: int | None = None):
    """All-ranking: every item not excluded, by descending score, ties by ascending id."""
    scores = items @ u_vec
    mask = np.ones(len(scores), dtype=bool)
    exclude = np.asarray(list(exclude), dtype=np.int64)
    if len(exclude):
        mask[exclude] = False
    ids = np.nonzero(mask)[0]
    order = np.lexsort((ids, -scores[ids]))
    ranked = ids[order]
    if k is not None:
        ranked = ranked[:k]
    return [(int(i), float(scores[i])) for i in ranked]


def rank_items(session: SessionState, store: EmbeddingStore, exclude=(), k: int = 10):
    if k < 1:
        raise ValidationError("k must be >= 1")
    return rank_scores(session.u_post, store.items, exclude=exclude, k=k)


# -- persistence ---------------------------------------------------------------------


def save_omega(omega: np.ndarray, path):
    header = f"{OMEGA_MAGIC} {omega.shape[1]} {omega.shape[0]}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(omega, dtype="<f4").tobytes())


def load_omega(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").strip()
        parts = header.split()
        if len(parts) != 4 or " ".join(parts[:2]) != OMEGA_MAGIC:
            raise ValidationError(f"{path}: bad importance-weight header {header!r}")
        dim, n_users = int(parts[2]), int(parts[3])
        payload = fh.read()
    if len(payload) != n_users * dim * 4:
        raise ValidationError(f"{path}: payload is {len(payload)} bytes, "
                              f"expected {n_users * dim * 4}")
    return np.frombuffer(payload, dtype="<f4").reshape(n_users, dim).astype(np.float64)
