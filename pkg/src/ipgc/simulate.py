"""Multi-round critiquing simulation: seeded critiquer, per-round metrics, ablations.

The simulated critiquer is independent of the engine: it only sees the public ranked
list, compares keyphrase frequencies between the current predictions and the user's
held-out target items, and argues the most over-represented keyphrases.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .base_model import EmbeddingStore
from .engine import (Critique, CritiqueConfig, apply_critiques, open_session,
                     rank_items, rank_scores)
from .graph import InteractionSet, KnowledgeGraph, ValidationError
from .metrics import hr_at_k, ndcg_at_k, recall_at_k

METRIC_NAMES = ("recall", "ndcg", "hr")


@dataclass
class ExperimentConfig:
    rounds: int = 10
    critiques_per_round: int = 5
    top_n_for_critiquer: int = 20
    k: int = 5
    engine: CritiqueConfig = field(default_factory=CritiqueConfig)
    arm: str = "kg"          # kg | random | direct
    seed: int = 0

    def validate(self):
        if self.rounds < 0:
            raise ValidationError("rounds must be >= 0")
        if self.critiques_per_round < 1 or self.top_n_for_critiquer < 1 or self.k < 1:
            raise ValidationError("critiques_per_round, top_n and k must be >= 1")
        if self.arm not in ("kg", "random", "direct"):
            raise ValidationError(f"unknown arm {self.arm!r}")
        self.engine.validate()


@dataclass
class RoundReport:
    step: int
    recall: float
    ndcg: float
    hr: float

    def get(self, metric: str) -> float:
        return getattr(self, metric)


@dataclass
class ExperimentResult:
    arm: str
    rounds: list
    max_imp: dict

    def round(self, step: int) -> RoundReport:
        return self.rounds[step]


def select_critiques(user: int, top_n_items, target_items, kg: KnowledgeGraph,
                     already_critiqued=(), n: int = 5) -> list:
    """Pick the n keyphrases most over-represented in the predictions vs the targets.

    Frequencies are per-list means of per-item membership indicators over each
    item's direct keyphrase neighborhood; ties break by ascending keyphrase id and
    already-critiqued keyphrases are skipped.  All critiques are negative.
    """
    target_items = list(target_items)
    if not target_items:
        return []
    top_n_items = list(top_n_items)
    f_pred = np.zeros(kg.n_keyphrases)
    for v in top_n_items:
        f_pred[kg.item_keyphrases(int(v))] += 1.0
    f_pred /= len(top_n_items)
    f_target = np.zeros(kg.n_keyphrases)
    for v in target_items:
        f_target[kg.item_keyphrases(int(v))] += 1.0
    f_target /= len(target_items)
    diff = f_pred - f_target

    skip = set(already_critiqued)
    order = np.lexsort((np.arange(kg.n_keyphrases), -diff))
    picked = []
    for kp in order:
        if int(kp) in skip:
            continue
        picked.append(Critique(user=user, keyphrase=int(kp), eta=-1))
        if len(picked) == n:
            break
    return picked


def _user_metrics(ranked_ids, relevant: set, k: int):
    return (recall_at_k(ranked_ids, relevant, k),
            ndcg_at_k(ranked_ids, relevant, k),
            hr_at_k(ranked_ids, relevant, k))


def evaluate_store(store: EmbeddingStore, inter: InteractionSet, k: int = 5):
    """Mean Recall/NDCG/HR@k of the base embeddings over evaluable users."""
    rows = []
    for u in inter.evaluable_users():
        ranked = rank_scores(store.users[u], store.items, exclude=inter.train(u), k=k)
        rows.append(_user_metrics([i for i, _ in ranked], set(int(v) for v in inter.test(u)), k))
    if not rows:
        raise ValidationError("no evaluable users")
    arr = np.array(rows)
    return RoundReport(0, *(float(x) for x in arr.mean(axis=0)))


def max_improvement(rounds) -> dict:
    """MaxImp per metric: best relative gain over the step-0 score."""
    out = {}
    for name in METRIC_NAMES:
        base = rounds[0].get(name)
        if base <= 0:
            out[name] = float("nan")
        else:
            out[name] = max((r.get(name) - base) / base for r in rounds)
    return out


def run_experiment(cfg: ExperimentConfig, store: EmbeddingStore, omega: np.ndarray,
                   kg: KnowledgeGraph, inter: InteractionSet) -> ExperimentResult:
    """Run the multi-round loop for every evaluable user and aggregate per round.

    Users whose critiquer has nothing left to say keep their last scores in the
    aggregate so the per-round mean stays over a fixed population.  Deterministic
    for a given cfg.seed (per-user streams are derived from it).
    """
    cfg.validate()
    engine_cfg = replace(cfg.engine, sampler=replace(cfg.engine.sampler, mode=cfg.arm))
    users = inter.evaluable_users()
    if not users:
        raise ValidationError("no evaluable users")

    per_user = {}
    sessions = {}
    active = {}
    for u in users:
        sessions[u] = open_session(store, omega, u, seed=np.random.default_rng([cfg.seed, u]))
        active[u] = True
        ranked = rank_items(sessions[u], store, exclude=inter.train(u),
                            k=max(cfg.top_n_for_critiquer, cfg.k))
        relevant = set(int(v) for v in inter.test(u))
        per_user[u] = {"ranked": ranked,
                       "metrics": _user_metrics([i for i, _ in ranked[:cfg.k]], relevant, cfg.k),
                       "relevant": relevant}

    def aggregate(step):
        arr = np.array([per_user[u]["metrics"] for u in users])
        if not np.isfinite(arr).all():
            raise ValidationError(f"non-finite metric at step {step}")
        return RoundReport(step, *(float(x) for x in arr.mean(axis=0)))

    rounds = [aggregate(0)]
    for t in range(1, cfg.rounds + 1):
        for u in users:
            if not active[u]:
                continue
            sess = sessions[u]
            top_n = [i for i, _ in per_user[u]["ranked"][:cfg.top_n_for_critiquer]]
            crits = select_critiques(u, top_n, inter.test(u), kg,
                                     already_critiqued=sess.critiqued_keyphrases(),
                                     n=cfg.critiques_per_round)
            if not crits:
                active[u] = False
                continue
            apply_critiques(sess, crits, store, kg, engine_cfg, inter=inter)
            if not np.isfinite(sess.u_post).all():
                raise ValidationError(f"session for user {u} diverged at round {t}")
            ranked = rank_items(sess, store, exclude=inter.train(u),
                                k=max(cfg.top_n_for_critiquer, cfg.k))
            per_user[u]["ranked"] = ranked
            per_user[u]["metrics"] = _user_metrics([i for i, _ in ranked[:cfg.k]],
                                                   per_user[u]["relevant"], cfg.k)
        rounds.append(aggregate(t))

    return ExperimentResult(arm=cfg.arm, rounds=rounds, max_imp=max_improvement(rounds))


def sweep(param: str, values, cfg: ExperimentConfig, store, omega, kg, inter):
    """One run_experiment per value of `param` (m, r or lambda_omega), shared seed."""
    if param not in ("m", "r", "lambda_omega"):
        raise ValidationError(f"unknown sweep parameter {param!r}")
    if not values:
        raise ValidationError("sweep needs at least one value")
    results = []
    for value in values:
        if param == "lambda_omega":
            engine = replace(cfg.engine, lambda_omega=float(value))
        elif param == "m":
            engine = replace(cfg.engine, sampler=replace(cfg.engine.sampler, m=int(value)))
        else:
            engine = replace(cfg.engine, sampler=replace(cfg.engine.sampler, r=float(value)))
        results.append((value, run_experiment(replace(cfg, engine=engine),
                                              store, omega, kg, inter)))
    return results


# -- report files -------------------------------------------------------------------


def result_rows(result: ExperimentResult, param: str = "", value="", k: int = 5):
    """Flatten a result into {arm, param, value, step, metric, score} records.

    MaxImp records use step -1.
    """
    rows = []
    for r in result.rounds:
        for name in METRIC_NAMES:
            rows.append({"arm": result.arm, "param": param, "value": str(value),
                         "step": r.step, "metric": f"{name}@{k}",
                         "score": float(r.get(name))})
    for name in METRIC_NAMES:
        rows.append({"arm": result.arm, "param": param, "value": str(value),
                     "step": -1, "metric": f"maximp_{name}@{k}",
                     "score": float(result.max_imp[name])})
    return rows


def write_report_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def write_report_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["arm", "param", "value", "step",
                                                "metric", "score"])
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
