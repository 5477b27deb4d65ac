"""Session-oriented HTTP API for live critiquing.

Sessions live in server memory and hold a private copy of the user's embedding; the
shared embedding matrices are never written.  Score payloads are decimal strings so
clients can display them verbatim.
"""
from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .base_model import EmbeddingStore
from .engine import (Critique, CritiqueConfig, SessionState, apply_critique,
                     open_session, rank_items)
from .graph import InteractionSet, KnowledgeGraph


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass
class ServiceConfig:
    top_k: int = 5
    explanations_per_item: int = 5
    session_timeout: float = 3600.0
    session_seed: int = 0


@dataclass
class _Session:
    state: SessionState
    created_at: float
    last_access: float
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_scores: dict = field(default_factory=dict)


class OpenSessionRequest(BaseModel):
    user: int


class CritiqueRequest(BaseModel):
    keyphrase: int
    eta: int


def create_app(store: EmbeddingStore, omega: np.ndarray, kg: KnowledgeGraph,
               inter: InteractionSet | None, engine_cfg: CritiqueConfig,
               labels: dict | None = None, cfg: ServiceConfig | None = None,
               clock=time.monotonic) -> FastAPI:
    cfg = cfg or ServiceConfig()
    labels = labels or {}
    app = FastAPI(title="ipgc critiquing service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    sessions: dict[str, _Session] = {}
    registry_lock = threading.Lock()
    open_counter = {"n": 0}

    kp_label = {k: labels.get(int(kg.keyphrase_ids[k]), str(k))
                for k in range(kg.n_keyphrases)}
    item_label = {v: labels.get(int(kg.item_ids[v]), str(v))
                  for v in range(kg.n_items)}

    # rarer keyphrases first: they say more about an item
    explain_rank = np.lexsort((np.arange(kg.n_keyphrases), kg.keyphrase_degree))
    explain_pos = np.empty(kg.n_keyphrases, dtype=np.int64)
    explain_pos[explain_rank] = np.arange(kg.n_keyphrases)

    def explanations(item: int):
        kps = kg.item_keyphrases(item)
        if len(kps) == 0:
            return []
        ordered = kps[np.argsort(explain_pos[kps])][: cfg.explanations_per_item]
        return [{"id": int(k), "label": kp_label[int(k)]} for k in ordered]

    def exclude_for(user: int):
        return inter.train(user) if inter is not None else ()

    def item_payload(sess: SessionState):
        ranked = rank_items(sess, store, exclude=exclude_for(sess.user), k=cfg.top_k)
        items = [{"item": item, "label": item_label[item], "score": _fmt(sc),
                  "keyphrases": explanations(item)} for item, sc in ranked]
        return items, {i: s for i, s in ranked}

    def get_session(session_id: str) -> _Session:
        with registry_lock:
            sess = sessions.get(session_id)
            now = clock()
            if sess is not None and now - sess.last_access > cfg.session_timeout:
                del sessions[session_id]
                sess = None
            if sess is None:
                raise HTTPException(status_code=404, detail="unknown or expired session")
            sess.last_access = now
            return sess

    @app.post("/sessions")
    def open_session_route(req: OpenSessionRequest):
        if not 0 <= req.user < store.n_users:
            raise HTTPException(status_code=404, detail=f"unknown user {req.user}")
        with registry_lock:
            open_counter["n"] += 1
            seed = np.random.default_rng([cfg.session_seed, open_counter["n"]])
        state = open_session(store, omega, req.user, seed=seed)
        session_id = uuid.uuid4().hex
        now = clock()
        sess = _Session(state=state, created_at=now, last_access=now)
        items, scores = item_payload(state)
        sess.last_scores = scores
        with registry_lock:
            sessions[session_id] = sess
        return {"session_id": session_id, "user": req.user, "round": 0,
                "items": items, "warning": None}

    @app.post("/sessions/{session_id}/critiques")
    def post_critique(session_id: str, req: CritiqueRequest):
        sess = get_session(session_id)
        if not 0 <= req.keyphrase < kg.n_keyphrases:
            raise HTTPException(status_code=400, detail=f"unknown keyphrase {req.keyphrase}")
        if req.eta not in (-1, 1):
            raise HTTPException(status_code=400, detail="eta must be +1 or -1")
        with sess.lock:
            state = sess.state
            u_before = state.u_post.copy()
            report = apply_critique(state, Critique(state.user, req.keyphrase, req.eta),
                                    store, kg, engine_cfg, inter=inter)
            delta_vec = state.u_post - u_before
            items, scores = item_payload(state)
            deltas = {item: float(store.items[item] @ delta_vec) for item in scores}
            items = [dict(entry, score_delta=_fmt(deltas[entry["item"]])) for entry in items]
            sess.last_scores = scores
            warning = "empty_proxy" if report.noop and report.empty_proxy_keyphrases else None
            return {"session_id": session_id, "user": state.user,
                    "round": len(state.history), "items": items, "warning": warning,
                    "mean_abs_score_delta": _fmt(float(np.mean(np.abs(list(deltas.values())))))
                    if deltas else _fmt(0.0)}

    @app.post("/sessions/{session_id}/reset")
    def reset_session(session_id: str):
        sess = get_session(session_id)
        with sess.lock:
            sess.state.reset()
            items, scores = item_payload(sess.state)
            sess.last_scores = scores
            return {"session_id": session_id, "user": sess.state.user, "round": 0,
                    "items": items, "warning": None}

    @app.get("/sessions/{session_id}")
    def session_summary(session_id: str):
        sess = get_session(session_id)
        with sess.lock:
            state = sess.state
            return {"session_id": session_id, "user": state.user,
                    "critiques": [{"keyphrase": c.keyphrase, "eta": c.eta,
                                   "label": kp_label[c.keyphrase]}
                                  for c in state.history],
                    "round": len(state.history),
                    "created_at": sess.created_at,
                    "drift": _fmt(float(np.linalg.norm(state.u_post - state.u_prior)))}

    @app.get("/catalog/keyphrases")
    def keyphrase_lookup(label: str = "", limit: int = 20):
        needle = label.lower()
        out = []
        for k in range(kg.n_keyphrases):
            if needle in kp_label[k].lower():
                out.append({"id": k, "label": kp_label[k],
                            "degree": int(kg.keyphrase_degree[k])})
                if len(out) >= limit:
                    break
        return {"matches": out}

    return app
