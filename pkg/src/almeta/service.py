"""HTTP session API: step live episodes with an external (human or
scripted) labeling oracle.

Serving loads an immutable checkpoint; sessions are isolated and their
operations serialized per session.  Hidden support labels never appear in
any response before their ``label`` call.
"""

from __future__ import annotations

import threading
import uuid

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .baselines import make_policy
from .episodes import RATING_MAX, RATING_MIN, TaskSpec, generate_episode
from .errors import ConfigurationError
from .training import ActiveSession


class CreateSessionRequest(BaseModel):
    task: dict
    seed: int = 0
    human_oracle: bool = False
    policy: str = "active"


class LabelRequest(BaseModel):
    label: float | int


def episode_seed_for(eval_seed: int) -> int:
    """Episode seed derivation shared with batch evaluation, so a scripted
    session reproduces the offline curve for the same seed."""
    return int(np.random.default_rng(eval_seed).integers(2**31))


class _Session:
    def __init__(self, session: ActiveSession, human_oracle: bool):
        self.inner = session
        self.human_oracle = human_oracle
        self.lock = threading.Lock()


def _item_payload(mcfg, item):
    feat = item.features
    if isinstance(feat, np.ndarray):
        feat = feat.tolist()
    return {"id": item.id, "features": feat}


def create_app(store, mcfg, source=None) -> FastAPI:
    app = FastAPI(title="active-learning session service")
    sessions: dict[str, _Session] = {}
    tensors = store.tensors()

    def get_session(sid) -> _Session:
        sess = sessions.get(sid)
        if sess is None:
            raise HTTPException(status_code=404, detail=f"unknown session '{sid}'")
        return sess

    @app.post("/sessions")
    def create_session(req: CreateSessionRequest):
        try:
            spec = TaskSpec.from_dict(req.task)
            if spec.kind != mcfg.task:
                raise ConfigurationError(
                    f"checkpoint is for '{mcfg.task}' tasks, request is '{spec.kind}'"
                )
            if spec.kind == "classification" and spec.n_classes != mcfg.n_classes:
                raise ConfigurationError("task n_classes does not match the checkpoint")
            selection = make_policy(req.policy)
            episode = generate_episode(spec, episode_seed_for(req.seed), source=source)
        except (ConfigurationError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        inner = ActiveSession(tensors, mcfg, episode, selection_fn=selection)
        sid = uuid.uuid4().hex
        sessions[sid] = _Session(inner, req.human_oracle)
        return {
            "session_id": sid,
            "t": 0,
            "budget": inner.budget,
            "task": spec.to_dict(),
            "support": [_item_payload(mcfg, it) for it in episode.support],
            "eval_items": [_item_payload(mcfg, it) for it in episode.eval],
        }

    @app.get("/sessions/{sid}/query")
    def next_query(sid: str):
        sess = get_session(sid)
        with sess.lock:
            if sess.inner.t >= sess.inner.budget:
                return {"status": "budget_exhausted", "t": sess.inner.t, "budget": sess.inner.budget}
            idx = sess.inner.next_query()
            item_id = int(sess.inner.episode.support[idx].id)
            return {"status": "pending", "item_id": item_id, "t": sess.inner.t, "budget": sess.inner.budget}

    @app.post("/sessions/{sid}/label")
    def submit_label(sid: str, req: LabelRequest):
        sess = get_session(sid)
        with sess.lock:
            if sess.inner.pending is None:
                raise HTTPException(status_code=409, detail="no pending query; call /query first")
            err = _validate_label(sess.inner.mcfg, req.label)
            if err:
                raise HTTPException(status_code=422, detail=err)
            idx = sess.inner.pending
            stored = sess.inner.episode.support[idx].label
            if not sess.human_oracle and not _labels_agree(sess.inner.mcfg, req.label, stored):
                raise HTTPException(
                    status_code=422,
                    detail="label disagrees with stored data (stored-label mode)",
                )
            sess.inner.submit_label(_coerce_label(sess.inner.mcfg, req.label))
            item_id = int(sess.inner.episode.support[idx].id)
            return {"t": sess.inner.t, "budget": sess.inner.budget, "item_id": item_id}

    @app.get("/sessions/{sid}/predictions")
    def predictions(sid: str):
        sess = get_session(sid)
        with sess.lock:
            inner = sess.inner
            if not inner.partition.known:
                return {"status": "no_evidence", "t": inner.t}
            slow = inner.slow_predictions()
            fast = inner.fast_pool_predictions()
            return {
                "status": "ok",
                "t": inner.t,
                "slow": slow.tolist(),
                "fast": {
                    str(inner.episode.support[i].id): fast[j].tolist()
                    for j, i in enumerate(inner.partition.unknown)
                },
                "metric": inner.slow_metric(),
            }

    @app.delete("/sessions/{sid}")
    def delete_session(sid: str):
        get_session(sid)
        del sessions[sid]
        return {"deleted": sid}

    return app


def _validate_label(mcfg, label):
    if mcfg.task == "classification":
        if float(label) != int(label) or not (0 <= int(label) < mcfg.n_classes):
            return f"class label must be an integer in [0, {mcfg.n_classes})"
        return None
    v = float(label)
    if not (RATING_MIN <= v <= RATING_MAX) or round(v * 2) != v * 2:
        return "rating must lie on the half-step scale between 0.5 and 5"
    return None


def _coerce_label(mcfg, label):
    return int(label) if mcfg.task == "classification" else float(label)


def _labels_agree(mcfg, submitted, stored):
    if mcfg.task == "classification":
        return int(submitted) == int(stored)
    return abs(float(submitted) - float(stored)) < 1e-9
