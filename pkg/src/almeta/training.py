"""Policy unrolling, advantage estimation, the meta-training loop, and
episode evaluation (including the interactive session used by the service)."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .encoders import encode_context_free, encode_context_sensitive, visitation_order
from .errors import ConfigurationError, ContractViolation, NumericFault
from .model import ModelConfig
from .nn import ParamStore, cosine_matrix, wn_linear
from .optim import AdamState, adam_step
from .policy import SupportPartition, controller_update, initial_control_state, read, select
from .predictors import (
    fast_predict,
    fast_predictions,
    known_label_matrix,
    reward_tensor,
    slow_predict,
)

ORDER_SEED_SALT = 0x5EED


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    gae_gamma: float = 1.0
    gae_lambda: float = 0.95
    value_weight: float = 0.5
    entropy_weight: float = 0.01
    batch_size: int = 16
    max_updates: int = 500
    grad_clip: float = 5.0
    imitation_steps: int = 0
    checkpoint_every: int = 100
    seed: int = 0

    def validate(self):
        if not (0.0 <= self.gae_gamma <= 1.0 and 0.0 <= self.gae_lambda <= 1.0):
            raise ConfigurationError("gae_gamma and gae_lambda must lie in [0, 1]")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        return self


@dataclass
class StepRecord:
    chosen: int
    log_prob: object  # Tensor, None for fixed selection policies
    dist: object
    value: object  # Tensor
    fast_reward: object  # Tensor or None when the pool is exhausted
    entropy: object
    partition: SupportPartition


@dataclass
class Rollout:
    steps: list
    slow_reward: object  # Tensor
    seed: int

    @property
    def T(self):
        return len(self.steps)

    def reward_stream(self):
        """Per-step scalar rewards; the terminal step folds in the slow reward."""
        r = np.array(
            [0.0 if s.fast_reward is None else float(s.fast_reward.data) for s in self.steps]
        )
        r[-1] += float(self.slow_reward.data)
        return r

    def values(self):
        return np.array([float(s.value.data) for s in self.steps])


def _episode_order_seed(episode):
    return (episode.seed ^ ORDER_SEED_SALT) & 0xFFFFFFFF


def encode_episode(episode, mcfg: ModelConfig, p):
    """Context-sensitive support embeddings, eval embeddings, similarity matrix,
    and the initial control state for one episode."""
    sup_feats = [it.features for it in episode.support]
    ev_feats = [it.features for it in episode.eval]
    x_prime = encode_context_free(sup_feats, mcfg, p)
    x_eval = encode_context_free(ev_feats, mcfg, p)
    order = visitation_order(len(episode.support), _episode_order_seed(episode))
    x_ctx, back_final = encode_context_sensitive(x_prime, mcfg, p, order)
    sim = cosine_matrix(x_ctx)
    state = initial_control_state(mcfg, p, back_final)
    return x_ctx, x_eval, sim, state


def _value_estimate(p, h):
    v = wn_linear(h, p["value.v"], p["value.g"], p["value.b"])
    return ad.reshape(v, ())


def _eval_truths(mcfg, episode):
    if mcfg.task == "classification":
        return np.array([int(it.label) for it in episode.eval])
    return np.array([float(it.label) for it in episode.eval])


def _pool_truths(mcfg, episode, unknown):
    if mcfg.task == "classification":
        return np.array([int(episode.support[i].label) for i in unknown])
    return np.array([float(episode.support[i].label) for i in unknown])


def unroll(episode, mcfg: ModelConfig, p, mode, rng, selection_fn=None, actions=None):
    """Run the end-to-end active learning loop for one episode.

    ``mode`` is "sample" or "argmax"; ``actions`` forces the selection
    sequence (used by gradient checks); ``selection_fn(partition, ctx)``
    substitutes a fixed heuristic policy for the learned one.
    """
    T = episode.spec.label_budget
    if T > len(episode.support):
        raise ContractViolation("label budget exceeds the support pool")
    x_ctx, x_eval, sim, state = encode_episode(episode, mcfg, p)
    partition = SupportPartition.fresh(len(episode.support))
    steps = []
    for t in range(T):
        if actions is not None:
            forced = actions[t]
            chosen, dist, log_prob = _forced_select(mcfg, p, partition, x_ctx, sim, state[0], forced, rng)
        elif selection_fn is not None:
            chosen = selection_fn(partition, _PolicyContext(mcfg, episode, x_ctx, sim, p, state, rng))
            dist, log_prob = None, None
        else:
            chosen, dist, log_prob = select(mcfg, p, partition, x_ctx, sim, state[0], mode, rng)
        r_t = read(mcfg, p, x_ctx[np.array([chosen])], episode.support[chosen].label)
        state = controller_update(mcfg, p, state, r_t)
        partition.reveal(chosen)
        if partition.unknown:
            labels_known = known_label_matrix(mcfg, episode, partition.known)
            preds = fast_predictions(mcfg, p, sim, x_ctx, partition, state[0], labels_known)
            fast_r = reward_tensor(mcfg, preds, _pool_truths(mcfg, episode, partition.unknown))
        else:
            fast_r = None
        steps.append(
            StepRecord(
                chosen=chosen,
                log_prob=log_prob,
                dist=dist,
                value=_value_estimate(p, state[0]),
                fast_reward=fast_r,
                entropy=None if dist is None else dist.entropy(),
                partition=partition.snapshot(),
            )
        )
    labels_known = known_label_matrix(mcfg, episode, partition.known)
    x_known = x_ctx[np.asarray(partition.known)]
    y_pred, _ = slow_predict(mcfg, p, x_eval, x_known, labels_known, state[0])
    slow_r = reward_tensor(mcfg, y_pred, _eval_truths(mcfg, episode))
    return Rollout(steps=steps, slow_reward=slow_r, seed=episode.seed)


def _forced_select(mcfg, p, partition, x_ctx, sim, h, forced, rng):
    chosen, dist, _ = select(mcfg, p, partition, x_ctx, sim, h, "argmax", rng)
    pos = dist.unknown.index(forced)
    log_prob = ad.reshape(ad.log(ad.clip_min(dist.probs[np.array([pos])], 1e-12)), ())
    return forced, dist, log_prob


class _PolicyContext:
    """What a heuristic selection policy may look at during unrolling."""

    def __init__(self, mcfg, episode, x_ctx, sim, p, state, rng):
        self.mcfg = mcfg
        self.episode = episode
        self.x_ctx = x_ctx.data
        self.sim = sim.data
        self.rng = rng
        self._p = p
        self._state = state
        self._x_ctx_t = x_ctx
        self._sim_t = sim

    def fast_distributions(self, partition):
        """Fast predictions for the unknown items, or None before any label."""
        if not partition.known:
            return None
        labels_known = known_label_matrix(self.mcfg, self.episode, partition.known)
        with ad.no_grad():
            preds = fast_predictions(
                self.mcfg, self._p, self._sim_t, self._x_ctx_t, partition, self._state[0], labels_known
            )
            attn = fast_predict(self.mcfg, self._p, self._sim_t, self._x_ctx_t, partition, self._state[0])
        return preds.data, attn.data


def compute_gae(rewards, values, gamma, lam):
    """Generalized advantage estimates and value targets.

    The terminal value after the last reward is defined to be zero.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    T = len(rewards)
    adv = np.zeros(T)
    acc = 0.0
    for t in range(T - 1, -1, -1):
        v_next = values[t + 1] if t + 1 < T else 0.0
        delta = rewards[t] + gamma * v_next - values[t]
        acc = delta + gamma * lam * acc
        adv[t] = acc
    return adv, adv + values


def episode_loss(episode, mcfg, tcfg, p, rng, actions=None, advantages=None, value_targets=None, selection_fn=None):
    """Build the full training loss for one episode on the current tape.

    Advantages multiply the score-function terms as constants; passing them
    in (with forced actions) makes the loss a deterministic function of the
    parameters, which the gradient checks rely on.
    """
    ro = unroll(episode, mcfg, p, "sample", rng, selection_fn=selection_fn, actions=actions)
    if advantages is None:
        advantages, value_targets = compute_gae(
            ro.reward_stream(), ro.values(), tcfg.gae_gamma, tcfg.gae_lambda
        )
    loss = ad.Tensor(0.0)
    for t, s in enumerate(ro.steps):
        if s.log_prob is not None:
            loss = loss - s.log_prob * float(advantages[t])
        if s.fast_reward is not None:
            loss = loss - s.fast_reward
        dv = s.value - float(value_targets[t])
        loss = loss + tcfg.value_weight * dv * dv
        if s.entropy is not None:
            loss = loss - tcfg.entropy_weight * s.entropy
    loss = loss - ro.slow_reward
    return loss, ro


def training_step(batch, store: ParamStore, mcfg, tcfg, adam: AdamState, rng, selection_fn=None):
    """One optimizer update from a batch of episodes; returns metrics.

    A non-finite loss or gradient skips the update and flags the incident
    instead of corrupting the parameters.
    """
    if not batch:
        raise ContractViolation("training_step needs a nonempty batch")
    p = store.tensors()
    total = ad.Tensor(0.0)
    slow_rs, fast_rs, ents = [], [], []
    for episode in batch:
        loss, ro = episode_loss(episode, mcfg, tcfg, p, rng, selection_fn=selection_fn)
        total = total + loss
        slow_rs.append(float(ro.slow_reward.data))
        fast_rs.extend(
            float(s.fast_reward.data) for s in ro.steps if s.fast_reward is not None
        )
        ents.extend(float(s.entropy.data) for s in ro.steps if s.entropy is not None)
    total = total * (1.0 / len(batch))
    metrics = {
        "loss": float(total.data),
        "slow_reward": float(np.mean(slow_rs)),
        "fast_reward": float(np.mean(fast_rs)) if fast_rs else 0.0,
        "entropy": float(np.mean(ents)) if ents else 0.0,
        "skipped": False,
    }
    try:
        ad.backward(total)
        grads = ParamStore.grads(p)
        if tcfg.grad_clip:
            _clip_global_norm(grads, tcfg.grad_clip)
        adam.lr = tcfg.learning_rate
        adam_step(store.params, grads, adam)
    except NumericFault:
        metrics["skipped"] = True
    return metrics


def _clip_global_norm(grads, max_norm):
    total = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads.values():
            g *= scale


def imitation_pretrain(store, mcfg, tcfg, spec, oracle_fn, steps, rng, source=None, adam=None):
    """Minimize cross-entropy against an oracle's choices along trajectories
    sampled from the current policy.  Off by default; an interpretation of
    oracle-guided warm-starting rather than a fixed recipe."""
    from .episodes import generate_episode

    if steps <= 0:
        return []
    adam = adam or AdamState(lr=tcfg.learning_rate)
    history = []
    for _ in range(steps):
        episode = generate_episode(spec, int(rng.integers(2**31)), source=source)
        p = store.tensors()
        ro = unroll(episode, mcfg, p, "sample", rng)
        loss = ad.Tensor(0.0)
        for s in ro.steps:
            prior = SupportPartition(
                known=[k for k in s.partition.known if k != s.chosen],
                unknown=sorted(s.partition.unknown + [s.chosen]),
            )
            target = oracle_fn(prior, episode, rng)
            pos = s.dist.unknown.index(target)
            loss = loss - ad.reshape(ad.log(ad.clip_min(s.dist.probs[np.array([pos])], 1e-12)), ())
        try:
            ad.backward(loss)
            grads = ParamStore.grads(p)
            if tcfg.grad_clip:
                _clip_global_norm(grads, tcfg.grad_clip)
            adam.lr = tcfg.learning_rate
            adam_step(store.params, grads, adam)
        except NumericFault:
            continue
        history.append(float(loss.data))
    return history


def train(store, mcfg, tcfg, spec, source=None, metrics_path=None, checkpoint_path=None, progress=None):
    """Full meta-training loop; emits line-delimited metric records."""
    from .checkpoint import save_checkpoint
    from .episodes import generate_episode

    tcfg.validate()
    rng = np.random.default_rng(tcfg.seed)
    adam = AdamState(lr=tcfg.learning_rate)
    records = []
    fh = open(metrics_path, "w") if metrics_path else None
    try:
        if checkpoint_path:
            save_checkpoint(_ckpt_name(checkpoint_path, 0), store, mcfg, adam)
        for update in range(tcfg.max_updates):
            t0 = time.perf_counter()
            batch = [
                generate_episode(spec, int(rng.integers(2**31)), source=source)
                for _ in range(tcfg.batch_size)
            ]
            metrics = training_step(batch, store, mcfg, tcfg, adam, rng)
            rec = {"update": update, **metrics, "wall_time": time.perf_counter() - t0}
            records.append(rec)
            if fh:
                fh.write(json.dumps(rec) + "\n")
                fh.flush()
            if progress:
                progress(rec)
            if checkpoint_path and (update + 1) % tcfg.checkpoint_every == 0:
                save_checkpoint(_ckpt_name(checkpoint_path, update + 1), store, mcfg, adam)
        if checkpoint_path:
            save_checkpoint(checkpoint_path, store, mcfg, adam)
    finally:
        if fh:
            fh.close()
    return records


def _ckpt_name(path, update):
    if path.endswith(".ckpt"):
        return f"{path[:-5]}.{update:06d}.ckpt"
    return f"{path}.{update:06d}"


# -- evaluation ----------------------------------------------------------


class ActiveSession:
    """Step one episode interactively with argmax selection.

    Shared by batch evaluation and the HTTP session service so that a
    scripted oracle reproduces offline curves exactly.  All math runs
    without a tape.
    """

    def __init__(self, store, mcfg, episode, selection_fn=None, ablate=None):
        self.mcfg = mcfg
        self.episode = episode
        self.ablate = ablate or {}
        self._p = store.tensors() if isinstance(store, ParamStore) else store
        with ad.no_grad():
            self.x_ctx, self.x_eval, self.sim, self.state = encode_episode(episode, mcfg, self._p)
            if self.ablate.get("no_ctx"):
                sup_feats = [it.features for it in episode.support]
                self.x_ctx = encode_context_free(sup_feats, mcfg, self._p)
                self.sim = cosine_matrix(self.x_ctx)
        self.partition = SupportPartition.fresh(len(episode.support))
        self.selection_fn = selection_fn
        self.pending = None
        self.t = 0
        self._rng = np.random.default_rng(episode.seed ^ 0xA11CE)

    @property
    def budget(self):
        return self.episode.spec.label_budget

    def next_query(self):
        """Item the policy wants labeled next; idempotent until answered."""
        if self.t >= self.budget:
            return None
        if self.pending is None:
            with ad.no_grad():
                if self.selection_fn is not None:
                    ctx = _PolicyContext(
                        self.mcfg, self.episode, self.x_ctx, self.sim, self._p, self.state, self._rng
                    )
                    self.pending = self.selection_fn(self.partition, ctx)
                else:
                    chosen, _, _ = select(
                        self.mcfg, self._p, self.partition, self.x_ctx, self.sim, self.state[0], "argmax", self._rng
                    )
                    self.pending = chosen
        return self.pending

    def submit_label(self, label=None):
        """Reveal the pending item's label (stored truth unless overridden)."""
        if self.pending is None:
            raise ContractViolation("no pending query to answer")
        idx = self.pending
        if label is None:
            label = self.episode.support[idx].label
        self.episode.support[idx].label = label
        with ad.no_grad():
            r_t = read(self.mcfg, self._p, self.x_ctx[np.array([idx])], label)
            self.state = controller_update(self.mcfg, self._p, self.state, r_t)
        self.partition.reveal(idx)
        self.pending = None
        self.t += 1
        return idx

    def slow_predictions(self):
        """Held-out predictions: (n_eval, N) class distributions or (n_eval,) ratings."""
        labels_known = known_label_matrix(self.mcfg, self.episode, self.partition.known)
        x_known = self.x_ctx[np.asarray(self.partition.known)]
        with ad.no_grad():
            y, _ = slow_predict(
                self.mcfg, self._p, self.x_eval, x_known, labels_known, self.state[0],
                steps=self.ablate.get("match_steps"),
            )
        out = np.asarray(y.data, dtype=np.float64)
        return out if self.mcfg.task == "classification" else out.reshape(-1)

    def fast_pool_predictions(self):
        """Predictions for the remaining unlabeled pool items."""
        if not self.partition.unknown:
            return np.zeros((0, self.mcfg.label_dim))
        labels_known = known_label_matrix(self.mcfg, self.episode, self.partition.known)
        with ad.no_grad():
            attn = fast_predict(
                self.mcfg, self._p, self.sim, self.x_ctx, self.partition, self.state[0]
            )
            if self.ablate.get("gamma_one"):
                unknown = np.asarray(self.partition.unknown)
                known = np.asarray(self.partition.known)
                s_uk = self.sim.data[unknown[:, None], known[None, :]]
                e = np.exp(s_uk - s_uk.max(axis=1, keepdims=True))
                attn_data = e / e.sum(axis=1, keepdims=True)
            else:
                attn_data = attn.data
        return np.asarray(attn_data @ labels_known, dtype=np.float64)

    def slow_metric(self):
        preds = self.slow_predictions()
        truths = _eval_truths(self.mcfg, self.episode)
        if self.mcfg.task == "classification":
            return float(np.mean(np.argmax(preds, axis=1) == truths))
        return float(np.sqrt(np.mean((preds - truths) ** 2)))

    def fast_metric(self):
        if not self.partition.unknown:
            return None
        preds = self.fast_pool_predictions()
        truths = _pool_truths(self.mcfg, self.episode, self.partition.unknown)
        if self.mcfg.task == "classification":
            return float(np.mean(np.argmax(preds, axis=1) == truths))
        return float(np.sqrt(np.mean((preds.reshape(-1) - truths) ** 2)))

    def unique_labels(self):
        return len({self.episode.support[i].label for i in self.partition.known})


def evaluate(store, mcfg, spec, n_episodes, seed, selection_fn=None, source=None, ablate=None):
    """Anytime metric curves over freshly sampled episodes.

    Returns per-step means (and standard errors) of the slow metric on the
    held-out set, the fast metric on the remaining pool, and the number of
    unique labels queried.
    """
    from .episodes import generate_episode

    if n_episodes < 1:
        raise ContractViolation("evaluate needs at least one episode")
    rng = np.random.default_rng(seed)
    T = spec.label_budget
    slow = np.zeros((n_episodes, T))
    fast = np.full((n_episodes, T), np.nan)
    uniq = np.zeros((n_episodes, T))
    p = store.tensors() if isinstance(store, ParamStore) else store
    for e in range(n_episodes):
        episode = generate_episode(spec, int(rng.integers(2**31)), source=source)
        sess = ActiveSession(p, mcfg, episode, selection_fn=selection_fn, ablate=ablate)
        for t in range(T):
            sess.next_query()
            sess.submit_label()
            slow[e, t] = sess.slow_metric()
            fm = sess.fast_metric()
            if fm is not None:
                fast[e, t] = fm
            uniq[e, t] = sess.unique_labels()
    return {
        "slow": slow,
        "fast": fast,
        "unique": uniq,
        "slow_mean": slow.mean(axis=0),
        "slow_stderr": slow.std(axis=0) / math.sqrt(n_episodes),
        "fast_mean": np.nanmean(fast, axis=0),
        "unique_mean": uniq.mean(axis=0),
    }
