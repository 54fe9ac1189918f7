"""Comparison selection policies and the ridge-regression rating baseline.

All policies share the model's predictors, so comparisons isolate the
selection strategy.  A policy is a callable ``(partition, ctx) -> support
index`` compatible with ``unroll`` and ``ActiveSession``; ``ctx`` exposes
embeddings, similarities and fast predictions (see ``_PolicyContext``).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigurationError, MissingScore, PoolExhausted


def _check_pool(partition):
    if not partition.unknown:
        raise PoolExhausted("no unlabeled items to select from")


def select_random(partition, rng):
    """Uniform over the unknown set."""
    _check_pool(partition)
    return int(partition.unknown[rng.integers(len(partition.unknown))])


def select_balanced_oracle(partition, true_labels, rng):
    """Uniform among unknown items of the least-revealed class.

    Uses ground-truth labels; an optimistic harness-side anchor, never
    available to the model.
    """
    _check_pool(partition)
    counts = {}
    for i in partition.known:
        counts[true_labels[i]] = counts.get(true_labels[i], 0) + 1
    candidates = partition.unknown
    least = min(counts.get(true_labels[i], 0) for i in candidates)
    pool = [i for i in candidates if counts.get(true_labels[i], 0) == least]
    return int(pool[rng.integers(len(pool))])


def select_min_max_cos(partition, sim, against_unlabeled=False):
    """Item whose maximum cosine to the reference set is smallest.

    The reference set is the labeled items (the stated intent); before any
    label exists, or with ``against_unlabeled``, the other unlabeled items
    serve as the reference.  Ties break to the lowest index.
    """
    _check_pool(partition)
    unknown = np.asarray(sorted(partition.unknown))
    use_unlabeled = against_unlabeled or not partition.known
    if use_unlabeled:
        if len(unknown) == 1:
            return int(unknown[0])
        s = sim[unknown[:, None], unknown[None, :]].copy()
        np.fill_diagonal(s, -np.inf)
    else:
        known = np.asarray(partition.known)
        s = sim[unknown[:, None], known[None, :]]
    worst = s.max(axis=1)
    return int(unknown[int(np.argmin(worst))])


def select_entropy(partition, fast_output, rng):
    """Sample in proportion to prediction entropy.

    ``fast_output`` is the (predictions, attention) pair for the unknown
    items, or None at t=0 (falls back to uniform).  Classification uses the
    entropy of the predicted class distribution; regression uses the
    entropy of the fast predictor's attention weights, since scalar ratings
    have no distribution of their own.
    """
    _check_pool(partition)
    unknown = list(partition.unknown)
    if fast_output is None:
        return int(unknown[rng.integers(len(unknown))])
    preds, attn = fast_output
    dist = preds if preds.shape[1] > 1 else attn
    ent = -np.sum(dist * np.log(np.maximum(dist, 1e-12)), axis=1)
    total = ent.sum()
    if total <= 0:
        return int(unknown[rng.integers(len(unknown))])
    return int(unknown[rng.choice(len(unknown), p=ent / total)])


def select_popular_entropy(partition, scores):
    """Highest a-priori popularity-times-entropy score; ties to lowest index."""
    _check_pool(partition)
    best, best_score = None, -math.inf
    for i in sorted(partition.unknown):
        if i not in scores:
            raise MissingScore(f"no a-priori score for item {i}")
        if scores[i] > best_score:
            best, best_score = i, scores[i]
    return int(best)


def popular_entropy_scores(ratings_rows):
    """score(m) = log(count(m)) * entropy(rating histogram of m), from training users."""
    by_movie = {}
    for _, m, r in ratings_rows:
        by_movie.setdefault(m, []).append(r)
    scores = {}
    for m, rs in by_movie.items():
        _, counts = np.unique(rs, return_counts=True)
        ps = counts / counts.sum()
        ent = float(-np.sum(ps * np.log(ps)))
        scores[m] = math.log(len(rs)) * ent
    return scores


def save_score_table(path, scores):
    with open(path, "w") as fh:
        fh.write("movieId,score\n")
        for m in sorted(scores):
            fh.write(f"{m},{scores[m]!r}\n")


def load_score_table(path):
    scores = {}
    with open(path) as fh:
        fh.readline()
        for line in fh:
            if line.strip():
                m, s = line.split(",")
                scores[int(m)] = float(s)
    return scores


# -- policy factory ------------------------------------------------------

POLICY_NAMES = ("active", "random", "balanced", "min_max_cos", "entropy", "popular_entropy")


def make_policy(name, scores=None, min_max_against_unlabeled=False):
    """Build a ``(partition, ctx) -> index`` callable for ``unroll``/sessions.

    ``active`` returns None: callers fall through to the learned policy.
    """
    if name == "active":
        return None
    if name == "random":
        return lambda partition, ctx: select_random(partition, ctx.rng)
    if name == "balanced":
        def balanced(partition, ctx):
            if ctx.mcfg.task != "classification":
                raise ConfigurationError("balanced oracle is classification-only")
            labels = [it.label for it in ctx.episode.support]
            return select_balanced_oracle(partition, labels, ctx.rng)

        return balanced
    if name == "min_max_cos":
        return lambda partition, ctx: select_min_max_cos(
            partition, ctx.sim, against_unlabeled=min_max_against_unlabeled
        )
    if name == "entropy":
        return lambda partition, ctx: select_entropy(
            partition, ctx.fast_distributions(partition), ctx.rng
        )
    if name == "popular_entropy":
        if scores is None:
            raise ConfigurationError("popular_entropy needs a precomputed score table")
        return lambda partition, ctx: select_popular_entropy(partition, scores)
    raise ConfigurationError(f"unknown policy '{name}'")


# -- ridge regression baseline ------------------------------------------


def ridge_solve(X, y, lam):
    """Ridge with unpenalized intercept via augmented normal equations."""
    Xa = np.hstack([X, np.ones((len(X), 1))])
    reg = lam * np.eye(Xa.shape[1])
    reg[-1, -1] = 0.0
    w = np.linalg.solve(Xa.T @ Xa + reg, Xa.T @ y)
    return w


def ridge_predict(revealed_X, revealed_y, eval_X, lam):
    w = ridge_solve(np.asarray(revealed_X, dtype=np.float64), np.asarray(revealed_y, dtype=np.float64), lam)
    return np.hstack([eval_X, np.ones((len(eval_X), 1))]) @ w


def tune_ridge_lambdas(episodes, embeddings, T, lam_grid=(0.01, 0.1, 1.0, 10.0, 100.0), rng=None):
    """Per-revealed-count regularization chosen by validation-episode RMSE,
    with ratings revealed in random order."""
    rng = rng or np.random.default_rng(0)
    errors = np.zeros((T, len(lam_grid)))
    for ep in episodes:
        order = rng.permutation(len(ep.support))
        Xs = embeddings[[ep.support[i].features for i in order]]
        ys = np.array([float(ep.support[i].label) for i in order])
        Xe = embeddings[[it.features for it in ep.eval]]
        ye = np.array([float(it.label) for it in ep.eval])
        for t in range(1, T + 1):
            for j, lam in enumerate(lam_grid):
                pred = ridge_predict(Xs[:t], ys[:t], Xe, lam)
                errors[t - 1, j] += float(np.mean((pred - ye) ** 2))
    return [lam_grid[int(np.argmin(errors[t]))] for t in range(T)]


def ridge_baseline_curve(episodes, embeddings, T, lambdas, rng=None):
    """RMSE-vs-labels curve for random-order incremental ridge regression."""
    rng = rng or np.random.default_rng(0)
    rmse = np.zeros((len(episodes), T))
    for e, ep in enumerate(episodes):
        order = rng.permutation(len(ep.support))
        Xs = embeddings[[ep.support[i].features for i in order]]
        ys = np.array([float(ep.support[i].label) for i in order])
        Xe = embeddings[[it.features for it in ep.eval]]
        ye = np.array([float(it.label) for it in ep.eval])
        for t in range(1, T + 1):
            pred = ridge_predict(Xs[:t], ys[:t], Xe, lambdas[t - 1])
            rmse[e, t - 1] = float(np.sqrt(np.mean((pred - ye) ** 2)))
    return rmse


def expected_unique_random(n_classes, per_class, t):
    """Exact expected number of distinct classes after t uniform draws
    without replacement from a pool with ``per_class`` items per class."""
    total = n_classes * per_class
    if t > total:
        raise ConfigurationError("cannot draw more items than the pool holds")
    return n_classes * (1.0 - math.comb(total - per_class, t) / math.comb(total, t))
