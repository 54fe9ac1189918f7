"""Episode construction: task specs, synthetic generators, dataset loaders,
and latent-factor pretraining for ratings embeddings."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigurationError, GenerationError, TrainingFault

RATING_MIN = 0.5
RATING_MAX = 5.0


@dataclass
class Item:
    id: int
    features: object  # dense vector, image array, or categorical id
    label: object  # class index or rating; stored even while hidden


@dataclass
class TaskSpec:
    kind: str = "classification"  # or "regression"
    n_classes: int = 5
    support_per_class: int = 5
    eval_per_class: int = 1
    support_size: int = 50  # regression tasks
    eval_size: int = 10
    label_budget: int = 5
    feature_dim: int = 16
    cluster_spread: float = 0.2
    latent_rank: int = 4
    noise: float = 0.3
    n_movies: int = 200
    source: str = "synthetic"  # or "dataset"
    seed: int = 0

    @property
    def n_support(self):
        if self.kind == "classification":
            return self.n_classes * self.support_per_class
        return self.support_size

    @property
    def n_eval(self):
        if self.kind == "classification":
            return self.n_classes * self.eval_per_class
        return self.eval_size

    def validate(self):
        if self.kind not in ("classification", "regression"):
            raise ConfigurationError(f"unknown task kind '{self.kind}'")
        if self.label_budget > self.n_support:
            raise ConfigurationError("label budget exceeds support size")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d).validate()


@dataclass
class Episode:
    support: list
    eval: list
    spec: TaskSpec
    seed: int

    def __post_init__(self):
        sup = {it.id for it in self.support}
        ev = {it.id for it in self.eval}
        assert not (sup & ev), "support and eval sets overlap"


def quantize_rating(r):
    """Snap to the nearest 0.5 step (ties round up), clipped to [0.5, 5]."""
    q = np.floor(2.0 * np.asarray(r, dtype=np.float64) + 0.5) / 2.0
    return float(np.clip(q, RATING_MIN, RATING_MAX))


# -- classification ------------------------------------------------------


def gen_classification_episode(spec: TaskSpec, seed: int, store=None) -> Episode:
    """Sample a fresh N-way episode; cluster centers are re-drawn per episode."""
    spec.validate()
    if spec.kind != "classification":
        raise ConfigurationError("gen_classification_episode needs a classification spec")
    rng = np.random.default_rng(seed)
    if spec.source == "synthetic":
        return _gen_synth_classes(spec, seed, rng)
    return _gen_dataset_classes(spec, seed, rng, store)


def _gen_synth_classes(spec, seed, rng):
    centers = rng.normal(size=(spec.n_classes, spec.feature_dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    labels = rng.permutation(spec.n_classes)
    support, evals, next_id = [], [], 0
    for c in range(spec.n_classes):
        for kind, count in (("s", spec.support_per_class), ("e", spec.eval_per_class)):
            for _ in range(count):
                x = centers[c] + rng.normal(0.0, spec.cluster_spread, size=spec.feature_dim)
                it = Item(id=next_id, features=x, label=int(labels[c]))
                (support if kind == "s" else evals).append(it)
                next_id += 1
    rng.shuffle(support)
    return Episode(support=support, eval=evals, spec=spec, seed=seed)


def _gen_dataset_classes(spec, seed, rng, store):
    if not store:
        raise GenerationError("dataset mode needs a loaded item store")
    names = sorted(store)
    if len(names) < spec.n_classes:
        raise GenerationError("not enough classes in dataset")
    picked = rng.choice(len(names), size=spec.n_classes, replace=False)
    labels = rng.permutation(spec.n_classes)
    need = spec.support_per_class + spec.eval_per_class
    support, evals, next_id = [], [], 0
    for slot, ci in enumerate(picked):
        pool = store[names[ci]]
        if len(pool) < need:
            raise GenerationError(f"class '{names[ci]}' has {len(pool)} items, need {need}")
        idx = rng.choice(len(pool), size=need, replace=False)
        for j, k in enumerate(idx):
            it = Item(id=next_id, features=pool[k], label=int(labels[slot]))
            (support if j < spec.support_per_class else evals).append(it)
            next_id += 1
    rng.shuffle(support)
    return Episode(support=support, eval=evals, spec=spec, seed=seed)


# -- ratings -------------------------------------------------------------


@dataclass
class SyntheticRatingsWorld:
    """Fixed movie factors; each episode draws a fresh latent user."""

    item_factors: np.ndarray  # (n_movies, rank)
    item_bias: np.ndarray
    global_bias: float
    noise: float

    @classmethod
    def create(cls, spec: TaskSpec, seed: int):
        rng = np.random.default_rng(seed)
        return cls(
            item_factors=rng.normal(0.0, 0.5, size=(spec.n_movies, spec.latent_rank)),
            item_bias=rng.normal(0.0, 0.3, size=spec.n_movies),
            global_bias=3.0,
            noise=spec.noise,
        )

    def user_ratings(self, user_vec, movie_ids, rng):
        raw = (
            self.item_factors[movie_ids] @ user_vec
            + self.item_bias[movie_ids]
            + self.global_bias
            + rng.normal(0.0, self.noise, size=len(movie_ids))
        )
        return [quantize_rating(r) for r in raw]

    def ratings_table(self, n_users, ratings_per_user, seed):
        """Synthetic training table (user, movie, rating) for embedding pretraining."""
        rng = np.random.default_rng(seed)
        rows = []
        n_movies = len(self.item_factors)
        for u in range(n_users):
            uvec = rng.normal(size=self.item_factors.shape[1])
            movies = rng.choice(n_movies, size=min(ratings_per_user, n_movies), replace=False)
            for m, r in zip(movies, self.user_ratings(uvec, movies, rng)):
                rows.append((u, int(m), r))
        return rows


def gen_ratings_episode(spec: TaskSpec, source, seed: int) -> Episode:
    """Rating-elicitation episode: support movies that can be queried plus a
    disjoint held-out set, labels on the half-step scale."""
    spec.validate()
    if spec.kind != "regression":
        raise ConfigurationError("gen_ratings_episode needs a regression spec")
    rng = np.random.default_rng(seed)
    need = spec.support_size + spec.eval_size
    if isinstance(source, SyntheticRatingsWorld):
        if spec.n_movies < need:
            raise GenerationError("not enough movies for disjoint support/eval")
        movies = rng.choice(spec.n_movies, size=need, replace=False)
        user_vec = rng.normal(size=source.item_factors.shape[1])
        ratings = source.user_ratings(user_vec, movies, rng)
    else:
        # source: dict user -> list[(movie_id, rating)]
        eligible = sorted(u for u, rs in source.items() if len(rs) >= need)
        if not eligible:
            raise GenerationError(f"no user with >= {need} ratings")
        user = eligible[rng.integers(len(eligible))]
        idx = rng.choice(len(source[user]), size=need, replace=False)
        movies = [source[user][i][0] for i in idx]
        ratings = [source[user][i][1] for i in idx]
    support = [
        Item(id=int(m), features=int(m), label=float(r))
        for m, r in zip(movies[: spec.support_size], ratings[: spec.support_size])
    ]
    evals = [
        Item(id=int(m), features=int(m), label=float(r))
        for m, r in zip(movies[spec.support_size :], ratings[spec.support_size :])
    ]
    return Episode(support=support, eval=evals, spec=spec, seed=seed)


# -- latent-factor pretraining ------------------------------------------


@dataclass
class FactorModel:
    user_vecs: np.ndarray
    item_vecs: np.ndarray
    user_bias: np.ndarray
    item_bias: np.ndarray
    global_bias: float
    user_index: dict
    item_index: dict
    mse_history: list = field(default_factory=list)

    def predict(self, user, movie):
        u = self.user_index[user]
        m = self.item_index[movie]
        return (
            self.user_vecs[u] @ self.item_vecs[m]
            + self.user_bias[u]
            + self.item_bias[m]
            + self.global_bias
        )

    def embedding_table(self, vocab_size):
        """Movie-id -> factor-vector table for the lookup encoder."""
        rank = self.item_vecs.shape[1]
        table = np.zeros((vocab_size, rank))
        for movie, idx in self.item_index.items():
            if 0 <= movie < vocab_size:
                table[movie] = self.item_vecs[idx]
        return table


def factorize_ratings(
    table,
    rank,
    epochs=30,
    lr=0.02,
    l2=0.02,
    seed=0,
) -> FactorModel:
    """SGD on squared error of ``x_u . x_m + b_u + b_m + beta`` with L2 shrinkage."""
    rows = list(table)
    if not rows:
        raise GenerationError("empty ratings table")
    users = sorted({u for u, _, _ in rows})
    movies = sorted({m for _, m, _ in rows})
    uix = {u: i for i, u in enumerate(users)}
    mix = {m: i for i, m in enumerate(movies)}
    rng = np.random.default_rng(seed)
    scale = 0.1 if rank else 0.0
    P = rng.normal(0.0, scale, size=(len(users), max(rank, 1)))
    Q = rng.normal(0.0, scale, size=(len(movies), max(rank, 1)))
    if rank == 0:
        P[:] = 0.0
        Q[:] = 0.0
    bu = np.zeros(len(users))
    bm = np.zeros(len(movies))
    beta = float(np.mean([r for _, _, r in rows]))
    data = np.array([(uix[u], mix[m], r) for u, m, r in rows])
    history = []
    for _ in range(epochs):
        order = rng.permutation(len(data))
        for k in order:
            u, m, r = int(data[k, 0]), int(data[k, 1]), data[k, 2]
            err = r - (P[u] @ Q[m] + bu[u] + bm[m] + beta)
            if rank:
                pu = P[u].copy()
                P[u] += lr * (err * Q[m] - l2 * P[u])
                Q[m] += lr * (err * pu - l2 * Q[m])
            bu[u] += lr * (err - l2 * bu[u])
            bm[m] += lr * (err - l2 * bm[m])
            beta += lr * 0.1 * err
        pred = (
            np.einsum("ij,ij->i", P[data[:, 0].astype(int)], Q[data[:, 1].astype(int)])
            + bu[data[:, 0].astype(int)]
            + bm[data[:, 1].astype(int)]
            + beta
        )
        mse = float(np.mean((data[:, 2] - pred) ** 2))
        if not np.isfinite(mse):
            raise TrainingFault("factorization diverged (MSE is NaN); lower the step size")
        history.append(mse)
    return FactorModel(
        user_vecs=P[:, :rank] if rank else P[:, :0],
        item_vecs=Q[:, :rank] if rank else Q[:, :0],
        user_bias=bu,
        item_bias=bm,
        global_bias=beta,
        user_index=uix,
        item_index=mix,
        mse_history=history,
    )


# -- dataset loading -----------------------------------------------------


def load_dataset(path, fmt, top_movies=None, top_users=None):
    """Load an on-disk dataset.

    ``image_classes``: directory of class directories of grayscale images,
    pixel values scaled to [0, 1].  ``ratings_csv``: header line then
    ``userId,movieId,rating,timestamp`` rows, optionally filtered to the
    most-rated movies/users.
    """
    if fmt == "image_classes":
        return _load_image_classes(path)
    if fmt == "ratings_csv":
        return load_ratings_csv(path, top_movies, top_users)
    raise ConfigurationError(f"unknown dataset format '{fmt}'")


def _load_image_classes(path):
    from PIL import Image

    store = {}
    if not os.path.isdir(path):
        raise GenerationError(f"dataset directory not found: {path}")
    for cls in sorted(os.listdir(path)):
        cdir = os.path.join(path, cls)
        if not os.path.isdir(cdir):
            continue
        imgs = []
        for name in sorted(os.listdir(cdir)):
            with Image.open(os.path.join(cdir, name)) as im:
                imgs.append(np.asarray(im.convert("L"), dtype=np.float64) / 255.0)
        if imgs:
            store[cls] = imgs
    if not store:
        raise GenerationError(f"no classes found under {path}")
    return store


def load_ratings_csv(path, top_movies=None, top_users=None):
    """Parse ratings rows, then keep only the most-rated movies/users."""
    rows = []
    with open(path) as fh:
        header = fh.readline()
        if not header.strip():
            raise GenerationError(f"{path}: empty file")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                rows.append((int(parts[0]), int(parts[1]), float(parts[2])))
            except (ValueError, IndexError) as exc:
                raise GenerationError(f"{path}:{lineno}: bad ratings row: {line!r}") from exc
    if not rows:
        raise GenerationError(f"{path}: no ratings rows")
    rows = _filter_top(rows, key=1, top=top_movies)
    rows = _filter_top(rows, key=0, top=top_users)
    return rows


def _filter_top(rows, key, top):
    if top is None:
        return rows
    counts = {}
    for row in rows:
        counts[row[key]] = counts.get(row[key], 0) + 1
    keep = set(sorted(counts, key=lambda k: (-counts[k], k))[:top])
    return [row for row in rows if row[key] in keep]


def ratings_by_user(rows):
    by_user = {}
    for u, m, r in rows:
        by_user.setdefault(u, []).append((m, r))
    return by_user


# -- embedding table import/export --------------------------------------


def save_embedding_table(path, table):
    with open(path, "w") as fh:
        dim = table.shape[1]
        fh.write("id," + ",".join(f"v{i+1}" for i in range(dim)) + "\n")
        for i, row in enumerate(table):
            fh.write(f"{i}," + ",".join(repr(float(v)) for v in row) + "\n")


def load_embedding_table(path):
    """Read an ``id, v1..vd`` table; every row must agree on d."""
    ids, vecs, dim = [], [], None
    with open(path) as fh:
        fh.readline()  # header
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            row = [float(x) for x in parts[1:]]
            if dim is None:
                dim = len(row)
            elif len(row) != dim:
                raise GenerationError(f"{path}:{lineno}: inconsistent embedding width")
            ids.append(int(parts[0]))
            vecs.append(row)
    if not ids:
        raise GenerationError(f"{path}: no embedding rows")
    table = np.zeros((max(ids) + 1, dim))
    for i, v in zip(ids, vecs):
        table[i] = v
    return table


# -- episode replay dumps ------------------------------------------------


def dump_episodes(path, episodes):
    """One JSON record per line: spec, item ids, hidden labels, features."""
    with open(path, "w") as fh:
        for ep in episodes:
            fh.write(json.dumps(_episode_record(ep)) + "\n")


def _episode_record(ep):
    def items(lst):
        return [
            {
                "id": it.id,
                "label": it.label,
                "features": (
                    np.asarray(it.features).tolist()
                    if isinstance(it.features, np.ndarray)
                    else it.features
                ),
            }
            for it in lst
        ]

    return {"spec": ep.spec.to_dict(), "seed": ep.seed, "support": items(ep.support), "eval": items(ep.eval)}


def load_episodes(path):
    out = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            spec = TaskSpec.from_dict(rec["spec"])

            def items(lst):
                return [
                    Item(
                        id=r["id"],
                        features=(
                            np.asarray(r["features"], dtype=np.float64)
                            if isinstance(r["features"], list)
                            else r["features"]
                        ),
                        label=r["label"],
                    )
                    for r in lst
                ]

            out.append(Episode(support=items(rec["support"]), eval=items(rec["eval"]), spec=spec, seed=rec["seed"]))
    return out


def generate_episode(spec: TaskSpec, seed: int, source=None) -> Episode:
    """Dispatch on task kind; ``source`` is a dataset store or ratings world."""
    if spec.kind == "classification":
        return gen_classification_episode(spec, seed, store=source)
    if isinstance(source, SyntheticRatingsWorld) or isinstance(source, dict):
        return gen_ratings_episode(spec, source, seed)
    # synthetic ratings world derived deterministically from the task seed
    world = SyntheticRatingsWorld.create(spec, spec.seed)
    return gen_ratings_episode(spec, world, seed)
