"""Emit the contract-test fixture as JSON on stdout.

Builds (and caches) an untrained checkpoint for a 5-way classification
task, then computes the stored oracle labels and the offline evaluation
curve for the test seed, so the scripted UI session can be checked against
the batch harness exactly.
"""

import json
import pathlib
import sys

import numpy as np

from almeta.checkpoint import load_checkpoint, save_checkpoint
from almeta.episodes import TaskSpec, generate_episode
from almeta.model import ModelConfig, init_params
from almeta.service import episode_seed_for
from almeta.training import evaluate

SEED = 7
TASK = dict(
    kind="classification",
    n_classes=5,
    support_per_class=2,
    eval_per_class=1,
    label_budget=5,
    feature_dim=16,
)

cache = pathlib.Path(__file__).parent / ".cache"
cache.mkdir(exist_ok=True)
ckpt = cache / "ui.ckpt"

spec = TaskSpec.from_dict(TASK).validate()
mcfg = ModelConfig(
    task="classification",
    n_classes=5,
    encoder="mlp",
    input_dim=16,
    embed_dim=16,
    hidden_dim=16,
    match_hidden=16,
).validate()
if ckpt.exists():
    store, mcfg, _, _ = load_checkpoint(str(ckpt))
else:
    store = init_params(mcfg, np.random.default_rng(3))
    save_checkpoint(str(ckpt), store, mcfg)

episode = generate_episode(spec, episode_seed_for(SEED))
out = evaluate(store, mcfg, spec, 1, SEED)

json.dump(
    {
        "ckpt": str(ckpt),
        "seed": SEED,
        "task": TASK,
        "labels": {str(it.id): int(it.label) for it in episode.support},
        "curve": np.asarray(out["slow"][0]).tolist(),
    },
    sys.stdout,
)
