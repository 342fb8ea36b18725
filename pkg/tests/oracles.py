"""Independent oracles and generators shared by the unit and acceptance suites."""

import random

import mpmath
import numpy as np

from layertune.freeze import apply_freeze_plan, make_freeze_plan, plan_from_model
from layertune.losses import EPSILON
from layertune.registry import introspect


def mp_loss(labels, probs, weights):
    """Arbitrary-precision weighted cross-entropy computed row by row."""
    mpmath.mp.dps = 40
    total = mpmath.mpf(0)
    for y, row in zip(labels, probs):
        p = max(min(mpmath.mpf(float(row[y])), mpmath.mpf(1)), mpmath.mpf(EPSILON))
        total += mpmath.mpf(float(weights[y])) * -mpmath.log(p)
    return total / len(labels)


def random_batch(rng, n):
    probs = rng.dirichlet(np.full(3, rng.uniform(0.05, 3.0)), size=n)
    labels = rng.integers(0, 3, size=n)
    # push some true-class probabilities onto and around the clipping boundary
    for i in rng.choice(n, size=max(1, n // 4), replace=False):
        tiny = rng.choice([0.0, EPSILON / 10, EPSILON, EPSILON * 10])
        row = np.full(3, (1 - tiny) / 2)
        row[labels[i]] = tiny
        probs[i] = row
    return labels, probs


def worst_relative_loss_error(wcce, batches=1000, seed=2024):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(batches):
        labels, probs = random_batch(rng, int(rng.integers(1, 20)))
        weights = rng.uniform(0.1, 6.0, size=3)
        got = wcce(np.eye(3)[labels], probs, weights)
        want = mp_loss(labels, probs, weights)
        worst = max(worst, float(abs(got - want) / want) if want else abs(got))
    return worst


def layer_pool(size=40):
    """Pre-built 4 -> 4 layers reused across many small functional models."""
    import keras

    L = keras.layers
    pool = []
    for i in range(size):
        kind = i % 4
        if kind == 0:
            layer = L.Dense(4, name=f"dense_{i}")
        elif kind == 1:
            layer = L.Dense(4, use_bias=False, name=f"nobias_{i}")
        elif kind == 2:
            layer = L.BatchNormalization(name=f"bn_{i}")
        else:
            layer = L.Activation("relu", name=f"act_{i}")
        layer.build((None, 4))
        pool.append(layer)
    head = L.Dense(3, activation="softmax", name="pool_head")
    head.build((None, 4))
    return pool, head


def pool_model(pool, head, rng):
    import keras

    x = inp = keras.Input((4,))
    for layer in rng.sample(pool, rng.randint(1, 12)):
        x = layer(x)
    return keras.Model(inp, head(x))


def round_trip_failures(pool, head, n, seed=0):
    """Apply a random plan to ``n`` random models; count mismatches on read-back."""
    rng = random.Random(seed)
    failures = 0
    for _ in range(n):
        model = pool_model(pool, head, rng)
        ir = introspect(model)
        plan = make_freeze_plan(ir, rng.randint(0, len(ir.layers)))
        apply_freeze_plan(model, plan)
        if plan_from_model(model) != set(plan.trainable_indices) or not introspect(model).head.trainable:
            failures += 1
    return failures
