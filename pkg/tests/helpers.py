"""Oracles shared by several test modules."""

import itertools

import numpy as np


def rel_err(a, b):
    """Norm-wise relative difference of two flattened gradients."""
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def ctc_brute_force(logp, targets, blank):
    """-log of the summed probability of every frame labelling that collapses to ``targets``."""
    n_frames, n_sym = logp.shape
    total = 0.0
    for path in itertools.product(range(n_sym), repeat=n_frames):
        collapsed = []
        prev = None
        for s in path:
            if s != prev and s != blank:
                collapsed.append(s)
            prev = s
        if collapsed == list(targets):
            total += np.exp(sum(logp[t, s] for t, s in enumerate(path)))
    return -np.log(total)


class Recorder:
    """Learner double that logs everything it is shown."""

    name = "recorder"

    def __init__(self, theta0):
        self.theta = theta0
        self.seen = []

    @property
    def params(self):
        return self.theta

    def step(self, batch):
        self.seen.append(batch)
