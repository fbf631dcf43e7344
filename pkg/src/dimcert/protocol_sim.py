"""Round-by-round simulation of the randomness generation protocol.

Rounds are split into groups of geometric size.  The first round of every
group estimates the security parameter with an input drawn from all of X;
the remaining rounds of the group reuse one input drawn from X'.
"""

from __future__ import annotations

import csv
import dataclasses

import numpy as np

from .ingest import CountsTable
from .scenario import GenerationSet, Scenario
from .strategy import Strategy, behavior_of

ESTIMATION, GENERATION = 0, 1
ROLE_NAMES = ("estimation", "generation")


@dataclasses.dataclass(frozen=True)
class ProtocolConfig:
    rounds: int
    xprime: GenerationSet
    mean_group: float = 2.0
    visibility: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if int(self.rounds) != self.rounds or self.rounds < 1:
            raise ValueError("rounds must be a positive integer")
        if not self.mean_group >= 2:
            raise ValueError("mean group size must be at least 2")
        if not 0.0 <= self.visibility <= 1.0:
            raise ValueError("visibility must lie in [0, 1]")


@dataclasses.dataclass(frozen=True, eq=False)
class RoundLog:
    """Column arrays, one entry per round."""

    group: np.ndarray
    role: np.ndarray
    z: np.ndarray
    y: np.ndarray
    b: np.ndarray

    def __len__(self):
        return self.group.size

    def write_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["group", "role", "z", "y", "b"])
            for g, r, z, y, b in zip(self.group, self.role, self.z, self.y, self.b):
                w.writerow([g, ROLE_NAMES[r], z, y, b])


def noisy_strategy(ideal: Strategy, v: float) -> Strategy:
    """Depolarize every state: ``v rho + (1 - v) I / d``."""
    if not 0.0 <= v <= 1.0:
        raise ValueError("visibility must lie in [0, 1]")
    d = ideal.dim
    states = v * ideal.states + (1 - v) * np.eye(d)[None] / d
    return ideal.with_states(states)


def _group_sizes(n, mean, rng):
    chunks, total = [], 0
    while total < n:
        g = rng.geometric(1.0 / mean, size=int(n / mean) + 16)
        chunks.append(g)
        total += int(g.sum())
    sizes = np.concatenate(chunks)
    c = np.cumsum(sizes)
    k = int(np.searchsorted(c, n))
    sizes = sizes[: k + 1].copy()
    sizes[-1] -= c[k] - n
    return sizes


def simulate_rounds(cfg: ProtocolConfig, st: Strategy, s: Scenario) -> tuple[CountsTable, RoundLog]:
    """Run ``cfg.rounds`` rounds with the strategy depolarized to ``cfg.visibility``.

    Returns the counts of the estimation rounds and the full round log.
    """
    rng = np.random.default_rng(np.random.SeedSequence(int(cfg.seed) & 0xFFFFFFFFFFFFFFFF))
    xs = np.array(cfg.xprime.flat(s))
    p = behavior_of(noisy_strategy(st, cfg.visibility) if cfg.visibility < 1 else st)
    p = np.clip(p, 0.0, None)
    p /= p.sum(axis=0, keepdims=True)

    sizes = _group_sizes(cfg.rounds, cfg.mean_group, rng)
    n_groups = sizes.size
    group = np.repeat(np.arange(n_groups), sizes)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    role = np.full(cfg.rounds, GENERATION, dtype=np.int8)
    role[starts] = ESTIMATION
    est_x = rng.integers(0, s.n_x, size=n_groups)
    gen_x = xs[rng.integers(0, xs.size, size=n_groups)]
    x = gen_x[group]
    x[starts] = est_x

    cdf = np.cumsum(p, axis=0)
    u = rng.random(cfg.rounds)
    b = (u[None, :] > cdf[:, x]).sum(axis=0)
    b = np.minimum(b, s.n_out - 1)

    z, y = np.divmod(x, s.n_meas)
    est = role == ESTIMATION
    counts = np.zeros((s.n_prep, s.n_meas, s.n_out), dtype=np.int64)
    np.add.at(counts, (z[est], y[est], b[est]), 1)
    log = RoundLog(group, role, z, y, b)
    return CountsTable(s.dim, counts), log
