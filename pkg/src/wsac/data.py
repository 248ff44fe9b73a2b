"""Offline datasets drawn i.i.d. from a behavior occupancy, and behavior cloning.

Sampling uses numpy's Philox4x64-10 counter-based generator, so a
(cmdp, policy, n, seed) tuple reproduces the same dataset on any platform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .cmdp import Cmdp, ConfigurationError, Policy, occupancy


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


class Transition(NamedTuple):
    s: int
    a: int
    r: float
    c: float
    s_next: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """Columnar store of N transitions plus (s,a) counts."""

    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    c: np.ndarray
    s_next: np.ndarray
    n_states: int
    n_actions: int
    gamma: float
    source_seed: int = 0

    def __post_init__(self):
        cols = {}
        for name, dtype in (("s", np.int64), ("a", np.int64), ("r", float), ("c", float), ("s_next", np.int64)):
            arr = np.array(getattr(self, name), dtype=dtype).ravel()
            arr.setflags(write=False)
            cols[name] = arr
            object.__setattr__(self, name, arr)
        n = cols["s"].size
        if n < 1:
            raise ConfigurationError("dataset must contain at least one transition")
        if any(v.size != n for v in cols.values()):
            raise ConfigurationError("transition columns have different lengths")
        S, A = self.n_states, self.n_actions
        if cols["s"].min() < 0 or cols["s"].max() >= S or cols["s_next"].min() < 0 or cols["s_next"].max() >= S:
            raise ConfigurationError("state index out of range")
        if cols["a"].min() < 0 or cols["a"].max() >= A:
            raise ConfigurationError("action index out of range")
        if np.any(cols["r"] < 0) or np.any(cols["r"] > 1) or np.any(np.abs(cols["c"]) > 1):
            raise ConfigurationError("reward must lie in [0,1] and cost in [-1,1]")

    @property
    def n(self) -> int:
        return self.s.size

    @property
    def counts(self) -> np.ndarray:
        out = np.zeros((self.n_states, self.n_actions), dtype=np.int64)
        np.add.at(out, (self.s, self.a), 1)
        return out

    def __len__(self) -> int:
        return self.n

    def __iter__(self) -> Iterator[Transition]:
        for i in range(self.n):
            yield Transition(int(self.s[i]), int(self.a[i]), float(self.r[i]), float(self.c[i]), int(self.s_next[i]))

    @classmethod
    def from_transitions(cls, transitions, n_states: int, n_actions: int, gamma: float, source_seed: int = 0) -> "Dataset":
        rows = [tuple(t) for t in transitions]
        if not rows:
            raise ConfigurationError("dataset must contain at least one transition")
        s, a, r, c, sn = zip(*rows)
        return cls(s, a, r, c, sn, n_states, n_actions, gamma, source_seed)

    def save_jsonl(self, path) -> None:
        header = {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "gamma": self.gamma,
            "seed": self.source_seed,
            "n": self.n,
        }
        lines = [json.dumps(header)]
        for t in self:
            lines.append(json.dumps({"s": t.s, "a": t.a, "r": t.r, "c": t.c, "sn": t.s_next}))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load_jsonl(cls, path) -> "Dataset":
        with open(path) as fh:
            header = json.loads(fh.readline())
            recs = [json.loads(line) for line in fh if line.strip()]
        if len(recs) != header["n"]:
            raise ConfigurationError(f"header says n={header['n']} but file has {len(recs)} transitions")
        return cls(
            [x["s"] for x in recs],
            [x["a"] for x in recs],
            [x["r"] for x in recs],
            [x["c"] for x in recs],
            [x["sn"] for x in recs],
            header["n_states"],
            header["n_actions"],
            header["gamma"],
            header.get("seed", 0),
        )


def sample_dataset(cmdp: Cmdp, behavior: Policy, n: int, seed: int) -> Dataset:
    """Draw n i.i.d. tuples with (s,a) ~ d^behavior and s' ~ P(.|s,a)."""
    if n < 1:
        raise ConfigurationError("n must be at least 1")
    rng = make_rng(seed)
    S, A = cmdp.n_states, cmdp.n_actions
    d = occupancy(cmdp, behavior).d.ravel()
    idx = rng.choice(S * A, size=n, p=d / d.sum())
    s, a = np.divmod(idx, A)
    cdf = np.cumsum(cmdp.transition[s, a], axis=1)
    u = rng.random(n)[:, None]
    s_next = np.minimum((u >= cdf).sum(axis=1), S - 1)
    # (u >= cdf) can select a zero-probability trailing state only via rounding; step back.
    zero = cmdp.transition[s, a, s_next] == 0.0
    while zero.any():
        s_next[zero] -= 1
        zero = cmdp.transition[s, a, s_next] == 0.0
    return Dataset(s, a, cmdp.reward[s, a], cmdp.cost[s, a], s_next, S, A, cmdp.gamma, seed)


def behavior_clone(dataset: Dataset, n_states: int | None = None, n_actions: int | None = None) -> Policy:
    """Count ratios n(s,a)/n(s) at observed states, uniform elsewhere."""
    S = dataset.n_states if n_states is None else n_states
    A = dataset.n_actions if n_actions is None else n_actions
    counts = np.zeros((S, A))
    np.add.at(counts, (dataset.s, dataset.a), 1.0)
    n_s = counts.sum(axis=1, keepdims=True)
    probs = np.where(n_s > 0, counts / np.where(n_s > 0, n_s, 1.0), 1.0 / A)
    return Policy(probs)


def mixture_behavior(optimal: Policy, base: Policy, p: float) -> Policy:
    """Per-state action-probability blend p * optimal + (1 - p) * base."""
    if not 0.0 <= p <= 1.0:
        raise ConfigurationError(f"mixture weight must lie in [0, 1], got {p}")
    if optimal.probs.shape != base.probs.shape:
        raise ConfigurationError("policies differ in shape")
    probs = p * optimal.probs + (1.0 - p) * base.probs
    return Policy(probs / probs.sum(axis=1, keepdims=True))
