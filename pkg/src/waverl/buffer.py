"""Episode-structured replay buffer with contiguous-window sampling.

Transitions are stored per episode stream so sampled windows never cross an
episode boundary. Eviction is FIFO over whole episodes.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError


class _Episode:
    __slots__ = ("s", "a", "s_next", "r", "done", "omega", "step0", "_finalized")

    def __init__(self):
        self.s, self.a, self.s_next, self.r, self.done, self.omega = [], [], [], [], [], []
        self.step0 = None
        self._finalized = False

    def append(self, tr):
        if self.step0 is None:
            self.step0 = tr.step_index
        self.s.append(tr.s)
        self.a.append(tr.a)
        self.s_next.append(tr.s_next)
        self.r.append(tr.r)
        self.done.append(float(tr.done))
        self.omega.append(tr.omega_hidden)

    def finalize(self):
        if not self._finalized:
            self.s = np.asarray(self.s, dtype=np.float64)
            self.a = np.asarray(self.a, dtype=np.float64)
            self.s_next = np.asarray(self.s_next, dtype=np.float64)
            self.r = np.asarray(self.r, dtype=np.float64)
            self.done = np.asarray(self.done, dtype=np.float64)
            self.omega = np.asarray(self.omega, dtype=np.float64)
            self._finalized = True
        return self

    def __len__(self):
        return len(self.s) if not self._finalized else self.s.shape[0]


class SequenceReplayBuffer:
    """Holds whole episodes; samples contiguous runs from inside single episodes."""

    def __init__(self, capacity):
        if capacity < 1:
            raise ParameterError(f"capacity must be positive, got {capacity}")
        self.capacity = capacity
        self.episodes = []
        self._open = None
        self.total = 0

    def append(self, transition):
        if self._open is None:
            self._open = _Episode()
        self._open.append(transition)
        self.total += 1

    def end_episode(self):
        if self._open is None or len(self._open) == 0:
            self._open = None
            return
        self.episodes.append(self._open.finalize())
        self._open = None
        while self.total > self.capacity and len(self.episodes) > 1:
            dropped = self.episodes.pop(0)
            self.total -= len(dropped)

    def __len__(self):
        return self.total

    def _run_counts(self, run_len):
        return np.array([max(len(ep) - run_len + 1, 0) for ep in self.episodes])

    def num_runs(self, run_len):
        return int(self._run_counts(run_len).sum())

    def sample_runs(self, batch, run_len, rng):
        """Stacked contiguous runs: dict of [batch, run_len, ...] arrays.

        Episodes are weighted by their number of valid start positions so
        every stored run is equally likely.
        """
        counts = self._run_counts(run_len)
        total = counts.sum()
        if total == 0:
            raise ParameterError(f"no stored run of length {run_len} available")
        flat = rng.integers(0, total, size=batch)
        bounds = np.cumsum(counts)
        out = {k: [] for k in ("s", "a", "s_next", "r", "done", "omega")}
        for f in flat:
            ep_idx = int(np.searchsorted(bounds, f, side="right"))
            start = int(f - (bounds[ep_idx - 1] if ep_idx else 0))
            ep = self.episodes[ep_idx]
            for key in out:
                out[key].append(getattr(ep, key)[start : start + run_len])
        return {k: np.stack(v) for k, v in out.items()}

    def state_arrays(self):
        """Flat name -> array map for checkpointing."""
        out = {}
        for i, ep in enumerate(self.episodes):
            for key in ("s", "a", "s_next", "r", "done", "omega"):
                out[f"buffer.ep{i}.{key}"] = getattr(ep, key)
        return out

    def restore_arrays(self, arrays, n_episodes):
        self.episodes = []
        self.total = 0
        self._open = None
        for i in range(n_episodes):
            ep = _Episode()
            ep.s = arrays[f"buffer.ep{i}.s"]
            ep.a = arrays[f"buffer.ep{i}.a"]
            ep.s_next = arrays[f"buffer.ep{i}.s_next"]
            ep.r = arrays[f"buffer.ep{i}.r"]
            ep.done = arrays[f"buffer.ep{i}.done"]
            ep.omega = arrays[f"buffer.ep{i}.omega"]
            ep.step0 = 0
            ep._finalized = True
            self.episodes.append(ep)
            self.total += len(ep)
