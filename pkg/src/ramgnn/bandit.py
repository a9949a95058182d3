"""Reinforced neighbor sampler: per-relation top-k filtering driven by a Bernoulli bandit.

Each relation type ``t`` owns an integer threshold ``k_t``. Every training
iteration the sampler keeps the ``k_t`` most similar neighbors of every node
under ``t``, measures the average neighbor distance (AND), and moves ``k_t``
by ``+eps`` when AND did not grow and by ``-eps`` otherwise. An arm freezes
once the last ten rewards nearly cancel out.
"""
from collections import deque
from dataclasses import dataclass, field

import numpy as np

WINDOW = 10


def reward(and_prev, and_curr):
    """+1 when the average neighbor distance did not increase, else -1."""
    if not (np.isfinite(and_prev) and np.isfinite(and_curr)):
        raise ValueError("reward: AND values must be finite")
    return 1 if and_prev >= and_curr else -1


@dataclass
class Arm:
    k: int
    k_min: int = 1
    k_max: int = 1
    rewards: deque = field(default_factory=lambda: deque(maxlen=WINDOW))
    and_history: list = field(default_factory=list)
    terminated: bool = False
    frozen_at: int = None
    frozen_by: str = None


class BanditState:
    """Thresholds, reward windows and termination flags for every relation type."""

    def __init__(self, k_max_by_type, k_init=5, eps=2, gamma_max=200):
        if eps < 1 or k_init < 1:
            raise ValueError("eps and k_init must be positive integers")
        self.eps = int(eps)
        self.gamma_max = int(gamma_max)
        self.arms = {}
        for t, k_max in enumerate(k_max_by_type):
            k_max = max(int(k_max), 1)
            self.arms[t] = Arm(k=min(max(int(k_init), 1), k_max), k_max=k_max)
        self.trajectory = []  # (gamma, t, k_t, AND)

    def k(self, t):
        return self.arms[t].k

    @property
    def all_terminated(self):
        return all(a.terminated for a in self.arms.values())

    def freeze_all(self, gamma, reason):
        for arm in self.arms.values():
            if not arm.terminated:
                arm.terminated = True
                arm.frozen_at = gamma
                arm.frozen_by = reason

    def observe(self, t, gamma, and_value):
        """One bandit iteration for arm ``t``: record AND, reward, step, check."""
        arm = self.arms[t]
        if arm.terminated:
            return None
        self.trajectory.append((gamma, t, arm.k, float(and_value)))
        arm.and_history.append(float(and_value))
        r = None
        if len(arm.and_history) >= 2:
            r = reward(arm.and_history[-2], arm.and_history[-1])
            bandit_step(self, t, r, gamma)
        if not arm.terminated and gamma >= self.gamma_max:
            arm.terminated = True
            arm.frozen_at = gamma
            arm.frozen_by = "cap"
        return r


def bandit_step(state, t, r, gamma=None):
    """Move ``k_t`` by ``r * eps`` within bounds, log the reward, check termination.

    Returns False (and changes nothing) if the arm is already frozen.
    """
    arm = state.arms[t]
    if arm.terminated:
        return False
    if r not in (1, -1):
        raise ValueError(f"reward must be +1 or -1, got {r!r}")
    arm.k = int(min(max(arm.k + r * state.eps, arm.k_min), arm.k_max))
    arm.rewards.append(r)
    if gamma is not None:
        check_termination(state, t, gamma)
    return True


def check_termination(state, t, gamma):
    """Freeze arm ``t`` if ``gamma > 10`` and the last ten rewards sum to at most eps in magnitude."""
    arm = state.arms[t]
    if arm.terminated:
        return True
    if gamma > WINDOW and len(arm.rewards) == WINDOW and abs(sum(arm.rewards)) <= state.eps:
        arm.terminated = True
        arm.frozen_at = gamma
        arm.frozen_by = "condition"
    return arm.terminated


def node_scores(embeddings, mlp):
    """sigmoid(MLP(e)) for every row; pair distances are absolute differences of these."""
    return mlp.scores(np.asarray(embeddings, dtype=np.float64))


def select_neighbors(graph, node, t, k, embeddings, mlp):
    """Top-``k`` neighbors of ``node`` under ``t`` by similarity, ties to the lower id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    z = node_scores(embeddings, mlp)
    nbrs = sorted({j for j, _ in graph.neighbors_by_relation(node, t)})
    ranked = sorted(nbrs, key=lambda j: (-(1.0 - abs(z[node] - z[j])), j))
    return ranked[:k]


def average_neighbor_distance(node, selected, embeddings, mlp):
    if len(selected) == 0:
        raise ValueError("average_neighbor_distance: empty neighbor set")
    z = node_scores(embeddings, mlp)
    return float(np.mean(np.abs(z[node] - z[np.asarray(selected)])))


class RelationIndex:
    """Distinct (center, neighbor) pairs of one relation type plus their quad rows.

    Precomputed once so that per-iteration top-k selection is a single sort.
    """

    def __init__(self, graph, t):
        # the graph index is already sorted by (center, type, neighbor, value)
        centers, nbrs, values = graph.relation_slices(t)
        n = graph.n_entities
        key = centers * n + nbrs
        starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]]) if len(key) else np.empty(0, np.int64)
        self.n_entities = n
        self.pair_centers = centers[starts]
        self.pair_nbrs = nbrs[starts]
        self.row_start = starts
        self.row_end = np.r_[starts[1:], len(key)]
        self.values = values
        self.centers = centers
        self.nbrs = nbrs
        self.center_offsets = np.searchsorted(self.pair_centers, np.arange(n + 1))
        self.degrees = np.diff(self.center_offsets)
        self._id_bits = max(int(len(starts)).bit_length(), 1)
        self._score_bits = 63 - self._id_bits - max(int(n).bit_length(), 1)

    def rank_pairs(self, scores):
        """Order pairs by center, then score descending, then neighbor id.

        ``scores`` must lie in [0, 1]. The order comes from one in-place sort
        of an int64 key packing (center, quantized 1 - score, pair id); pair
        ids follow neighbor order within a center, so ties go to the lower
        neighbor id. Scores closer than the quantization step (2**-score_bits)
        count as ties.
        """
        m = len(self.pair_centers)
        if m == 0:
            return np.empty(0, np.int64), np.empty(0, np.int64)
        if self._score_bits >= 24:
            q = np.rint((1.0 - scores) * ((1 << self._score_bits) - 1)).astype(np.int64)
            key = (self.pair_centers << (self._score_bits + self._id_bits)) | (q << self._id_bits)
            key |= np.arange(m, dtype=np.int64)
            key.sort()
            order = key & ((1 << self._id_bits) - 1)
        else:
            order = np.lexsort((np.arange(m), -scores, self.pair_centers))
        rank = np.arange(m) - self.center_offsets[self.pair_centers[order]]
        return order, rank

    def expand(self, pairs):
        """Quad rows (center, neighbor, value) belonging to the selected pairs."""
        starts, ends = self.row_start[pairs], self.row_end[pairs]
        lens = ends - starts
        rows = np.repeat(starts - np.r_[0, np.cumsum(lens)[:-1]], lens) + np.arange(lens.sum())
        return self.centers[rows], self.nbrs[rows], self.values[rows]

    def select_top_k(self, z, k):
        """Top-``k`` most similar neighbors of every center, as selected pair ids."""
        sim = 1.0 - np.abs(z[self.pair_centers] - z[self.pair_nbrs])
        order, rank = self.rank_pairs(sim)
        return np.sort(order[rank < k])

    def select_random(self, k, rng):
        order, rank = self.rank_pairs(rng.random(len(self.pair_centers)))
        return np.sort(order[rank < k])

    def average_distance(self, z, pairs):
        """Per-relation AND: node-level means of selected-pair distances, averaged over nodes."""
        if len(pairs) == 0:
            return 0.0
        c = self.pair_centers[pairs]
        d = np.abs(z[c] - z[self.pair_nbrs[pairs]])
        per_node_sum = np.bincount(c, weights=d, minlength=self.n_entities)
        per_node_cnt = np.bincount(c, minlength=self.n_entities)
        has = per_node_cnt > 0
        return float(np.mean(per_node_sum[has] / per_node_cnt[has]))
