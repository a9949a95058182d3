"""Leave-one-out ranking metrics: HR@K, MRR@K and NDCG@K with a single relevant item."""
from dataclasses import dataclass

import numpy as np

PROTOCOLS = ("sampled", "full")


@dataclass
class RankedCase:
    user: int
    target: int
    candidates: np.ndarray
    ranking: np.ndarray

    def __post_init__(self):
        self.candidates = np.asarray(self.candidates, dtype=np.int64)
        self.ranking = np.asarray(self.ranking, dtype=np.int64)
        if np.count_nonzero(self.candidates == self.target) != 1:
            raise ValueError(f"user {self.user}: target {self.target} must appear exactly once among candidates")
        if len(self.ranking) != len(self.candidates) or not np.array_equal(
                np.sort(self.ranking), np.sort(self.candidates)):
            raise ValueError(f"user {self.user}: ranking is not a permutation of the candidates")

    @property
    def rank(self):
        return int(np.flatnonzero(self.ranking == self.target)[0]) + 1

    @classmethod
    def from_scores(cls, user, target, candidates, scores):
        """Rank candidates by descending score, ties to the lower item id."""
        candidates = np.asarray(candidates, dtype=np.int64)
        order = np.lexsort((candidates, -np.asarray(scores, dtype=np.float64)))
        return cls(user, target, candidates, candidates[order])


def rank_metrics(case, k):
    """(hr, mrr, ndcg) of one case at cutoff ``k``."""
    if not 1 <= k <= len(case.candidates):
        raise ValueError(f"K={k} outside [1, {len(case.candidates)}]")
    r = case.rank
    if r > k:
        return 0.0, 0.0, 0.0
    return 1.0, 1.0 / r, 1.0 / np.log2(r + 1)


def target_ranks(scores, targets, excluded=None):
    """1-based rank of ``targets[u]`` in row ``u`` of ``scores``, ties to the lower id.

    ``excluded[u]`` is a collection of item ids removed from row ``u``'s
    candidates (never containing the target).
    """
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    rows = np.arange(len(targets))
    t = scores[rows, targets][:, None]
    ids = np.arange(scores.shape[1])
    ahead = (scores > t) | ((scores == t) & (ids[None, :] < targets[:, None]))
    if excluded is not None:
        for r, items in enumerate(excluded):
            items = np.fromiter(items, dtype=np.int64, count=len(items))
            ahead[r, items] = False
    return ahead.sum(axis=1) + 1


def metrics_from_ranks(ranks, ks, n_candidates=None):
    """Mean HR/MRR/NDCG per K as ``{(metric, K): value}``."""
    ranks = np.asarray(ranks, dtype=np.int64)
    if len(ranks) == 0:
        raise ValueError("no test cases to evaluate")
    out = {}
    for k in ks:
        if k < 1 or (n_candidates is not None and k > n_candidates):
            raise ValueError(f"K={k} outside [1, {n_candidates}]")
        hit = ranks <= k
        out[("HR", k)] = float(hit.mean())
        out[("MRR", k)] = float(np.where(hit, 1.0 / ranks, 0.0).mean())
        out[("NDCG", k)] = float(np.where(hit, 1.0 / np.log2(ranks + 1), 0.0).mean())
    return out


def evaluate_model(model, cases, ks=(10, 20), protocol="sampled", exclude=None, batch_size=1024):
    """Average ranking metrics of ``model`` over leave-one-out test cases.

    ``model`` needs ``score_items(users) -> (len(users), n_items)``.
    ``protocol="sampled"`` ranks the target among the case's drawn negatives;
    ``"full"`` ranks it among every item except ``exclude[user]`` (typically
    the user's training items).
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown evaluation protocol {protocol!r}; expected one of {PROTOCOLS}")
    if len(cases) == 0:
        raise ValueError("empty test set")
    ranks = []
    n_candidates = None
    for start in range(0, len(cases), batch_size):
        chunk = cases[start:start + batch_size]
        users = np.array([c.user for c in chunk], dtype=np.int64)
        targets = np.array([c.item for c in chunk], dtype=np.int64)
        scores = np.asarray(model.score_items(users), dtype=np.float64)
        if protocol == "sampled":
            if any(len(c.negatives) == 0 for c in chunk):
                raise ValueError("sampled protocol needs negatives in every test case")
            cand = np.array([[c.item] + list(c.negatives) for c in chunk], dtype=np.int64)
            sub = np.take_along_axis(scores, cand, axis=1)
            t = sub[:, :1]
            ahead = (sub > t) | ((sub == t) & (cand < cand[:, :1]))
            ranks.append(ahead.sum(axis=1) + 1)
            n_candidates = cand.shape[1] if n_candidates is None else min(n_candidates, cand.shape[1])
        else:
            excl = None
            if exclude is not None:
                excl = [set(exclude[u]) - {t} for u, t in zip(users, targets)]
            ranks.append(target_ranks(scores, targets, excl))
    return metrics_from_ranks(np.concatenate(ranks), ks, n_candidates)
