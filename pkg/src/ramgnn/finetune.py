"""Fine-tuning on the user-item interaction graph with BPR.

Users and items start from their pre-trained entity embeddings concatenated
with the mean of their attribute-value embeddings, projected by a shared
``W3``. Four layers then alternate: odd layers refresh users from the items
they interacted with, even layers refresh items from their users.
"""
import logging

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator

from . import autodiff as ad
from .ingest import SplitSpec, split_interactions
from .metrics import evaluate_model
from .optim import Adam
from .pretrain import TrainingDivergence
from .validation import check_ids, check_interactions, check_is_fitted

log = logging.getLogger(__name__)

DUMP_HEADER = "user\trank\titem\tscore"


def _value_index(value_ids, n_entities):
    if value_ids is None:
        value_ids = [[] for _ in range(n_entities)]
    if len(value_ids) != n_entities:
        raise ValueError(f"value ids given for {len(value_ids)} entities, expected {n_entities}")
    owners = np.repeat(np.arange(n_entities), [len(v) for v in value_ids]).astype(np.int64)
    flat = np.fromiter((x for v in value_ids for x in v), dtype=np.int64, count=len(owners))
    return owners, flat


def init_node_features(entity, rel_value, owners, values, w3):
    """x0 = [e || mean of the entity's value embeddings] @ W3.

    Entities without attributes get a zero pooled vector.
    """
    n = entity.shape[0]
    if len(values):
        pooled = ad.segment_sum(ad.gather(rel_value, values), owners, n, mean=True)
    else:
        pooled = ad.const(np.zeros((n, rel_value.shape[1])))
    return ad.matmul(ad.concat([entity, pooled], axis=1), w3)


def mean_adjacency(users, items, n_users, n_items):
    """Row-normalized user -> items and item -> users matrices, each with its CSR transpose."""
    ones = np.ones(len(users))
    a = sp.csr_matrix((ones, (users, items)), shape=(n_users, n_items))
    out = []
    for m in (a, a.T.tocsr()):
        m = (sp.diags(1.0 / np.maximum(np.asarray(m.sum(axis=1)).ravel(), 1.0)) @ m).tocsr()
        out.append((m, m.T.tocsr()))
    return tuple(out)


def propagate(x_users, x_items, adjacency, w4, layer):
    """One alternating layer (1-based): odd updates users, even updates items.

    ``adjacency`` comes from :func:`mean_adjacency`; rows without edges give a
    zero aggregate.
    """
    user_adj, item_adj = adjacency
    if layer % 2:
        agg = ad.spmm(user_adj[0], x_items, user_adj[1])
        return ad.leaky_relu(ad.matmul(ad.concat([agg, x_users], axis=1), w4)), x_items
    agg = ad.spmm(item_adj[0], x_users, item_adj[1])
    return x_users, ad.leaky_relu(ad.matmul(ad.concat([agg, x_items], axis=1), w4))


def score(x_u, x_i):
    return float(np.dot(x_u, x_i))


def bpr_loss(pos, neg, params=(), lambda_reg=0.0):
    """mean(-log sigmoid(pos - neg)) + lambda_reg * ||params||_2 (nodes or arrays)."""
    pos, neg = ad._lift(pos), ad._lift(neg)
    loss = ad.scale(ad.mean(ad.log_sigmoid(ad.sub(pos, neg))), -1.0)
    if params and lambda_reg:
        flat = [ad.reshape(p, (p.value.size,)) for p in params]
        loss = ad.add(loss, ad.scale(ad.l2_norm(ad.concat(flat, axis=0)), lambda_reg))
    return loss


class GraphRecommender(BaseEstimator):
    """Alternating user/item GNN trained with BPR on implicit feedback.

    ``fit`` takes the training :class:`~ramgnn.graph.InteractionGraph` and,
    optionally, pre-trained :class:`~ramgnn.pretrain.EmbeddingTable` objects
    and attribute-value ids for each side. Without pre-trained tables the
    embeddings are randomly initialized and ``pretrained_`` is False.
    """

    def __init__(self, dim=64, n_layers=4, lr=1e-3, lambda_reg=1e-5, batch_size=1024, epochs=200,
                 patience=20, eval_k=20, eval_protocol="full", n_eval_negatives=99, seed=0):
        self.dim = dim
        self.n_layers = n_layers
        self.lr = lr
        self.lambda_reg = lambda_reg
        self.batch_size = batch_size
        self.epochs = epochs
        self.patience = patience
        self.eval_k = eval_k
        self.eval_protocol = eval_protocol
        self.n_eval_negatives = n_eval_negatives
        self.seed = seed

    # -- parameters -------------------------------------------------------
    def _side(self, n, table, value_ids, rng, name):
        d, half = self.dim, self.dim // 2
        owners, values = _value_index(value_ids, n)
        n_values = int(values.max()) + 1 if len(values) else 1
        if table is None:
            bound = 1.0 / np.sqrt(d)
            entity = rng.uniform(-bound, bound, (n, d))
            rel_value = rng.uniform(-bound, bound, (n_values, half))
        else:
            entity, rel_value = np.asarray(table.entity, float), np.asarray(table.rel_value, float)
            if entity.shape != (n, d):
                raise ValueError(f"{name} embeddings have shape {entity.shape}, expected {(n, d)}")
            if rel_value.shape[1] != half or rel_value.shape[0] < n_values:
                raise ValueError(f"{name} relation-value table of shape {rel_value.shape} does not "
                                 f"cover {n_values} values of width {half}")
        return ad.param(entity.copy(), f"{name}.entity"), ad.param(rel_value.copy(), f"{name}.rel_value"), owners, values

    def _init_params(self, graph, user_init, item_init, user_values, item_values, rng):
        d = self.dim
        self.pretrained_ = user_init is not None and item_init is not None
        self.user_entity_, self.user_rel_, self._user_owners, self._user_values = self._side(
            graph.n_users, user_init, user_values, rng, "user")
        self.item_entity_, self.item_rel_, self._item_owners, self._item_values = self._side(
            graph.n_items, item_init, item_values, rng, "item")
        b3, b4 = 1.0 / np.sqrt(d + d // 2), 1.0 / np.sqrt(2 * d)
        self.w3_ = ad.param(rng.uniform(-b3, b3, (d + d // 2, d)), "w3")
        self.w4_ = [ad.param(rng.uniform(-b4, b4, (2 * d, d)), f"w4.{l}") for l in range(self.n_layers)]

    @property
    def params_(self):
        return [self.user_entity_, self.user_rel_, self.item_entity_, self.item_rel_, self.w3_] + self.w4_

    # -- forward ------------------------------------------------------------
    def forward(self, adjacency):
        """Final user and item states (graph nodes) given :func:`mean_adjacency` output."""
        x_u = init_node_features(self.user_entity_, self.user_rel_, self._user_owners, self._user_values, self.w3_)
        x_i = init_node_features(self.item_entity_, self.item_rel_, self._item_owners, self._item_values, self.w3_)
        for layer, w4 in enumerate(self.w4_, start=1):
            x_u, x_i = propagate(x_u, x_i, adjacency, w4, layer)
        return x_u, x_i

    def _refresh(self):
        x_u, x_i = self.forward(self._adjacency)
        self.user_states_, self.item_states_ = x_u.value, x_i.value

    def score_items(self, users):
        check_is_fitted(self, "item_states_")
        users = check_ids(users, self.user_states_.shape[0], "user")
        return self.user_states_[users] @ self.item_states_.T

    def predict(self, X):
        """Scores of (user, item) rows."""
        check_is_fitted(self, "item_states_")
        X = np.asarray(X, dtype=np.int64).reshape(-1, 2)
        u = check_ids(X[:, 0], self.user_states_.shape[0], "user")
        i = check_ids(X[:, 1], self.item_states_.shape[0], "item")
        return np.einsum("ij,ij->i", self.user_states_[u], self.item_states_[i])

    # -- training -----------------------------------------------------------
    def _sample_negatives(self, users, keys, n_items, rng):
        neg = rng.integers(n_items, size=len(users))
        for _ in range(100):
            q = users * n_items + neg
            pos = np.minimum(np.searchsorted(keys, q), len(keys) - 1)
            bad = keys[pos] == q
            if not bad.any():
                return neg
            neg[bad] = rng.integers(n_items, size=int(bad.sum()))
        raise ValueError("could not sample unobserved items; some user has interacted with every item")

    def fit(self, X, y=None, user_init=None, item_init=None, user_values=None, item_values=None):
        graph = check_interactions(X)
        if self.dim < 2 or self.dim % 2:
            raise ValueError(f"dim must be a positive even integer, got {self.dim}")
        if self.n_layers < 1:
            raise ValueError("n_layers must be >= 1")
        rng = np.random.default_rng(self.seed)
        self._init_params(graph, user_init, item_init, user_values, item_values, rng)

        # hold out each user's last training interaction for early stopping
        n_neg = self.n_eval_negatives if self.eval_protocol == "sampled" else 0
        fit_graph, val_cases = split_interactions(graph, SplitSpec("leave-one-out", n_neg, self.seed))
        self._adjacency = mean_adjacency(fit_graph.users, fit_graph.items, graph.n_users, graph.n_items)
        keys = fit_graph.edge_keys()
        seen = fit_graph.user_item_sets()

        opt = Adam(self.params_, lr=self.lr)
        self.loss_curve_, self.val_curve_ = [], []
        best, best_epoch, best_params = -1.0, 0, [p.value.copy() for p in self.params_]
        for epoch in range(1, self.epochs + 1):
            order = rng.permutation(fit_graph.n_edges)
            total, batches = 0.0, 0
            for start in range(0, len(order), self.batch_size):
                batch = order[start:start + self.batch_size]
                u, pos = fit_graph.users[batch], fit_graph.items[batch]
                neg = self._sample_negatives(u, keys, graph.n_items, rng)
                opt.zero_grad()
                x_u, x_i = self.forward(self._adjacency)
                xu = ad.gather(x_u, u)
                loss = bpr_loss(ad.dot(xu, ad.gather(x_i, pos)), ad.dot(xu, ad.gather(x_i, neg)),
                                self.params_, self.lambda_reg)
                value = float(loss.value)
                if not np.isfinite(value):
                    for p, v in zip(self.params_, best_params):
                        p.value = v
                    raise TrainingDivergence(f"non-finite fine-tuning loss at epoch {epoch}", best_params, epoch)
                ad.backward(loss)
                opt.step()
                total += value
                batches += 1
            self.loss_curve_.append(total / max(batches, 1))
            self._refresh()
            hr = evaluate_model(self, val_cases, (self.eval_k,), self.eval_protocol, exclude=seen)[("HR", self.eval_k)] \
                if val_cases else 0.0
            self.val_curve_.append(hr)
            # without validation cases every epoch counts as an improvement
            if hr > best or not val_cases:
                best, best_epoch = hr, epoch
                best_params = [p.value.copy() for p in self.params_]
            elif epoch - best_epoch >= self.patience:
                log.info("early stop at epoch %d (best %d, HR@%d %.4f)", epoch, best_epoch, self.eval_k, best)
                break
        for p, v in zip(self.params_, best_params):
            p.value = v
        self.best_epoch_ = best_epoch
        # final states propagate over every training edge, validation included
        self._adjacency = mean_adjacency(graph.users, graph.items, graph.n_users, graph.n_items)
        self._refresh()
        self.train_items_ = graph.user_item_sets()
        return self

    def recommend_topk(self, user, k, exclude=None):
        """Top-``k`` (item, score) pairs, descending, ties to the lower item id."""
        check_is_fitted(self, "item_states_")
        scores = self.score_items([user])[0]
        exclude = self.train_items_[user] if exclude is None else exclude
        return _topk(scores, k, exclude)


def _topk(scores, k, exclude=()):
    ids = np.arange(len(scores))
    keep = np.ones(len(scores), dtype=bool)
    keep[np.fromiter(exclude, dtype=np.int64, count=len(exclude))] = False
    ids, s = ids[keep], scores[keep]
    order = np.lexsort((ids, -s))[:k]
    return [(int(ids[j]), float(s[j])) for j in order]


class PopularityRecommender(BaseEstimator):
    """Scores every item by its training interaction count."""

    def fit(self, X, y=None):
        graph = check_interactions(X)
        self.counts_ = np.bincount(graph.items, minlength=graph.n_items).astype(np.float64)
        self.n_users_ = graph.n_users
        self.train_items_ = graph.user_item_sets()
        return self

    def score_items(self, users):
        check_is_fitted(self, "counts_")
        users = check_ids(users, self.n_users_, "user")
        return np.broadcast_to(self.counts_, (len(users), len(self.counts_)))

    def recommend_topk(self, user, k, exclude=None):
        exclude = self.train_items_[user] if exclude is None else exclude
        return _topk(self.counts_, k, exclude)


def write_recommendations(path, model, users, k):
    """Dump ``user<TAB>rank<TAB>item<TAB>score`` lines."""
    with open(path, "w") as fh:
        fh.write(DUMP_HEADER + "\n")
        for u in users:
            for rank, (item, s) in enumerate(model.recommend_topk(int(u), k), start=1):
                fh.write(f"{int(u)}\t{rank}\t{item}\t{s!r}\n")
