"""Multi-relational pre-training of entity and relation embeddings.

A :class:`RAMGNN` estimator is fit on one :class:`~ramgnn.graph.MultiRelGraph`
(the user graph or the item graph). Each layer composes neighbor embeddings
with relation embeddings, weights the messages with relation-level attention,
and aggregates only the neighbors kept by the reinforced neighbor sampler.
"""
import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import autodiff as ad
from .bandit import BanditState, RelationIndex
from .optim import Adam
from .validation import check_graph, check_is_fitted

log = logging.getLogger(__name__)

COMPOSITIONS = ("add", "mul", "corr")
SIM_CLAMP = 1e-7
EMB_HEADER = "#emb v1 kind={} dim={}"


class TrainingDivergence(RuntimeError):
    """Non-finite loss; ``checkpoint`` holds the last finite parameter values."""

    def __init__(self, msg, checkpoint=None, epoch=None):
        super().__init__(msg)
        self.checkpoint = checkpoint
        self.epoch = epoch


@dataclass
class EmbeddingTable:
    entity: np.ndarray
    rel_type: np.ndarray
    rel_value: np.ndarray

    @property
    def dim(self):
        return self.entity.shape[1]

    def combined(self, value_type):
        """e_n = e_t || e_v for every relation value id."""
        return np.concatenate([self.rel_type[value_type], self.rel_value], axis=1)

    def save(self, prefix):
        """Write ``<prefix>.entity.emb``, ``.rel_type.emb`` and ``.rel_value.emb``."""
        paths = []
        for kind in ("entity", "rel_type", "rel_value"):
            path = f"{prefix}.{kind}.emb"
            save_embeddings(path, kind, getattr(self, kind))
            paths.append(path)
        return paths

    @classmethod
    def load(cls, prefix):
        return cls(*(load_embeddings(f"{prefix}.{k}.emb")[1] for k in ("entity", "rel_type", "rel_value")))


def save_embeddings(path, kind, matrix):
    matrix = np.asarray(matrix, dtype=np.float64)
    with open(path, "w") as fh:
        fh.write(EMB_HEADER.format(kind, matrix.shape[1]) + "\n")
        for k, row in enumerate(matrix):
            fh.write(f"{k}\t" + " ".join(repr(float(x)) for x in row) + "\n")


def load_embeddings(path):
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[:2] != ["#emb", "v1"]:
            raise ValueError(f"{path}:1: bad embedding header")
        meta = dict(f.split("=", 1) for f in header[2:])
        dim = int(meta["dim"])
        rows = []
        for lineno, line in enumerate(fh, start=2):
            ident, _, values = line.rstrip("\n").partition("\t")
            row = [float(x) for x in values.split()]
            if int(ident) != len(rows) or len(row) != dim:
                raise ValueError(f"{path}:{lineno}: malformed row")
            rows.append(row)
    return meta["kind"], np.asarray(rows, dtype=np.float64).reshape(-1, dim)


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def compose(e_j, e_n, op, index=None):
    """Merge neighbor embeddings with relation embeddings.

    With ``index``, ``e_n`` is a table and row ``m`` of ``e_j`` is composed
    with ``e_n[index[m]]``.
    """
    if op not in COMPOSITIONS:
        raise ValueError(f"unknown composition {op!r}; expected one of {COMPOSITIONS}")
    if op == "corr":
        return ad.circ_corr(e_j, e_n, index=index)
    rel = e_n if index is None else ad.gather(e_n, index)
    if op == "add":
        return ad.add(e_j, rel)
    return ad.hadamard(e_j, rel)


class DistanceMLP:
    """Two-layer scalar projection d -> d -> 1 (LeakyReLU hidden, sigmoid output)."""

    def __init__(self, dim, rng):
        bound = 1.0 / np.sqrt(dim)
        self.w1 = ad.param(rng.uniform(-bound, bound, (dim, dim)), "mlp.w1")
        self.b1 = ad.param(np.zeros(dim), "mlp.b1")
        self.w2 = ad.param(rng.uniform(-bound, bound, (dim, 1)), "mlp.w2")
        self.b2 = ad.param(np.zeros(1), "mlp.b2")

    @property
    def params(self):
        return [self.w1, self.b1, self.w2, self.b2]

    def forward(self, h):
        """sigmoid(MLP(h)) per row, as a node of shape (n,)."""
        hidden = ad.leaky_relu(ad.add(ad.matmul(h, self.w1), self.b1))
        out = ad.add(ad.matmul(hidden, self.w2), self.b2)
        return ad.sigmoid(ad.reshape(out, (h.shape[0],)))

    def scores(self, embeddings):
        return self.forward(ad.const(embeddings)).value


def pair_distance(e_i, e_j, mlp):
    """(d, s) with d = |sigmoid(MLP(e_i)) - sigmoid(MLP(e_j))| and s = 1 - d."""
    z = mlp.scores(np.vstack([e_i, e_j]))
    d = float(abs(z[0] - z[1]))
    return d, 1.0 - d


def _pair_similarity(z, left, right):
    diff = ad.sub(ad.gather(z, left), ad.gather(z, right))
    dist = ad.l1_norm(ad.reshape(diff, (len(left), 1)), axis=-1)
    return ad.sub(ad.const(np.ones(len(left))), dist)


def _bce(sim, labels):
    """-sum y log s + (1 - y) log(1 - s), with s clamped away from 0 and 1."""
    s = ad.clip(sim, SIM_CLAMP, 1.0 - SIM_CLAMP)
    y = np.asarray(labels, dtype=np.float64)
    pos = ad.hadamard(ad.log(s), ad.const(y))
    neg = ad.hadamard(ad.log(ad.sub(ad.const(np.ones(len(y))), s)), ad.const(1.0 - y))
    return ad.scale(ad.sum_(ad.add(pos, neg)), -1.0)


def bce_from_scores(z, centers, others, labels):
    """Binary cross-entropy over pair similarities built from per-node scores ``z``."""
    if len(centers) == 0:
        return ad.const(0.0)
    return _bce(_pair_similarity(z, np.asarray(centers), np.asarray(others)), labels)


def similarity_loss(center, positives, negatives, embeddings, mlp):
    """Cross-entropy of one center node against its positive and negative samples."""
    positives, negatives = list(positives), list(negatives)
    others = positives + negatives
    if not others:
        raise ValueError("similarity_loss: empty sample set")
    z = mlp.forward(embeddings if isinstance(embeddings, ad.DiffNode) else ad.const(embeddings))
    labels = [1.0] * len(positives) + [0.0] * len(negatives)
    return bce_from_scores(z, [center] * len(others), others, labels)


def gnn_loss(embeddings, samples, mlp):
    """Sum of per-node cross-entropies; ``samples`` maps node -> (positives, negatives)."""
    centers, others, labels = [], [], []
    for node, (pos, neg) in sorted(samples.items()):
        for j in pos:
            centers.append(node), others.append(j), labels.append(1.0)
        for j in neg:
            centers.append(node), others.append(j), labels.append(0.0)
    if not centers:
        return ad.const(0.0)
    z = mlp.forward(embeddings if isinstance(embeddings, ad.DiffNode) else ad.const(embeddings))
    return bce_from_scores(z, centers, others, labels)


def l2_regularizer(params):
    flat = [ad.reshape(p, (p.value.size,)) for p in params]
    return ad.l2_norm(ad.concat(flat, axis=0))


def final_loss(l_gnn, sim_losses, params, lambda_sim, lambda_reg):
    """L_GNN + lambda_sim * sum(similarity losses) + lambda_reg * ||params||_2."""
    total = l_gnn
    for l_sim in sim_losses:
        total = ad.add(total, ad.scale(l_sim, lambda_sim))
    if params:
        total = ad.add(total, ad.scale(l2_regularizer(params), lambda_reg))
    return total


class LayerParams:
    def __init__(self, dim, rng, name):
        bound = 1.0 / np.sqrt(dim)
        u = lambda *shape: rng.uniform(-bound, bound, shape)
        self.w_key = ad.param(u(dim, dim), f"{name}.w_key")
        self.w_qry = ad.param(u(dim, dim), f"{name}.w_qry")
        self.bias = ad.param(np.zeros(dim), f"{name}.b")
        self.p = ad.param(u(dim), f"{name}.p")
        self.w_val = ad.param(u(2 * dim, dim), f"{name}.w_val")

    @property
    def params(self):
        return [self.w_key, self.w_qry, self.bias, self.p, self.w_val]


def relation_attention(h, rel, nbrs, values, centers, layer):
    """Attention weights over each center's (neighbor, relation) pairs.

    ``a = p . LeakyReLU(W_key e_j + W_qry e_n + b)``, softmax-normalized over
    all messages of the same center, pooled across relation types.
    """
    if len(nbrs) == 0:
        raise ValueError("relation_attention: empty neighbor set")
    keys = ad.gather(ad.matmul(h, layer.w_key), nbrs)
    qrys = ad.gather(ad.matmul(rel, layer.w_qry), values)
    hidden = ad.leaky_relu(ad.add(ad.add(keys, qrys), layer.bias))
    p_col = ad.reshape(layer.p, (layer.p.shape[0], 1))
    scores = ad.reshape(ad.matmul(hidden, p_col), (len(nbrs),))
    return ad.softmax(scores, segments=np.asarray(centers))


def aggregate_layer(h, rel, messages, layer, composition, attention=True):
    """One propagation step over the sampled neighborhoods.

    ``messages`` is ``(centers, nbrs, values)``. Isolated centers receive a
    zero aggregate; every node is then transformed from
    ``[aggregate || own embedding]``.
    """
    centers, nbrs, values = messages
    n = h.shape[0]
    if len(centers) == 0:
        agg = ad.const(np.zeros(h.shape))
    else:
        msg = compose(ad.gather(h, nbrs), rel, composition, index=values)
        if attention:
            alpha = relation_attention(h, rel, nbrs, values, centers, layer)
            weighted = ad.hadamard(msg, ad.reshape(alpha, (len(centers), 1)))
            agg = ad.segment_sum(weighted, centers, n)
        else:
            agg = ad.segment_sum(msg, centers, n, mean=True)
    return ad.leaky_relu(ad.matmul(ad.concat([agg, h], axis=1), layer.w_val))


# ---------------------------------------------------------------------------
# estimator
# ---------------------------------------------------------------------------

# embeddings are not a feature frame, so skip sklearn's set_output wrapping of transform
class RAMGNN(BaseEstimator, TransformerMixin, auto_wrap_output_keys=None):
    """Pre-trains entity and relation embeddings on a multi-relational graph.

    Parameters
    ----------
    dim : int
        Entity embedding width (even; relation types and values get dim / 2).
    n_layers : int
        Stacked aggregation layers.
    composition : {"add", "mul", "corr"}
    attention : bool
        Relation-level attention; False falls back to mean aggregation.
    sampler : {"rns", "random"}
        "rns" keeps the top-k most similar neighbors with bandit-tuned k;
        "random" keeps ``k_init`` uniformly drawn neighbors per relation.
    """

    def __init__(self, dim=64, n_layers=2, composition="corr", attention=True, sampler="rns",
                 n_negatives=5, lambda_sim=0.1, lambda_reg=1e-5, lr=1e-3, epochs=200,
                 k_init=5, eps=2, gamma_max=200, seed=0):
        self.dim = dim
        self.n_layers = n_layers
        self.composition = composition
        self.attention = attention
        self.sampler = sampler
        self.n_negatives = n_negatives
        self.lambda_sim = lambda_sim
        self.lambda_reg = lambda_reg
        self.lr = lr
        self.epochs = epochs
        self.k_init = k_init
        self.eps = eps
        self.gamma_max = gamma_max
        self.seed = seed

    def _validate_params(self):
        if self.dim < 2 or self.dim % 2:
            raise ValueError(f"dim must be a positive even integer, got {self.dim}")
        if self.n_layers < 1:
            raise ValueError("n_layers must be >= 1")
        if self.n_negatives < 1:
            raise ValueError("n_negatives must be >= 1")
        if self.composition not in COMPOSITIONS:
            raise ValueError(f"unknown composition {self.composition!r}")
        if self.sampler not in ("rns", "random"):
            raise ValueError(f"unknown sampler {self.sampler!r}")

    # -- parameters -------------------------------------------------------
    def _init_params(self, graph, rng):
        d, half = self.dim, self.dim // 2
        bound = 1.0 / np.sqrt(d)
        self.entity_ = ad.param(rng.uniform(-bound, bound, (graph.n_entities, d)), "entity")
        self.rel_type_ = ad.param(rng.uniform(-bound, bound, (max(graph.n_types, 1), half)), "rel_type")
        self.rel_value_ = ad.param(rng.uniform(-bound, bound, (max(graph.n_values, 1), half)), "rel_value")
        self.layers_ = [LayerParams(d, rng, f"layer{l}") for l in range(self.n_layers)]
        self.mlp_ = DistanceMLP(d, rng)

    @property
    def params_(self):
        out = [self.entity_, self.rel_type_, self.rel_value_]
        for layer in self.layers_:
            out.extend(layer.params)
        return out + self.mlp_.params

    def _relation_table(self, graph):
        value_type = np.maximum(graph.value_type, 0)
        if len(value_type) == 0:
            value_type = np.zeros(1, dtype=np.int64)
        return ad.concat([ad.gather(self.rel_type_, value_type), self.rel_value_], axis=1)

    # -- forward pieces -----------------------------------------------------
    def embed(self, graph, messages):
        """Final-layer embeddings for fixed sampled neighborhoods (a graph node)."""
        rel = self._relation_table(graph)
        h = self.entity_
        for layer in self.layers_:
            h = aggregate_layer(h, rel, messages, layer, self.composition, self.attention)
        return h

    def loss(self, graph, messages, pairs, include_sim=True):
        """Joint objective for one iteration, with neighborhoods and samples held fixed."""
        centers, others, labels = pairs
        h = self.embed(graph, messages)
        l_gnn = bce_from_scores(self.mlp_.forward(h), centers, others, labels)
        sims = []
        if include_sim:
            sims.append(bce_from_scores(self.mlp_.forward(self.entity_), centers, others, labels))
        total = final_loss(l_gnn, sims, self.params_, self.lambda_sim, self.lambda_reg)
        return total, l_gnn, (sims[0] if sims else None)

    # -- sampling -----------------------------------------------------------
    def _sample_pairs(self, graph, rng):
        """m positive neighbors (any relation) and m non-neighbors per node."""
        pk = graph.index["pair_keys"]
        heads, tails = np.divmod(pk, graph.n_entities)
        offsets = np.searchsorted(heads, np.arange(graph.n_entities + 1))
        deg = np.diff(offsets)
        nodes = np.flatnonzero(deg > 0)
        m = self.n_negatives
        pos_c = np.repeat(nodes, m)
        pick = offsets[pos_c] + (rng.random(len(pos_c)) * deg[pos_c]).astype(np.int64)
        pos_o = tails[pick]
        neg_c, neg_o = graph.sample_negatives(np.arange(graph.n_entities), m, rng)
        centers = np.concatenate([pos_c, neg_c])
        others = np.concatenate([pos_o, neg_o])
        labels = np.concatenate([np.ones(len(pos_c)), np.zeros(len(neg_c))])
        return centers, others, labels

    def _messages(self, selections):
        parts = [idx.expand(sel) for idx, sel in selections]
        if not parts:
            empty = np.empty(0, np.int64)
            return empty, empty, empty
        centers = np.concatenate([p[0] for p in parts])
        nbrs = np.concatenate([p[1] for p in parts])
        values = np.concatenate([p[2] for p in parts])
        order = np.lexsort((values, nbrs, centers))
        return centers[order], nbrs[order], values[order]

    def sample_neighborhoods(self, graph, rng, gamma=None):
        """Neighborhoods for this iteration; advances the bandit when sampler="rns"."""
        z = self.mlp_.scores(self.entity_.value)
        selections = []
        for t, idx in enumerate(self.relation_index_):
            if self.sampler == "rns":
                sel = idx.select_top_k(z, self.bandit_.k(t))
                if gamma is not None and len(sel):
                    self.bandit_.observe(t, gamma, idx.average_distance(z, sel))
            else:
                sel = idx.select_random(self.k_init, rng)
            selections.append((idx, sel))
        return self._messages(selections)

    # -- fitting ------------------------------------------------------------
    def fit(self, X, y=None):
        graph = check_graph(X)
        self._validate_params()
        rng = np.random.default_rng(self.seed)
        self._init_params(graph, rng)
        self.relation_index_ = [RelationIndex(graph, t) for t in range(graph.n_types)]
        k_max = [max(int(idx.degrees.max()) if len(idx.degrees) else 1, 1) for idx in self.relation_index_]
        self.bandit_ = BanditState(k_max, k_init=self.k_init, eps=self.eps, gamma_max=self.gamma_max)
        if self.sampler != "rns":
            self.bandit_.freeze_all(0, "disabled")
        opt = Adam(self.params_, lr=self.lr)
        self.loss_curve_ = []
        self.gnn_loss_curve_ = []
        self.sim_loss_curve_ = []
        checkpoint = [p.value.copy() for p in self.params_]
        for epoch in range(1, self.epochs + 1):
            messages = self.sample_neighborhoods(graph, rng, gamma=epoch)
            pairs = self._sample_pairs(graph, rng)
            # the similarity term only runs while some threshold is still being searched
            include_sim = self.sampler == "rns" and not self._frozen_before(epoch)
            opt.zero_grad()
            total, l_gnn, l_sim = self.loss(graph, messages, pairs, include_sim)
            value = float(total.value)
            if not np.isfinite(value):
                for p, v in zip(self.params_, checkpoint):
                    p.value = v
                raise TrainingDivergence(f"non-finite pre-training loss at epoch {epoch}", checkpoint, epoch)
            ad.backward(total)
            checkpoint = [p.value.copy() for p in self.params_]
            opt.step()
            if not all(np.isfinite(p.value).all() for p in self.params_):
                for p, v in zip(self.params_, checkpoint):
                    p.value = v
                raise TrainingDivergence(f"non-finite parameters after step {epoch}", checkpoint, epoch)
            self.loss_curve_.append(value)
            self.gnn_loss_curve_.append(float(l_gnn.value))
            self.sim_loss_curve_.append(float(l_sim.value) if l_sim is not None else 0.0)
            if epoch % 50 == 0:
                log.info("pretrain epoch %d loss %.4f k=%s", epoch, value,
                         [self.bandit_.k(t) for t in range(graph.n_types)])
        self.bandit_.freeze_all(self.epochs, "end")
        self.graph_ = graph
        self.messages_ = self.sample_neighborhoods(graph, np.random.default_rng(self.seed + 1))
        final = self.embed(graph, self.messages_).value
        self.embeddings_ = EmbeddingTable(final.copy(), self.rel_type_.value.copy(),
                                          self.rel_value_.value.copy())
        return self

    def _frozen_before(self, epoch):
        arms = self.bandit_.arms.values()
        return all(a.terminated and a.frozen_at is not None and a.frozen_at < epoch for a in arms)

    def transform(self, X=None):
        """Pre-trained entity embeddings (all rows, or the ids in ``X``)."""
        check_is_fitted(self, "embeddings_")
        if X is None:
            return self.embeddings_.entity
        return self.embeddings_.entity[np.asarray(X, dtype=np.int64)]

    def similarity(self, i, j):
        check_is_fitted(self, "embeddings_")
        return pair_distance(self.embeddings_.entity[i], self.embeddings_.entity[j], self.mlp_)[1]

    @property
    def trajectory_(self):
        check_is_fitted(self, "bandit_")
        return list(self.bandit_.trajectory)


def pretrain_run(graph, **config):
    """Fit a :class:`RAMGNN` and return (embeddings, bandit state, loss curve)."""
    model = RAMGNN(**config).fit(graph)
    return model.embeddings_, model.bandit_, model.loss_curve_
