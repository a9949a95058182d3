"""Random differentiable instances shared by the unit and acceptance tests.

Each builder takes a numpy Generator and returns ``(params, f)`` where ``f()``
rebuilds a scalar graph from ``params``. A random weighting vector turns
non-scalar outputs into scalars so every output coordinate is exercised.
"""
import contextlib

import numpy as np

from ramgnn import autodiff as ad
from ramgnn.finetune import GraphRecommender, bpr_loss, mean_adjacency
from ramgnn.graph import InteractionGraph, MultiRelGraph
from ramgnn.pretrain import RAMGNN


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.uniform(-1, 1, shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin, x)


def _unary(fn, shape_fn=lambda rng: (3, 4), init=None):
    def build(rng):
        shape = shape_fn(rng)
        x = ad.param(init(rng, shape) if init else rng.normal(size=shape))
        w = rng.normal(size=np.shape(fn(ad.const(x.value)).value))
        return [x], lambda: ad.sum_(ad.hadamard(fn(x), ad.const(w))) if w.shape else fn(x)
    return build


def _binary(fn, sa, sb):
    def build(rng):
        a, b = ad.param(rng.normal(size=sa)), ad.param(rng.normal(size=sb))
        w = rng.normal(size=np.shape(fn(ad.const(a.value), ad.const(b.value)).value))
        return [a, b], lambda: ad.sum_(ad.hadamard(fn(a, b), ad.const(w))) if w.shape else fn(a, b)
    return build


def _circ_corr_table(rng):
    a = ad.param(rng.normal(size=(6, 4)))
    table = ad.param(rng.normal(size=(3, 4)))
    index = rng.integers(0, 3, 6)
    w = ad.const(rng.normal(size=(6, 4)))
    return [a, table], lambda: ad.sum_(ad.hadamard(ad.circ_corr(a, table, index=index), w))


def _softmax_segments(rng):
    x = ad.param(rng.normal(size=7))
    seg = np.array([0, 0, 1, 1, 1, 2, 2])
    w = ad.const(rng.normal(size=7))
    return [x], lambda: ad.sum_(ad.hadamard(ad.softmax(x, segments=seg), w))


def _gather(rng):
    x = ad.param(rng.normal(size=(5, 3)))
    idx = rng.integers(0, 5, 8)
    w = ad.const(rng.normal(size=(8, 3)))
    return [x], lambda: ad.sum_(ad.hadamard(ad.gather(x, idx), w))


def _segment_sum(mean):
    def build(rng):
        x = ad.param(rng.normal(size=(7, 3)))
        seg = rng.integers(0, 4, 7)
        w = ad.const(rng.normal(size=(4, 3)))
        return [x], lambda: ad.sum_(ad.hadamard(ad.segment_sum(x, seg, 4, mean=mean), w))
    return build


def _spmm(rng):
    import scipy.sparse as sp
    m = sp.random(4, 5, density=0.5, random_state=int(rng.integers(1 << 31)), format="csr")
    x = ad.param(rng.normal(size=(5, 3)))
    w = ad.const(rng.normal(size=(4, 3)))
    return [x], lambda: ad.sum_(ad.hadamard(ad.spmm(m, x), w))


def _clip(rng):
    x = ad.param(rng.uniform(-2, 2, 6))
    x.value[np.abs(np.abs(x.value) - 1.0) < 0.05] = 0.3
    w = ad.const(rng.normal(size=6))
    return [x], lambda: ad.sum_(ad.hadamard(ad.clip(x, -1.0, 1.0), w))


def _positive(rng, shape):
    return rng.uniform(0.2, 2.0, shape)


PRIMITIVE_BUILDERS = {
    "matvec": _binary(ad.matvec, (3, 4), (4,)),
    "matmul": _binary(ad.matmul, (3, 4), (4, 2)),
    "add": _binary(ad.add, (3, 4), (4,)),
    "sub": _binary(ad.sub, (3, 4), (3, 4)),
    "hadamard": _binary(ad.hadamard, (3, 4), (3, 4)),
    "concat": _binary(lambda a, b: ad.concat([a, b], axis=1), (3, 2), (3, 4)),
    "sum": _unary(lambda x: ad.sum_(x, axis=0)),
    "mean": _unary(lambda x: ad.mean(x, axis=1)),
    "scale": _unary(lambda x: ad.scale(x, -1.7)),
    "softmax": _unary(ad.softmax, lambda rng: (5,)),
    "softmax[segments]": _softmax_segments,
    "sigmoid": _unary(ad.sigmoid),
    "leaky_relu": _unary(ad.leaky_relu, init=_away_from_zero),
    "l1_norm": _unary(lambda x: ad.l1_norm(x, axis=-1), init=_away_from_zero),
    "circ_corr": _binary(ad.circ_corr, (4, 6), (4, 6)),
    "circ_corr[table]": _circ_corr_table,
    "dot": _binary(ad.dot, (3, 5), (3, 5)),
    "gather": _gather,
    "segment_sum": _segment_sum(False),
    "segment_sum[mean]": _segment_sum(True),
    "spmm": _spmm,
    "reshape": _unary(lambda x: ad.reshape(x, (2, 6))),
    "log": _unary(ad.log, init=_positive),
    "clip": _clip,
    "log_sigmoid": _unary(ad.log_sigmoid),
    "l2_norm": _unary(ad.l2_norm),
}


def toy_multirel_graph(rng, n=8, n_types=2, n_values=4):
    """Small random multi-relational graph where every node has a neighbor."""
    value_type = np.arange(n_values) % n_types
    g = MultiRelGraph(n, [f"t{t}" for t in range(n_types)], [f"v{v}" for v in range(n_values)], value_type)
    for h in range(n):
        for _ in range(2):
            j = int(rng.integers(n))
            if j == h:
                j = (h + 1) % n
            v = int(rng.integers(n_values))
            g.add_quad((h, int(value_type[v]), v, j))
    return g


@contextlib.contextmanager
def _recording_leaky_inputs():
    seen, original = [], ad.leaky_relu

    def spy(x, slope=ad.LEAKY_SLOPE):
        seen.append(x.value)
        return original(x, slope)

    ad.leaky_relu = spy
    try:
        yield seen
    finally:
        ad.leaky_relu = original


def pretrain_loss_instance(rng, composition="corr", attention=True, include_sim=True, margin=1e-3):
    """Joint pre-training objective on a toy graph with neighborhoods and samples held fixed.

    Draws are rejected until every sampled pair's score distance and every
    LeakyReLU input is at least ``margin`` away from zero: both have a kink
    there that central differences would otherwise straddle.
    """
    while True:
        graph = toy_multirel_graph(rng)
        model = RAMGNN(dim=4, n_layers=2, composition=composition, attention=attention, n_negatives=2,
                       lambda_sim=0.3, lambda_reg=1e-3, seed=int(rng.integers(1 << 31)))
        model._validate_params()
        init_rng = np.random.default_rng(model.seed)
        model._init_params(graph, init_rng)
        # spread the scores over the sigmoid's range
        model.entity_.value *= 4.0
        model.mlp_.w2.value *= 20.0
        q = graph.quads_array()
        order = np.lexsort((q[:, 2], q[:, 3], q[:, 0]))
        messages = (q[order, 0], q[order, 3], q[order, 2])
        pairs = model._sample_pairs(graph, init_rng)
        c, o, _ = pairs
        with _recording_leaky_inputs() as leaky_inputs:
            z_out = model.mlp_.forward(model.embed(graph, messages)).value
            z_in = model.mlp_.forward(model.entity_).value
        closest = min(np.abs(z_out[c] - z_out[o]).min(), np.abs(z_in[c] - z_in[o]).min(),
                      min(np.abs(x).min() for x in leaky_inputs))
        if closest > margin:
            return model.params_, lambda: model.loss(graph, messages, pairs, include_sim)[0]


def toy_interactions(rng, n_users=3, n_items=3, n_edges=5):
    users = rng.integers(0, n_users, n_edges)
    items = rng.integers(0, n_items, n_edges)
    users[:n_users] = np.arange(n_users)
    items[:n_items] = np.arange(n_items)
    return InteractionGraph(n_users, n_items, users, items)


def bpr_loss_instance(rng, dim=4):
    """End-to-end BPR objective through the 4-layer propagation on a 6-node graph."""
    graph = toy_interactions(rng)
    model = GraphRecommender(dim=dim, seed=int(rng.integers(1 << 31)), lambda_reg=1e-3)
    values = [[int(rng.integers(3))] for _ in range(graph.n_users)]
    ivalues = [[int(rng.integers(3)), 3] for _ in range(graph.n_items)]
    model._init_params(graph, None, None, values, ivalues, np.random.default_rng(model.seed))
    for p in model.params_:
        p.value *= 3.0
    adjacency = mean_adjacency(graph.users, graph.items, graph.n_users, graph.n_items)
    u = graph.users
    pos = graph.items
    neg = (pos + 1) % graph.n_items

    def f():
        x_u, x_i = model.forward(adjacency)
        xu = ad.gather(x_u, u)
        return bpr_loss(ad.dot(xu, ad.gather(x_i, pos)), ad.dot(xu, ad.gather(x_i, neg)),
                        model.params_, model.lambda_reg)

    return model.params_, f


OCCUPATIONS = ["artist", "doctor", "engineer", "student", "writer"]


def write_synthetic_movielens(root, n_users=30, n_items=40, per_user=8, seed=0):
    """Small directory in the ML-100K file layout, with timestamps and attributes."""
    import os
    rng = np.random.default_rng(seed)
    os.makedirs(root, exist_ok=True)
    genres = ["unknown", "Action", "Comedy", "Drama"]
    with open(os.path.join(root, "u.genre"), "w") as fh:
        fh.writelines(f"{g}|{k}\n" for k, g in enumerate(genres))
    with open(os.path.join(root, "u.user"), "w") as fh:
        for u in range(1, n_users + 1):
            fh.write(f"{u}|{int(rng.integers(15, 65))}|{'MF'[u % 2]}|{OCCUPATIONS[u % 5]}|00000\n")
    with open(os.path.join(root, "u.item"), "w", encoding="latin-1") as fh:
        for i in range(1, n_items + 1):
            flags = ["0"] * len(genres)
            flags[1 + i % 3] = "1"
            year = 1990 + i % 4
            fh.write(f"{i}|Film {i} ({year})|01-Jan-{year}||http://x|" + "|".join(flags) + "\n")
    with open(os.path.join(root, "u.data"), "w") as fh:
        t = 0
        for u in range(1, n_users + 1):
            for i in rng.choice(n_items, per_user, replace=False) + 1:
                t += 1
                fh.write(f"{u}\t{i}\t{int(rng.integers(1, 6))}\t{t}\n")
    return root


def write_synthetic_kkbox(root, n_rows=10_000, n_users=600, n_songs=2_000, seed=0):
    """KKBox files with the competition's column layout; ``n_rows`` rows of train.csv."""
    import csv
    import os
    rng = np.random.default_rng(seed)
    os.makedirs(root, exist_ok=True)
    users = [f"u{k:05d}=" for k in range(n_users)]
    songs = [f"s{k:06d}=" for k in range(n_songs)]
    with open(os.path.join(root, "train.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["msno", "song_id", "source_system_tab", "source_screen_name", "source_type", "target"])
        for _ in range(n_rows):
            w.writerow([users[rng.integers(n_users)], songs[rng.integers(n_songs)], "my library",
                        "Local playlist more", "local-library", int(rng.integers(2))])
    with open(os.path.join(root, "songs.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["song_id", "song_length", "genre_ids", "artist_name", "composer", "lyricist", "language"])
        for s in songs:
            genres = "|".join(str(g) for g in sorted(set(rng.integers(400, 420, rng.integers(1, 3)).tolist())))
            composer = "" if rng.random() < 0.3 else f"composer {rng.integers(300)}"
            lyricist = "" if rng.random() < 0.5 else f"lyricist {rng.integers(200)}|lyricist {rng.integers(200)}"
            w.writerow([s, int(rng.integers(120_000, 300_000)), genres, f"artist {rng.integers(500)}",
                        composer, lyricist, "3.0"])
    with open(os.path.join(root, "members.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["msno", "city", "bd", "gender", "registered_via", "registration_init_time", "expiration_date"])
        for u in users:
            bd = 0 if rng.random() < 0.4 else int(rng.integers(15, 60))
            w.writerow([u, int(rng.integers(1, 22)), bd, rng.choice(["male", "female", ""]), 7, 20150101, 20171231])
    return root
