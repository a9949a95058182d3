"""Multi-relational attribute graphs and the user-item interaction graph."""
from collections import namedtuple

import numpy as np

Quad = namedtuple("Quad", ["head", "rel_type", "rel_value", "tail"])

QUAD_HEADER = "#quads v1 entities={} types={} values={}"


class GraphError(ValueError):
    pass


class MultiRelGraph:
    """Symmetric quadruplet graph ``(head, rel_type, rel_value, tail)``.

    Quads are stored in both directions. The adjacency index is built lazily
    and maps ``(entity, rel_type)`` to a sorted slice of
    ``(neighbor, rel_value)`` pairs.
    """

    def __init__(self, n_entities, type_names, value_names, value_type=None, entity_names=None):
        self.n_entities = int(n_entities)
        self.type_names = list(type_names)
        self.value_names = list(value_names)
        # owning relation type of each value id (-1 when unknown)
        self.value_type = (np.full(len(self.value_names), -1, dtype=np.int64)
                           if value_type is None else np.asarray(value_type, dtype=np.int64))
        self.entity_names = list(entity_names) if entity_names is not None else None
        self._quads = np.empty((0, 4), dtype=np.int64)
        self._pending = []
        self._seen = None
        self._index = None

    # -- construction -----------------------------------------------------
    @property
    def n_types(self):
        return len(self.type_names)

    @property
    def n_values(self):
        return len(self.value_names)

    def _validate(self, head, rel_type, rel_value, tail):
        if not (0 <= head < self.n_entities and 0 <= tail < self.n_entities):
            raise GraphError(f"entity id out of range [0, {self.n_entities}): {head}, {tail}")
        if not 0 <= rel_type < self.n_types:
            raise GraphError(f"unknown relation type id {rel_type}")
        if not 0 <= rel_value < self.n_values:
            raise GraphError(f"unknown relation value id {rel_value}")
        if head == tail:
            raise GraphError(f"self-relation on entity {head}")

    def add_quad(self, quad):
        """Insert ``quad`` and its mirror. Returns False if it was already present."""
        head, rel_type, rel_value, tail = (int(x) for x in quad)
        self._validate(head, rel_type, rel_value, tail)
        if self._seen is None:
            self._seen = {tuple(q) for q in self.quads_array().tolist()}
        key = (head, rel_type, rel_value, tail)
        if key in self._seen:
            return False
        mirror = (tail, rel_type, rel_value, head)
        self._seen.add(key)
        self._seen.add(mirror)
        self._pending.extend([key, mirror])
        self._index = None
        return True

    def add_quads(self, quads):
        """Bulk insert an ``(n, 4)`` array; mirrors and duplicates handled."""
        quads = np.asarray(quads, dtype=np.int64).reshape(-1, 4)
        if len(quads) == 0:
            return
        h, t, v, j = quads.T
        if (h.min() < 0 or j.min() < 0 or max(h.max(), j.max()) >= self.n_entities):
            raise GraphError(f"entity id out of range [0, {self.n_entities})")
        if t.min() < 0 or t.max() >= self.n_types:
            raise GraphError("unknown relation type id")
        if v.min() < 0 or v.max() >= self.n_values:
            raise GraphError("unknown relation value id")
        if np.any(h == j):
            raise GraphError("self-relation in bulk insert")
        both = np.concatenate([quads, quads[:, [3, 1, 2, 0]]])
        self._flush()
        self._quads = self._unique(np.concatenate([self._quads, both]))
        self._seen = None
        self._index = None

    def _unique(self, quads):
        """Sorted unique rows, via one packed int64 key per quad."""
        n, nt, nv = self.n_entities, max(self.n_types, 1), max(self.n_values, 1)
        keys = ((quads[:, 0] * nt + quads[:, 1]) * nv + quads[:, 2]) * n + quads[:, 3]
        keys = np.unique(keys)
        out = np.empty((len(keys), 4), dtype=np.int64)
        keys, out[:, 3] = np.divmod(keys, n)
        keys, out[:, 2] = np.divmod(keys, nv)
        out[:, 0], out[:, 1] = np.divmod(keys, nt)
        return out

    def _flush(self):
        if self._pending:
            merged = np.concatenate([self._quads, np.asarray(self._pending, dtype=np.int64)])
            self._quads = self._unique(merged)
            self._pending = []

    def quads_array(self):
        """All stored quads, sorted by (head, rel_type, rel_value, tail)."""
        self._flush()
        return self._quads

    @property
    def n_quads(self):
        return len(self.quads_array())

    def __len__(self):
        return self.n_quads

    # -- index ---------------------------------------------------------------
    def _build_index(self):
        q = self.quads_array()
        order = np.lexsort((q[:, 2], q[:, 3], q[:, 1], q[:, 0]))
        q = q[order]
        key = q[:, 0] * self.n_types + q[:, 1]
        offsets = np.searchsorted(key, np.arange(self.n_entities * self.n_types + 1))
        pair_keys = np.unique(q[:, 0] * self.n_entities + q[:, 3])
        self._index = {"quads": q, "offsets": offsets, "pair_keys": pair_keys}
        return self._index

    @property
    def index(self):
        return self._index if self._index is not None else self._build_index()

    def type_id(self, t):
        if isinstance(t, str):
            try:
                return self.type_names.index(t)
            except ValueError:
                raise GraphError(f"unknown relation type {t!r}") from None
        t = int(t)
        if not 0 <= t < self.n_types:
            raise GraphError(f"unknown relation type id {t}")
        return t

    def neighbors_by_relation(self, node, t):
        """``(neighbor, rel_value)`` pairs of ``node`` under type ``t``, ascending."""
        t = self.type_id(t)
        if not 0 <= node < self.n_entities:
            raise GraphError(f"entity id {node} out of range")
        idx = self.index
        k = node * self.n_types + t
        rows = idx["quads"][idx["offsets"][k]:idx["offsets"][k + 1]]
        return [(int(j), int(v)) for j, v in zip(rows[:, 3], rows[:, 2])]

    def relation_slices(self, t):
        """(centers, neighbors, values) arrays for every stored quad of type ``t``."""
        t = self.type_id(t)
        q = self.index["quads"]
        rows = q[q[:, 1] == t]
        return rows[:, 0], rows[:, 3], rows[:, 2]

    def degrees(self, t):
        """Distinct-neighbor count of every entity under relation type ``t``."""
        centers, nbrs, _ = self.relation_slices(t)
        pairs = np.unique(centers * self.n_entities + nbrs)
        return np.bincount(pairs // self.n_entities, minlength=self.n_entities)

    def are_adjacent(self, heads, tails):
        """Vectorized test for an edge of any type between ``heads[k]`` and ``tails[k]``."""
        keys = np.asarray(heads) * self.n_entities + np.asarray(tails)
        pk = self.index["pair_keys"]
        if len(pk) == 0:
            return np.zeros(keys.shape, dtype=bool)
        pos = np.minimum(np.searchsorted(pk, keys), len(pk) - 1)
        return pk[pos] == keys

    def neighbor_set(self, node):
        q = self.index["quads"]
        k0 = node * self.n_types
        rows = q[self.index["offsets"][k0]:self.index["offsets"][k0 + self.n_types]]
        return np.unique(rows[:, 3])

    def sample_negative_nodes(self, node, m, seed):
        """``m`` distinct entities not adjacent to ``node`` under any relation."""
        if m < 1:
            raise GraphError("m must be >= 1")
        excluded = np.append(self.neighbor_set(node), node)
        candidates = np.setdiff1d(np.arange(self.n_entities), excluded)
        if len(candidates) < m:
            raise GraphError(f"only {len(candidates)} non-neighbors of {node} available, need {m}")
        rng = np.random.default_rng(seed)
        return [int(x) for x in rng.choice(candidates, size=m, replace=False)]

    def sample_negatives(self, nodes, m, rng, max_rounds=50):
        """Training-time negatives: ``m`` non-neighbors per node (with replacement).

        Returns ``(centers, negatives)`` arrays; a node with no non-neighbor
        contributes nothing.
        """
        nodes = np.asarray(nodes, dtype=np.int64)
        centers = np.repeat(nodes, m)
        draws = rng.integers(0, self.n_entities, size=len(centers))
        for _ in range(max_rounds):
            bad = (draws == centers) | self.are_adjacent(centers, draws)
            if not bad.any():
                break
            draws[bad] = rng.integers(0, self.n_entities, size=int(bad.sum()))
        bad = (draws == centers) | self.are_adjacent(centers, draws)
        if bad.any():
            # exact fallback for nodes whose neighborhood covers almost everything
            for k in np.flatnonzero(bad):
                excluded = np.append(self.neighbor_set(centers[k]), centers[k])
                cands = np.setdiff1d(np.arange(self.n_entities), excluded)
                if len(cands):
                    draws[k] = rng.choice(cands)
                    bad[k] = False
        keep = ~bad
        return centers[keep], draws[keep]

    # -- persistence -------------------------------------------------------
    def save(self, path):
        q = self.quads_array()
        with open(path, "w") as fh:
            fh.write(QUAD_HEADER.format(self.n_entities, self.n_types, self.n_values) + "\n")
            for h, t, v, j in q.tolist():
                fh.write(f"{h}\t{t}\t{v}\t{j}\n")

    @classmethod
    def load(cls, path, type_names=None, value_names=None):
        with open(path) as fh:
            header = fh.readline().strip()
            fields = header.split()
            if len(fields) != 5 or fields[:2] != ["#quads", "v1"]:
                raise GraphError(f"{path}:1: bad header {header!r}")
            meta = dict(f.split("=", 1) for f in fields[2:])
            rows = []
            for lineno, line in enumerate(fh, start=2):
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 4:
                    raise GraphError(f"{path}:{lineno}: expected 4 tab-separated fields")
                rows.append([int(p) for p in parts])
        n_types, n_values = int(meta["types"]), int(meta["values"])
        graph = cls(
            int(meta["entities"]),
            type_names or [f"t{k}" for k in range(n_types)],
            value_names or [f"v{k}" for k in range(n_values)],
        )
        if rows:
            q = np.asarray(rows, dtype=np.int64)
            if q.min() < 0 or q[:, [0, 3]].max() >= graph.n_entities or q[:, 1].max() >= n_types \
                    or q[:, 2].max() >= n_values:
                raise GraphError(f"{path}: id outside the header's declared ranges")
            graph._quads = graph._unique(q)
            # reject files that break the symmetry invariant
            mirrored = graph._unique(graph._quads[:, [3, 1, 2, 0]])
            if not np.array_equal(mirrored, graph._quads):
                raise GraphError(f"{path}: quad set is not symmetric")
        return graph


class InteractionGraph:
    """Bipartite implicit-feedback graph; duplicate (user, item) pairs are dropped."""

    def __init__(self, n_users, n_items, users, items, timestamps=None,
                 user_names=None, item_names=None):
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        if len(users) != len(items):
            raise GraphError("users and items must have equal length")
        if len(users) and (users.min() < 0 or users.max() >= n_users):
            raise GraphError("user id out of range")
        if len(items) and (items.min() < 0 or items.max() >= n_items):
            raise GraphError("item id out of range")
        ts = None if timestamps is None else np.asarray(timestamps, dtype=np.int64)
        _, first = np.unique(users * n_items + items, return_index=True)
        first = np.sort(first)
        self.n_users = int(n_users)
        self.n_items = int(n_items)
        self.users = users[first]
        self.items = items[first]
        self.timestamps = None if ts is None else ts[first]
        self.user_names = user_names
        self.item_names = item_names

    @property
    def n_edges(self):
        return len(self.users)

    def __len__(self):
        return self.n_edges

    def subgraph(self, mask):
        mask = np.asarray(mask, dtype=bool)
        return InteractionGraph(
            self.n_users, self.n_items, self.users[mask], self.items[mask],
            None if self.timestamps is None else self.timestamps[mask],
            self.user_names, self.item_names,
        )

    def items_of(self, user):
        return np.sort(self.items[self.users == user])

    def users_of(self, item):
        return np.sort(self.users[self.items == item])

    def user_item_sets(self):
        sets = [set() for _ in range(self.n_users)]
        for u, i in zip(self.users.tolist(), self.items.tolist()):
            sets[u].add(i)
        return sets

    def edge_keys(self):
        return np.sort(self.users * self.n_items + self.items)

    def has_edges(self, users, items):
        keys = self.edge_keys()
        q = np.asarray(users) * self.n_items + np.asarray(items)
        pos = np.minimum(np.searchsorted(keys, q), max(len(keys) - 1, 0))
        return (keys[pos] == q) if len(keys) else np.zeros(len(q), bool)
