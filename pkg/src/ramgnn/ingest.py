"""Dataset readers and construction of the attribute graphs and splits."""
import csv
import os
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from .graph import InteractionGraph, MultiRelGraph

ML100K_GENRES = [
    "unknown", "Action", "Adventure", "Animation", "Children's", "Comedy", "Crime",
    "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror", "Musical", "Mystery",
    "Romance", "Sci-Fi", "Thriller", "War", "Western",
]

TestCase = namedtuple("TestCase", ["user", "item", "negatives"])


class DataError(ValueError):
    pass


class AttributeTable:
    """Per-entity list of ``(attribute, value)`` pairs; entities are dense ids."""

    def __init__(self, names):
        self.names = list(names)
        self.rows = [[] for _ in self.names]

    def __len__(self):
        return len(self.rows)

    def add(self, entity, attribute, value):
        pair = (attribute, str(value))
        if pair not in self.rows[entity]:
            self.rows[entity].append(pair)

    def attributes(self):
        seen = []
        for row in self.rows:
            for name, _ in row:
                if name not in seen:
                    seen.append(name)
        return seen

    def values_of(self, entity, attribute):
        return [v for a, v in self.rows[entity] if a == attribute]


@dataclass(frozen=True)
class RelationSpec:
    attribute: str
    bucketing: str = "identity"
    width: float = None
    include: bool = True

    def bucket(self, value):
        if self.bucketing == "identity":
            return value
        if self.bucketing == "numeric-bucket":
            lo = int(float(value) // self.width * self.width)
            return f"{lo}-{lo + int(self.width) - 1}"
        raise DataError(f"unknown bucketing rule {self.bucketing!r}")


@dataclass(frozen=True)
class SplitSpec:
    protocol: str = "leave-one-out"
    n_negatives: int = 99
    seed: int = 0


DEFAULT_ITEM_SPECS = (RelationSpec("genre"), RelationSpec("release_year"))
DEFAULT_USER_SPECS = (
    RelationSpec("age", "numeric-bucket", 10),
    RelationSpec("gender"),
    RelationSpec("occupation"),
)


def _read_lines(path, encoding="utf-8"):
    if not os.path.exists(path):
        raise DataError(f"missing file {path}")
    with open(path, encoding=encoding) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if line:
                yield lineno, line


def _int_field(path, lineno, text):
    try:
        return int(text)
    except ValueError:
        raise DataError(f"{path}:{lineno}: expected an integer, got {text!r}") from None


def load_movielens(path):
    """Read an ML-100K directory into (interactions, user table, item table).

    Every rating becomes one implicit-feedback edge. Entity ids are dense and
    follow the ascending raw ids of u.user / u.item.
    """
    user_path = os.path.join(path, "u.user")
    item_path = os.path.join(path, "u.item")
    data_path = os.path.join(path, "u.data")
    genre_path = os.path.join(path, "u.genre")

    genres = list(ML100K_GENRES)
    if os.path.exists(genre_path):
        genres = [line.split("|")[0] for _, line in _read_lines(genre_path)]

    user_rows = []
    for lineno, line in _read_lines(user_path):
        parts = line.split("|")
        if len(parts) != 5:
            raise DataError(f"{user_path}:{lineno}: expected 5 fields, got {len(parts)}")
        user_rows.append((_int_field(user_path, lineno, parts[0]), lineno, parts))
    user_ids = sorted(r for r, _, _ in user_rows)
    user_index = {raw: k for k, raw in enumerate(user_ids)}
    if len(user_index) != len(user_rows):
        raise DataError(f"{user_path}: duplicate user ids")
    users = AttributeTable([str(u) for u in user_ids])
    for raw, lineno, parts in user_rows:
        uid = user_index[raw]
        users.add(uid, "age", _int_field(user_path, lineno, parts[1]))
        users.add(uid, "gender", parts[2])
        users.add(uid, "occupation", parts[3])

    item_rows = []
    for lineno, line in _read_lines(item_path, encoding="latin-1"):
        parts = line.split("|")
        if len(parts) != 5 + len(genres):
            raise DataError(f"{item_path}:{lineno}: expected {5 + len(genres)} fields, got {len(parts)}")
        item_rows.append((_int_field(item_path, lineno, parts[0]), lineno, parts))
    item_ids = sorted(r for r, _, _ in item_rows)
    item_index = {raw: k for k, raw in enumerate(item_ids)}
    if len(item_index) != len(item_rows):
        raise DataError(f"{item_path}: duplicate item ids")
    items = AttributeTable([str(i) for i in item_ids])
    for raw, lineno, parts in item_rows:
        iid = item_index[raw]
        for name, flag in zip(genres, parts[5:]):
            if flag.strip() not in ("0", "1"):
                raise DataError(f"{item_path}:{lineno}: genre flag must be 0/1, got {flag!r}")
            if flag.strip() == "1":
                items.add(iid, "genre", name)
        release = parts[2].strip()
        if release:
            items.add(iid, "release_year", release.rsplit("-", 1)[-1])

    us, its, ts = [], [], []
    for lineno, line in _read_lines(data_path):
        parts = line.split("\t")
        if len(parts) != 4:
            raise DataError(f"{data_path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}")
        u, i, _rating, t = (_int_field(data_path, lineno, p) for p in parts)
        if u not in user_index:
            raise DataError(f"{data_path}:{lineno}: user id {u} not declared in u.user")
        if i not in item_index:
            raise DataError(f"{data_path}:{lineno}: item id {i} not declared in u.item")
        us.append(user_index[u])
        its.append(item_index[i])
        ts.append(t)
    graph = InteractionGraph(len(user_ids), len(item_ids), us, its, ts,
                             user_names=users.names, item_names=items.names)
    return graph, users, items


def load_aux_attributes(path, table):
    """Merge ``entity_id<TAB>attr_name<TAB>attr_value`` rows into ``table``.

    ``entity_id`` is the raw id (as in the table's names).
    """
    index = {name: k for k, name in enumerate(table.names)}
    for lineno, line in _read_lines(path):
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields")
        if parts[0] not in index:
            raise DataError(f"{path}:{lineno}: unknown entity id {parts[0]!r}")
        table.add(index[parts[0]], parts[1], parts[2])
    return table


def _split_multi(value):
    return [v.strip() for v in value.split("|") if v.strip()]


def load_kkbox(path, max_rows=None):
    """Read KKBox ``train.csv`` / ``songs.csv`` / ``members.csv``.

    Rows of train.csv with ``target == 1`` become interactions (only the first
    ``max_rows`` data rows are read when given). Items carry genre, artist,
    composer and lyricist attributes; users carry age (``bd``, 0 = missing)
    and city.
    """
    train_path = os.path.join(path, "train.csv")
    songs_path = os.path.join(path, "songs.csv")
    members_path = os.path.join(path, "members.csv")
    for p in (train_path, songs_path, members_path):
        if not os.path.exists(p):
            raise DataError(f"missing file {p}")

    pairs = []
    with open(train_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"msno", "song_id"} - set(reader.fieldnames or [])
        if missing:
            raise DataError(f"{train_path}:1: missing columns {sorted(missing)}")
        for n, row in enumerate(reader):
            if max_rows is not None and n >= max_rows:
                break
            if row.get("target", "1") not in ("1", None):
                continue
            pairs.append((row["msno"], row["song_id"]))

    user_ids = sorted({u for u, _ in pairs})
    item_ids = sorted({i for _, i in pairs})
    user_index = {u: k for k, u in enumerate(user_ids)}
    item_index = {i: k for k, i in enumerate(item_ids)}
    users = AttributeTable(user_ids)
    items = AttributeTable(item_ids)

    with open(songs_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if "song_id" not in (reader.fieldnames or []):
            raise DataError(f"{songs_path}:1: missing column 'song_id'")
        for row in reader:
            k = item_index.get(row["song_id"])
            if k is None:
                continue
            for g in _split_multi(row.get("genre_ids") or ""):
                items.add(k, "genre", g)
            for col, attr in (("artist_name", "artist"), ("composer", "composer"), ("lyricist", "lyricist")):
                for v in _split_multi(row.get(col) or ""):
                    items.add(k, attr, v)

    with open(members_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if "msno" not in (reader.fieldnames or []):
            raise DataError(f"{members_path}:1: missing column 'msno'")
        for lineno, row in enumerate(reader, start=2):
            k = user_index.get(row["msno"])
            if k is None:
                continue
            bd = (row.get("bd") or "0").strip()
            try:
                age = int(bd)
            except ValueError:
                raise DataError(f"{members_path}:{lineno}: bad bd value {bd!r}") from None
            if 0 < age < 100:
                users.add(k, "age", age)
            if row.get("city"):
                users.add(k, "city", row["city"])

    graph = InteractionGraph(
        len(user_ids), len(item_ids),
        [user_index[u] for u, _ in pairs], [item_index[i] for _, i in pairs],
        user_names=user_ids, item_names=item_ids,
    )
    return graph, users, items


KKBOX_USER_SPECS = (RelationSpec("age", "numeric-bucket", 10), RelationSpec("city"))
KKBOX_ITEM_SPECS = (RelationSpec("genre"), RelationSpec("artist"), RelationSpec("composer"),
                    RelationSpec("lyricist"))


def build_shared_attribute_graph(table, specs):
    """Connect every pair of entities sharing a (bucketed) attribute value.

    One quad pair per shared value; relation types follow ``specs`` order.
    """
    specs = [s for s in specs if s.include]
    known = set(table.attributes())
    for s in specs:
        if s.attribute not in known:
            raise DataError(f"relation spec names unknown attribute {s.attribute!r}")

    type_names = [s.attribute for s in specs]
    value_names, value_type, chunks = [], [], []
    for t, spec in enumerate(specs):
        groups = {}
        for entity, row in enumerate(table.rows):
            for name, value in row:
                if name == spec.attribute:
                    groups.setdefault(spec.bucket(value), set()).add(entity)
        for value in sorted(groups, key=str):
            v = len(value_names)
            value_names.append(f"{spec.attribute}={value}")
            value_type.append(t)
            members = np.array(sorted(groups[value]), dtype=np.int64)
            if len(members) < 2:
                continue
            a, b = np.triu_indices(len(members), k=1)
            block = np.empty((len(a), 4), dtype=np.int64)
            block[:, 0] = members[a]
            block[:, 1] = t
            block[:, 2] = v
            block[:, 3] = members[b]
            chunks.append(block)

    graph = MultiRelGraph(len(table), type_names, value_names, value_type, entity_names=table.names)
    if chunks:
        graph.add_quads(np.concatenate(chunks))
    return graph


def entity_value_ids(table, graph, specs):
    """For each entity, the ids of its relation values in ``graph``'s vocabulary."""
    vocab = {name: k for k, name in enumerate(graph.value_names)}
    specs = [s for s in specs if s.include]
    out = []
    for row in table.rows:
        ids = []
        for spec in specs:
            for name, value in row:
                if name == spec.attribute:
                    key = f"{spec.attribute}={spec.bucket(value)}"
                    if key in vocab and vocab[key] not in ids:
                        ids.append(vocab[key])
        out.append(sorted(ids))
    return out


def split_interactions(graph, spec):
    """Leave-one-out split.

    Each user with at least two interactions loses the last one (by
    timestamp, then by listing order) to the test set. ``spec.n_negatives``
    never-interacted items are drawn per test case; 0 means none are drawn
    (full-catalog evaluation).
    """
    if spec.protocol != "leave-one-out":
        raise DataError(f"unsupported split protocol {spec.protocol!r}")
    n = graph.n_edges
    ts = graph.timestamps if graph.timestamps is not None else np.zeros(n, dtype=np.int64)
    order = np.lexsort((np.arange(n), ts, graph.users))
    users_sorted = graph.users[order]
    last = np.flatnonzero(np.r_[users_sorted[1:] != users_sorted[:-1], True])
    first = np.r_[0, last[:-1] + 1]
    counts = last - first + 1
    held = order[last[counts >= 2]]

    test_mask = np.zeros(n, dtype=bool)
    test_mask[held] = True
    train = graph.subgraph(~test_mask)

    rng = np.random.default_rng(spec.seed)
    seen = graph.user_item_sets()
    cases = []
    for e in sorted(held, key=lambda k: graph.users[k]):
        u, i = int(graph.users[e]), int(graph.items[e])
        negatives = []
        if spec.n_negatives > 0:
            available = graph.n_items - len(seen[u])
            if spec.n_negatives > available:
                raise DataError(
                    f"user {u}: {spec.n_negatives} negatives requested, only {available} available"
                )
            pool = np.setdiff1d(np.arange(graph.n_items), np.fromiter(seen[u], dtype=np.int64))
            negatives = [int(x) for x in rng.choice(pool, size=spec.n_negatives, replace=False)]
        cases.append(TestCase(u, i, negatives))
    return train, cases
