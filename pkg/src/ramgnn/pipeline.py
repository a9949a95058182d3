"""End-to-end orchestration: ingest, pre-train, fine-tune, evaluate, report."""
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import dump_config, eval_ks, finetune_params, pretrain_params
from .finetune import GraphRecommender, PopularityRecommender, write_recommendations
from .ingest import (DEFAULT_ITEM_SPECS, DEFAULT_USER_SPECS, KKBOX_ITEM_SPECS, KKBOX_USER_SPECS,
                     SplitSpec, build_shared_attribute_graph, entity_value_ids, load_aux_attributes,
                     load_kkbox, load_movielens, split_interactions)
from .metrics import evaluate_model
from .pretrain import RAMGNN, EmbeddingTable, load_embeddings, save_embeddings

log = logging.getLogger(__name__)

SIDES = ("user", "item")


@dataclass
class Dataset:
    interactions: object
    tables: dict
    graphs: dict
    values: dict
    train: object
    test_cases: list


@dataclass
class RunReport:
    config: dict
    seed: int
    mode: str
    random_init: bool
    dataset: dict = field(default_factory=dict)
    pretrain: dict = field(default_factory=dict)
    trajectories: list = field(default_factory=list)
    finetune: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    baseline: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        data["trajectories"] = [tuple(row) for row in data["trajectories"]]
        return cls(**data)


def _metric_dict(metrics):
    return {f"{name}@{k}": v for (name, k), v in sorted(metrics.items(), key=lambda kv: (kv[0][1], kv[0][0]))}


# -- stages ------------------------------------------------------------------

def ingest(cfg):
    data, ev = cfg["data"], cfg["eval"]
    if data["dataset"] == "movielens":
        interactions, users, items = load_movielens(data["path"])
        specs = {"user": DEFAULT_USER_SPECS, "item": DEFAULT_ITEM_SPECS}
    else:
        interactions, users, items = load_kkbox(data["path"], max_rows=data["max_rows"] or None)
        specs = {"user": KKBOX_USER_SPECS, "item": KKBOX_ITEM_SPECS}
    tables = {"user": users, "item": items}
    for side in SIDES:
        if data[f"{side}_aux"]:
            load_aux_attributes(data[f"{side}_aux"], tables[side])
    graphs = {side: build_shared_attribute_graph(tables[side], specs[side]) for side in SIDES}
    values = {side: entity_value_ids(tables[side], graphs[side], specs[side]) for side in SIDES}
    n_neg = ev["n_negatives"] if ev["protocol"] == "sampled" else 0
    train, cases = split_interactions(interactions, SplitSpec("leave-one-out", n_neg, cfg["run"]["seed"]))
    return Dataset(interactions, tables, graphs, values, train, cases)


def dataset_summary(ds):
    return {
        "n_users": ds.interactions.n_users,
        "n_items": ds.interactions.n_items,
        "n_interactions": ds.interactions.n_edges,
        "n_train": ds.train.n_edges,
        "n_test": len(ds.test_cases),
        "user_graph_quads": ds.graphs["user"].n_quads,
        "item_graph_quads": ds.graphs["item"].n_quads,
    }


def pretrain(cfg, ds):
    """Fitted RAMGNN per side, or None in "single" mode."""
    params = pretrain_params(cfg)
    if params is None:
        return None
    return {side: RAMGNN(**params).fit(ds.graphs[side]) for side in SIDES}


def finetune(cfg, ds, tables=None):
    """``tables`` maps side -> EmbeddingTable; None trains from random init."""
    tables = tables or {}
    return GraphRecommender(**finetune_params(cfg)).fit(
        ds.train, user_init=tables.get("user"), item_init=tables.get("item"),
        user_values=ds.values["user"], item_values=ds.values["item"])


def evaluate(cfg, ds, model):
    seen = ds.train.user_item_sets()
    return evaluate_model(model, ds.test_cases, eval_ks(cfg), cfg["eval"]["protocol"], exclude=seen)


def pretrain_section(models, graphs):
    section, rows = {}, []
    for side in SIDES:
        m = models[side]
        section[side] = {"loss": m.loss_curve_, "gnn_loss": m.gnn_loss_curve_, "sim_loss": m.sim_loss_curve_,
                         "k_final": {graphs[side].type_names[t]: a.k for t, a in m.bandit_.arms.items()},
                         "frozen_at": {graphs[side].type_names[t]: a.frozen_at for t, a in m.bandit_.arms.items()},
                         "frozen_by": {graphs[side].type_names[t]: a.frozen_by for t, a in m.bandit_.arms.items()}}
        for gamma, t, k, and_value in m.trajectory_:
            rows.append((gamma, f"{side}:{graphs[side].type_names[t]}", k, and_value))
    return section, rows


def run_pipeline(cfg):
    """Every stage in order.

    Returns (RunReport, fine-tuned model, dataset, pre-trained models or None).
    """
    mode = cfg["run"]["mode"]
    timings = {}
    t0 = time.perf_counter()
    ds = _stage("ingest", ingest, cfg)
    timings["ingest"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    models = _stage("pretrain", pretrain, cfg, ds)
    timings["pretrain"] = time.perf_counter() - t0
    tables = None if models is None else {side: models[side].embeddings_ for side in SIDES}

    t0 = time.perf_counter()
    rec = _stage("finetune", finetune, cfg, ds, tables)
    timings["finetune"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    metrics = _stage("evaluate", evaluate, cfg, ds, rec)
    baseline = evaluate(cfg, ds, PopularityRecommender().fit(ds.train))
    timings["evaluate"] = time.perf_counter() - t0

    report = RunReport(config=cfg, seed=cfg["run"]["seed"], mode=mode, random_init=not rec.pretrained_,
                       dataset=dataset_summary(ds), metrics=_metric_dict(metrics),
                       baseline={"popularity": _metric_dict(baseline)}, timings=timings)
    if models is not None:
        report.pretrain, report.trajectories = pretrain_section(models, ds.graphs)
    report.finetune = {"loss": rec.loss_curve_, "val_hr": rec.val_curve_, "best_epoch": rec.best_epoch_}
    return report, rec, ds, models


def _stage(name, fn, *args):
    """Run one stage, tagging any exception with the stage name."""
    try:
        return fn(*args)
    except Exception as exc:
        exc.stage = name
        raise


# -- persistence -------------------------------------------------------------

def write_report(report, out):
    """Write report.json, metrics.tsv and trajectory.tsv under ``out``."""
    os.makedirs(out, exist_ok=True)
    paths = {
        "json": os.path.join(out, "report.json"),
        "metrics": os.path.join(out, "metrics.tsv"),
        "trajectory": os.path.join(out, "trajectory.tsv"),
    }
    with open(paths["json"], "w") as fh:
        fh.write(report.to_json() + "\n")
    write_metrics_tsv(paths["metrics"], report.metrics)
    write_trajectory_tsv(paths["trajectory"], report.trajectories)
    return paths


def write_metrics_tsv(path, metrics):
    with open(path, "w") as fh:
        fh.write("metric\tK\tvalue\n")
        for key, value in metrics.items():
            name, k = key.split("@")
            fh.write(f"{name}\t{k}\t{value!r}\n")


def write_trajectory_tsv(path, rows):
    with open(path, "w") as fh:
        fh.write("gamma\trel_type\tk_t\tAND\n")
        for gamma, rel, k, and_value in rows:
            fh.write(f"{gamma}\t{rel}\t{k}\t{and_value!r}\n")


def read_report(path):
    with open(path) as fh:
        return RunReport.from_json(fh.read())


def save_config(cfg, out):
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.ini"), "w") as fh:
        fh.write(dump_config(cfg))


def save_pretrained(models, out):
    os.makedirs(os.path.join(out, "pretrain"), exist_ok=True)
    for side, m in models.items():
        m.embeddings_.save(os.path.join(out, "pretrain", side))


def load_pretrained(out):
    prefix = os.path.join(out, "pretrain")
    return {side: EmbeddingTable.load(os.path.join(prefix, side)) for side in SIDES}


def save_states(model, out):
    os.makedirs(os.path.join(out, "finetune"), exist_ok=True)
    save_embeddings(os.path.join(out, "finetune", "user.state.emb"), "user_state", model.user_states_)
    save_embeddings(os.path.join(out, "finetune", "item.state.emb"), "item_state", model.item_states_)


class StateScorer:
    """Inner-product scorer over saved final user/item states."""

    def __init__(self, user_states, item_states):
        self.user_states_ = np.asarray(user_states)
        self.item_states_ = np.asarray(item_states)

    @classmethod
    def load(cls, out):
        _, u = load_embeddings(os.path.join(out, "finetune", "user.state.emb"))
        _, i = load_embeddings(os.path.join(out, "finetune", "item.state.emb"))
        return cls(u, i)

    def score_items(self, users):
        return self.user_states_[np.asarray(users, dtype=np.int64)] @ self.item_states_.T


def dump_recommendations(cfg, ds, model, out):
    path = os.path.join(out, "recommendations.tsv")
    write_recommendations(path, model, range(ds.train.n_users), cfg["eval"]["topk_dump"])
    return path
