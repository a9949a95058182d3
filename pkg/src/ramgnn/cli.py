"""Command-line entry point: ``ramgnn <stage> --config run.ini --out runs/x``."""
import argparse
import json
import logging
import os
import sys
import time

from threadpoolctl import threadpool_limits

from . import pipeline
from .config import ConfigError, load_config
from .graph import GraphError
from .ingest import DataError
from .pretrain import TrainingDivergence

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED, EXIT_FAILED = 0, 2, 3, 4, 1

log = logging.getLogger("ramgnn")


def _parser():
    p = argparse.ArgumentParser(prog="ramgnn", description="Multi-relational GNN pre-training for recommendation.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("ingest", "load the dataset and write the attribute graphs"),
        ("pretrain", "pre-train user and item embeddings"),
        ("finetune", "fine-tune on interactions (reads <out>/pretrain unless --mode single)"),
        ("evaluate", "score the fine-tuned states in <out>/finetune"),
        ("run", "every stage, then write the report"),
        ("report", "print <out>/report.json and rewrite its TSV files"),
    ]:
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config", help="INI file; missing keys take their defaults")
        s.add_argument("--seed", type=int)
        s.add_argument("--out", default="runs/latest", help="output directory")
        s.add_argument("--mode", choices=["full", "single", "rns-only", "rel-only"])
        s.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config key (repeatable)")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _config(args):
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["run.seed"] = args.seed
    if args.mode is not None:
        overrides["run.mode"] = args.mode
    return load_config(args.config, overrides)


def cmd_ingest(cfg, out):
    ds = pipeline.ingest(cfg)
    os.makedirs(out, exist_ok=True)
    for side in pipeline.SIDES:
        ds.graphs[side].save(os.path.join(out, f"{side}_graph.quads"))
    summary = pipeline.dataset_summary(ds)
    with open(os.path.join(out, "dataset.json"), "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
    print(json.dumps(summary, sort_keys=True))


def cmd_pretrain(cfg, out):
    ds = pipeline.ingest(cfg)
    models = pipeline.pretrain(cfg, ds)
    if models is None:
        raise ConfigError("mode 'single' skips pre-training")
    pipeline.save_pretrained(models, out)
    section, rows = pipeline.pretrain_section(models, ds.graphs)
    with open(os.path.join(out, "pretrain.json"), "w") as fh:
        json.dump(section, fh, indent=1, sort_keys=True)
    pipeline.write_trajectory_tsv(os.path.join(out, "trajectory.tsv"), rows)
    for side in pipeline.SIDES:
        print(f"{side}: final loss {section[side]['loss'][-1]:.4f}, k = {section[side]['k_final']}")


def cmd_finetune(cfg, out):
    ds = pipeline.ingest(cfg)
    tables = None
    if cfg["run"]["mode"] != "single":
        try:
            tables = pipeline.load_pretrained(out)
        except (OSError, ValueError) as exc:
            raise DataError(f"no pre-trained embeddings under {out}/pretrain ({exc}); run 'pretrain' first") from None
    rec = pipeline.finetune(cfg, ds, tables)
    pipeline.save_states(rec, out)
    pipeline.dump_recommendations(cfg, ds, rec, out)
    with open(os.path.join(out, "finetune.json"), "w") as fh:
        json.dump({"loss": rec.loss_curve_, "val_hr": rec.val_curve_, "best_epoch": rec.best_epoch_,
                   "random_init": not rec.pretrained_}, fh, indent=1, sort_keys=True)
    print(f"best epoch {rec.best_epoch_}, validation HR@{rec.eval_k} {max(rec.val_curve_):.4f}")


def cmd_evaluate(cfg, out):
    ds = pipeline.ingest(cfg)
    try:
        scorer = pipeline.StateScorer.load(out)
    except (OSError, ValueError) as exc:
        raise DataError(f"no fine-tuned states under {out}/finetune ({exc}); run 'finetune' first") from None
    metrics = pipeline._metric_dict(pipeline.evaluate(cfg, ds, scorer))
    pipeline.write_metrics_tsv(os.path.join(out, "metrics.tsv"), metrics)
    _print_metrics(metrics)


def cmd_run(cfg, out):
    report, rec, ds, _ = pipeline.run_pipeline(cfg)
    pipeline.save_config(cfg, out)
    pipeline.write_report(report, out)
    pipeline.dump_recommendations(cfg, ds, rec, out)
    _print_metrics(report.metrics)
    pop = report.baseline["popularity"]
    print("popularity: " + "  ".join(f"{k} {v:.4f}" for k, v in pop.items() if k.startswith("HR")))


def cmd_report(cfg, out):
    path = os.path.join(out, "report.json")
    try:
        report = pipeline.read_report(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    pipeline.write_metrics_tsv(os.path.join(out, "metrics.tsv"), report.metrics)
    pipeline.write_trajectory_tsv(os.path.join(out, "trajectory.tsv"), report.trajectories)
    print(f"mode={report.mode} seed={report.seed} random_init={report.random_init}")
    _print_metrics(report.metrics)


def _print_metrics(metrics):
    for key, value in metrics.items():
        print(f"{key}\t{value:.4f}")


COMMANDS = {"ingest": cmd_ingest, "pretrain": cmd_pretrain, "finetune": cmd_finetune,
            "evaluate": cmd_evaluate, "run": cmd_run, "report": cmd_report}


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    threads = os.environ.get("RAMGNN_THREADS")
    try:
        limit = int(threads) if threads else None
        if limit is not None and limit < 1:
            raise ValueError
    except ValueError:
        print(f"error: RAMGNN_THREADS must be a positive integer, got {threads!r}", file=sys.stderr)
        return EXIT_CONFIG
    stage = args.command
    try:
        cfg = _config(args)
        start = time.perf_counter()
        with threadpool_limits(limits=limit):
            COMMANDS[args.command](cfg, args.out)
        log.info("%s finished in %.1fs", args.command, time.perf_counter() - start)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, GraphError) as exc:
        print(f"data error in stage {getattr(exc, 'stage', stage)}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDivergence as exc:
        print(f"training diverged in stage {getattr(exc, 'stage', stage)}: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"error in stage {getattr(exc, 'stage', stage)}: {exc}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
