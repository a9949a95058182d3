"""Run configuration: INI files with one section per pipeline stage.

Every key has a default; unknown sections or keys are rejected so that a typo
never silently falls back to a default.
"""
import configparser
import copy

MODES = ("full", "single", "rns-only", "rel-only")
DATASETS = ("movielens", "kkbox")

DEFAULTS = {
    "run": {"mode": "full", "seed": 0},
    "data": {"dataset": "movielens", "path": "data/ml-100k", "max_rows": 10000,
             "user_aux": "", "item_aux": ""},
    "model": {"dim": 64},
    "pretrain": {"n_layers": 2, "composition": "corr", "n_negatives": 5, "lambda_sim": 0.1,
                 "lambda_reg": 1e-5, "lr": 1e-3, "epochs": 200, "k_init": 5, "eps": 2,
                 "gamma_max": 200},
    "finetune": {"n_layers": 4, "lr": 1e-3, "lambda_reg": 1e-5, "batch_size": 1024,
                 "epochs": 200, "patience": 20, "eval_k": 20},
    "eval": {"protocol": "sampled", "n_negatives": 99, "ks": "10,20", "topk_dump": 20},
}

# pretrain switches implied by each mode
MODE_SETTINGS = {
    "full": {"attention": True, "sampler": "rns"},
    "rns-only": {"attention": False, "sampler": "rns"},
    "rel-only": {"attention": True, "sampler": "random"},
    "single": None,
}


class ConfigError(ValueError):
    pass


def _coerce(section, key, raw, default):
    try:
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {type(default).__name__}") from None
    return raw


def default_config():
    return copy.deepcopy(DEFAULTS)


def validate(cfg):
    run, data, ev = cfg["run"], cfg["data"], cfg["eval"]
    if run["mode"] not in MODES:
        raise ConfigError(f"[run] mode: {run['mode']!r} not in {MODES}")
    if data["dataset"] not in DATASETS:
        raise ConfigError(f"[data] dataset: {data['dataset']!r} not in {DATASETS}")
    if cfg["model"]["dim"] < 2 or cfg["model"]["dim"] % 2:
        raise ConfigError("[model] dim must be a positive even integer")
    if cfg["pretrain"]["composition"] not in ("add", "mul", "corr"):
        raise ConfigError(f"[pretrain] composition: {cfg['pretrain']['composition']!r} not in add/mul/corr")
    if ev["protocol"] not in ("sampled", "full"):
        raise ConfigError(f"[eval] protocol: {ev['protocol']!r} not in sampled/full")
    try:
        ks = [int(k) for k in str(ev["ks"]).split(",") if k.strip()]
    except ValueError:
        raise ConfigError(f"[eval] ks: {ev['ks']!r} is not a comma-separated list of integers") from None
    if not ks or min(ks) < 1:
        raise ConfigError("[eval] ks must list positive cutoffs")
    for section in ("pretrain", "finetune"):
        for key in ("epochs", "n_layers"):
            if cfg[section][key] < 1:
                raise ConfigError(f"[{section}] {key} must be >= 1")
    return cfg


def load_config(path=None, overrides=None):
    """Defaults updated from the INI file at ``path`` and then from ``overrides``.

    ``overrides`` maps ``"section.key"`` to a value (strings are parsed).
    """
    cfg = default_config()
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for section in parser.sections():
            if section not in cfg:
                raise ConfigError(f"{path}: unknown section [{section}]")
            for key, raw in parser.items(section):
                if key not in cfg[section]:
                    raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
                cfg[section][key] = _coerce(section, key, raw, DEFAULTS[section][key])
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if section not in cfg or key not in cfg[section]:
            raise ConfigError(f"unknown config key {dotted!r}")
        cfg[section][key] = _coerce(section, key, str(value), DEFAULTS[section][key])
    return validate(cfg)


def eval_ks(cfg):
    return tuple(int(k) for k in str(cfg["eval"]["ks"]).split(",") if k.strip())


def pretrain_params(cfg):
    """Keyword arguments for :class:`~ramgnn.pretrain.RAMGNN` under the configured mode."""
    switches = MODE_SETTINGS[cfg["run"]["mode"]]
    if switches is None:
        return None
    params = dict(cfg["pretrain"], dim=cfg["model"]["dim"], seed=cfg["run"]["seed"])
    params.update(switches)
    return params


def finetune_params(cfg):
    return dict(cfg["finetune"], dim=cfg["model"]["dim"], seed=cfg["run"]["seed"],
                eval_protocol=cfg["eval"]["protocol"], n_eval_negatives=cfg["eval"]["n_negatives"])


def dump_config(cfg):
    """INI text for ``cfg`` (round-trips through :func:`load_config`)."""
    lines = []
    for section, values in cfg.items():
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {str(v).lower() if isinstance(v, bool) else v}" for k, v in values.items())
        lines.append("")
    return "\n".join(lines)
