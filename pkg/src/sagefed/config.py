"""Declarative run configuration: parsing, validation, and sweep grids.

Config files are JSON. Validation collects every violation with a dotted
path before failing, so a bad file is reported in one pass. Defaults fill
any omitted hyperparameter; only ``strategy``, ``rounds``, and ``seed``
are required.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field

from . import __version__
from .data import AugmentConfig, PartitionConfig, SyntheticTaskSpec
from .federation import ExperimentConfig, Strategy
from .model import ModelSpec
from .pseudo import CorrectionConfig
from .seeding import derive_seed

REQUIRED_KEYS = ("strategy", "rounds", "seed")

DEFAULTS = {
    "clients_per_round": 8,
    "local_epochs": 5,
    "learning_rate": 0.1,
    "unsup_weight": 1.0,
    "batch_size_labeled": 16,
    "batch_size_unlabeled": 64,
    "tau": 0.95,
    "kappa": 13.86,
    "oracle_filter": False,
    "num_clients": 20,
    "dirichlet_alpha": 0.1,
    "label_fraction": 0.1,
    "test_per_class": 40,
}

TASK_DEFAULTS = {
    "classes": 10,
    "input_dim": 10,
    "samples_per_class": 120,
    "class_separation": 1.5,
    "noise_scale": 1.0,
}

MODEL_DEFAULTS = {
    "hidden_dims": [32],
    "activation": "tanh",
}

_STRATEGIES = tuple(s.value for s in Strategy)


class ConfigError(ValueError):
    """Raised for invalid config text; ``errors`` lists every violation."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_real(v):
    return _is_int(v) or isinstance(v, float)


class _Checker:
    def __init__(self, data, prefix=""):
        self.data = data
        self.prefix = prefix
        self.errors = []

    def fail(self, key, msg):
        self.errors.append(f"{self.prefix}{key}: {msg}")

    def unknown_keys(self, allowed):
        for key in sorted(set(self.data) - set(allowed)):
            self.fail(key, "unknown key")

    def get(self, key, default=None):
        return self.data.get(key, default)

    def require(self, key):
        if key not in self.data:
            self.fail(key, "required")
            return None
        return self.data[key]

    def int_at_least(self, key, default, lo):
        v = self.get(key, default)
        if not _is_int(v):
            self.fail(key, "must be an integer")
            return default
        if v < lo:
            self.fail(key, f"must be >= {lo}")
            return default
        return v

    def real_in(self, key, default, lo, hi, lo_open=False, hi_open=False):
        v = self.get(key, default)
        if not _is_real(v):
            self.fail(key, "must be a number")
            return default
        low_ok = v > lo if lo_open else v >= lo
        high_ok = v < hi if hi_open else v <= hi
        if not (low_ok and high_ok):
            left = "(" if lo_open else "["
            right = ")" if hi_open else "]"
            self.fail(key, f"must be in {left}{lo}, {hi}{right}")
            return default
        return float(v)


def _check_top(data):
    c = _Checker(data)
    c.unknown_keys(
        REQUIRED_KEYS + tuple(DEFAULTS) + ("task", "model")
    )

    strategy = c.require("strategy")
    if strategy is not None and strategy not in _STRATEGIES:
        c.fail("strategy", f"must be one of {', '.join(_STRATEGIES)}")
        strategy = None

    rounds = c.require("rounds")
    if rounds is not None and (not _is_int(rounds) or rounds < 1):
        c.fail("rounds", "must be an integer >= 1")
        rounds = None

    seed = c.require("seed")
    if seed is not None and (not _is_int(seed) or seed < 0):
        c.fail("seed", "must be an integer >= 0")
        seed = None

    vals = {
        "strategy": strategy,
        "rounds": rounds,
        "seed": seed,
        "clients_per_round": c.int_at_least("clients_per_round", DEFAULTS["clients_per_round"], 1),
        "local_epochs": c.int_at_least("local_epochs", DEFAULTS["local_epochs"], 1),
        "learning_rate": c.real_in("learning_rate", DEFAULTS["learning_rate"], 0.0, float("inf"), lo_open=True),
        "unsup_weight": c.real_in("unsup_weight", DEFAULTS["unsup_weight"], 0.0, float("inf")),
        "batch_size_labeled": c.int_at_least("batch_size_labeled", DEFAULTS["batch_size_labeled"], 1),
        "batch_size_unlabeled": c.int_at_least("batch_size_unlabeled", DEFAULTS["batch_size_unlabeled"], 1),
        "tau": c.real_in("tau", DEFAULTS["tau"], 0.0, 1.0, lo_open=True, hi_open=True),
        "kappa": c.real_in("kappa", DEFAULTS["kappa"], 0.0, float("inf")),
        "num_clients": c.int_at_least("num_clients", DEFAULTS["num_clients"], 1),
        "dirichlet_alpha": c.real_in("dirichlet_alpha", DEFAULTS["dirichlet_alpha"], 0.0, float("inf"), lo_open=True),
        # label_fraction capped at 0.5 so no shard's labeled pool can outgrow its
        # unlabeled pool
        "label_fraction": c.real_in("label_fraction", DEFAULTS["label_fraction"], 0.0, 0.5, lo_open=True),
        "test_per_class": c.int_at_least("test_per_class", DEFAULTS["test_per_class"], 1),
    }

    oracle = c.get("oracle_filter", DEFAULTS["oracle_filter"])
    if not isinstance(oracle, bool):
        c.fail("oracle_filter", "must be true or false")
        oracle = False
    vals["oracle_filter"] = oracle

    return vals, c.errors


def _check_task(data):
    c = _Checker(data, prefix="task.")
    c.unknown_keys(TASK_DEFAULTS)
    vals = {
        "classes": c.int_at_least("classes", TASK_DEFAULTS["classes"], 2),
        "input_dim": c.int_at_least("input_dim", TASK_DEFAULTS["input_dim"], 1),
        "samples_per_class": c.int_at_least("samples_per_class", TASK_DEFAULTS["samples_per_class"], 1),
        "class_separation": c.real_in("class_separation", TASK_DEFAULTS["class_separation"], 0.0, float("inf"), lo_open=True),
        "noise_scale": c.real_in("noise_scale", TASK_DEFAULTS["noise_scale"], 0.0, float("inf"), lo_open=True),
    }
    return vals, c.errors


def _check_model(data):
    c = _Checker(data, prefix="model.")
    c.unknown_keys(MODEL_DEFAULTS)
    hidden = c.get("hidden_dims", MODEL_DEFAULTS["hidden_dims"])
    if not isinstance(hidden, list) or any(not _is_int(h) or h < 1 for h in hidden):
        c.fail("hidden_dims", "must be a list of integers >= 1")
        hidden = MODEL_DEFAULTS["hidden_dims"]
    activation = c.get("activation", MODEL_DEFAULTS["activation"])
    if activation not in ("tanh", "relu"):
        c.fail("activation", "must be 'tanh' or 'relu'")
        activation = MODEL_DEFAULTS["activation"]
    return {"hidden_dims": list(hidden), "activation": activation}, c.errors


def build_config(data):
    """Validate a parsed config dict and build the ExperimentConfig.

    Raises ConfigError listing every violation with its dotted path.
    """
    if not isinstance(data, dict):
        raise ConfigError(["config: top level must be a JSON object"])

    top, errors = _check_top(data)

    task_raw = data.get("task", {})
    if not isinstance(task_raw, dict):
        errors.append("task: must be an object")
        task_raw = {}
    task_vals, task_errors = _check_task(task_raw)
    errors.extend(task_errors)

    model_raw = data.get("model", {})
    if not isinstance(model_raw, dict):
        errors.append("model: must be an object")
        model_raw = {}
    model_vals, model_errors = _check_model(model_raw)
    errors.extend(model_errors)

    if not errors:
        if top["clients_per_round"] > top["num_clients"]:
            errors.append("clients_per_round: must be <= num_clients")
        labeled_per_class = round(top["label_fraction"] * task_vals["samples_per_class"])
        if labeled_per_class < 1:
            errors.append("label_fraction: rounds to zero labeled samples per class")
        elif labeled_per_class * task_vals["classes"] < top["num_clients"]:
            errors.append(
                "label_fraction: total labeled samples must be >= num_clients "
                "so every client can hold at least one"
            )

    if errors:
        raise ConfigError(errors)

    task = SyntheticTaskSpec(
        classes=task_vals["classes"],
        input_dim=task_vals["input_dim"],
        samples_per_class=task_vals["samples_per_class"],
        class_separation=task_vals["class_separation"],
        noise_scale=task_vals["noise_scale"],
    )
    partition = PartitionConfig(
        num_clients=top["num_clients"],
        dirichlet_alpha=top["dirichlet_alpha"],
        label_fraction=top["label_fraction"],
        seed=derive_seed(top["seed"], "partition"),
        classes=task.classes,
        samples_per_class=task.samples_per_class,
    )
    model = ModelSpec(
        input_dim=task.input_dim,
        hidden_dims=tuple(model_vals["hidden_dims"]),
        num_classes=task.classes,
        activation=model_vals["activation"],
    )
    return ExperimentConfig(
        strategy=Strategy(top["strategy"]),
        rounds=top["rounds"],
        seed=top["seed"],
        clients_per_round=top["clients_per_round"],
        local_epochs=top["local_epochs"],
        learning_rate=top["learning_rate"],
        mu_u=top["unsup_weight"],
        correction=CorrectionConfig(tau=top["tau"], kappa=top["kappa"]),
        batch_size_s=top["batch_size_labeled"],
        batch_size_u=top["batch_size_unlabeled"],
        task=task,
        partition=partition,
        model=model,
        augment=AugmentConfig.for_feature_scale(task.class_separation),
        test_per_class=top["test_per_class"],
        oracle_filter=top["oracle_filter"],
    )


def parse_config_text(text):
    """Parse JSON config text into a dict, mapping empty text to {}."""
    if not text.strip():
        return {}
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config: invalid JSON: {exc}"]) from exc
    return data


def validate_config(text):
    """Parse and validate config text; returns the ExperimentConfig."""
    return build_config(parse_config_text(text))


def resolved_dict(data):
    """The fully-defaulted surface form of a config dict.

    Canonical input for fingerprinting: two configs that resolve to the
    same runtime behavior produce the same dict.
    """
    build_config(data)  # reject invalid input before resolving
    out = {key: data.get(key, DEFAULTS.get(key)) for key in DEFAULTS}
    for key in REQUIRED_KEYS:
        out[key] = data[key]
    task_raw = data.get("task", {})
    out["task"] = {k: task_raw.get(k, v) for k, v in TASK_DEFAULTS.items()}
    model_raw = data.get("model", {})
    out["model"] = {k: model_raw.get(k, v) for k, v in MODEL_DEFAULTS.items()}
    return out


def config_fingerprint(data):
    """Hex digest identifying the resolved config and code version."""
    canonical = json.dumps(resolved_dict(data), sort_keys=True, separators=(",", ":"))
    payload = f"{__version__}\n{canonical}".encode()
    return hashlib.sha256(payload).hexdigest()


_AXIS_PATHS = (
    tuple(k for k in DEFAULTS if k != "oracle_filter")
    + ("strategy", "rounds", "oracle_filter")
    + tuple(f"task.{k}" for k in TASK_DEFAULTS)
    + tuple(f"model.{k}" for k in MODEL_DEFAULTS)
)


def _apply_axis(data, path, value):
    out = dict(data)
    if "." in path:
        group, key = path.split(".", 1)
        sub = dict(out.get(group, {}))
        sub[key] = value
        out[group] = sub
    else:
        out[path] = value
    return out


@dataclass(frozen=True)
class SweepSpec:
    """A grid of runs: base config x axis values x seeded repeats."""

    base: dict
    axes: tuple  # ((path, (value, ...)), ...) in file order
    repeats: int = 1
    cap: int = 128
    accuracy_threshold: float | None = None
    reference_strategy: str = "lpl"

    def cells(self):
        """Yield assignment tuples ((path, value), ...), one per grid cell."""
        paths = [p for p, _ in self.axes]
        for combo in itertools.product(*(vals for _, vals in self.axes)):
            yield tuple(zip(paths, combo))

    def cell_data(self, assignments, repeat):
        """The raw config dict for one cell and repeat.

        Repeat r of every cell shares the seed derived from the base seed,
        so cells are paired across the grid.
        """
        data = self.base
        for path, value in assignments:
            data = _apply_axis(data, path, value)
        return _apply_axis(data, "seed", derive_seed(self.base["seed"], "repeat", repeat))

    def cell_config(self, assignments, repeat):
        return build_config(self.cell_data(assignments, repeat))


def parse_sweep(text):
    """Parse and validate sweep JSON; returns a SweepSpec.

    Every cell config is validated eagerly so a bad axis value fails at
    parse time rather than mid-sweep.
    """
    if not text.strip():
        raise ConfigError(["sweep: empty file"])
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"sweep: invalid JSON: {exc}"]) from exc
    if not isinstance(data, dict):
        raise ConfigError(["sweep: top level must be a JSON object"])

    errors = []
    for key in sorted(set(data) - {"base", "axes", "repeats", "cap", "accuracy_threshold", "reference_strategy"}):
        errors.append(f"sweep.{key}: unknown key")

    base = data.get("base")
    if not isinstance(base, dict):
        errors.append("sweep.base: required object")
        base = None
    else:
        try:
            build_config(base)
        except ConfigError as exc:
            errors.extend(f"sweep.base.{e}" for e in exc.errors)

    axes_raw = data.get("axes", {})
    axes = []
    if not isinstance(axes_raw, dict):
        errors.append("sweep.axes: must be an object mapping config paths to value lists")
    else:
        for path, values in axes_raw.items():
            if path not in _AXIS_PATHS:
                errors.append(f"sweep.axes.{path}: not a sweepable config path")
            elif not isinstance(values, list) or not values:
                errors.append(f"sweep.axes.{path}: must be a non-empty list")
            else:
                axes.append((path, tuple(values)))

    repeats = data.get("repeats", 1)
    if not _is_int(repeats) or repeats < 1:
        errors.append("sweep.repeats: must be an integer >= 1")
        repeats = 1
    cap = data.get("cap", 128)
    if not _is_int(cap) or cap < 1:
        errors.append("sweep.cap: must be an integer >= 1")
        cap = 128

    threshold = data.get("accuracy_threshold")
    if threshold is not None and not (_is_real(threshold) and 0.0 < threshold <= 1.0):
        errors.append("sweep.accuracy_threshold: must be a number in (0, 1]")
        threshold = None

    reference = data.get("reference_strategy", "lpl")
    if reference not in _STRATEGIES:
        errors.append(f"sweep.reference_strategy: must be one of {', '.join(_STRATEGIES)}")
        reference = "lpl"

    if not errors and base is not None:
        n_cells = 1
        for _, values in axes:
            n_cells *= len(values)
        if n_cells * repeats > cap:
            errors.append(f"sweep: grid size {n_cells} x {repeats} repeats exceeds cap {cap}")

    spec = None
    if not errors and base is not None:
        spec = SweepSpec(
            base=base,
            axes=tuple(axes),
            repeats=repeats,
            cap=cap,
            accuracy_threshold=threshold,
            reference_strategy=reference,
        )
        for assignments in spec.cells():
            try:
                spec.cell_config(assignments, 0)
            except ConfigError as exc:
                cell = ", ".join(f"{p}={v}" for p, v in assignments)
                errors.extend(f"sweep cell [{cell}]: {e}" for e in exc.errors)
                break

    if errors:
        raise ConfigError(errors)
    return spec
