"""INI-style run configuration with strict key checking and ``--set`` overrides."""
from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass

from .data import Dataset, SbmSpec, generate_sbm, load_dataset
from .errors import ConfigError
from .trainer import StackConfig

# section -> key -> default (as text, exactly as it would appear in a file)
DEFAULTS = {
    "train": {
        "hidden": "128,64",
        "eta": "1000.0",
        "epochs": "5",
        "inner_iters": "",
        "inner_passes": "1",
        "batch_size": "128",
        "lr": "0.001",
        "loss_kind": "gae",
        "prop_kind": "gcn_first_order",
        "prop_m": "",
        "prop_alpha": "",
        "activations": "",
        "seed": "0",
        "bt_rounds": "5",
        "optimizer": "adam",
        "weight_decay": "0.0",
        "psi": "identity",
    },
    "dataset": {
        "source": "sbm",
        "graph": "",
        "features": "",
        "labels": "",
        "split": "",
        "sbm_blocks": "4",
        "sbm_nodes_per_block": "250",
        "sbm_p_in": "0.1",
        "sbm_p_out": "0.01",
        "sbm_feature_dim": "32",
        "sbm_feature_noise": "1.0",
        "sbm_seed": "0",
    },
    "eval": {
        "task": "clustering",
        "kmeans_restarts": "10",
        "kmeans_seed": "0",
    },
    "bench": {
        "sizes": "1000,10000",
        "epochs": "1",
        "bt_rounds": "1",
        "eta_grid": "1e-5,1e-3,1e-1,1e1,1e3,1e5",
    },
    "theory": {
        "trials": "100",
        "n": "60",
        "d": "20",
        "k": "8",
        "seed": "0",
        "regimes": "theorem1,theorem2,corollary_lowrank",
    },
}


def _int(v, key):
    try:
        return int(v)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {v!r}") from None


def _float(v, key):
    try:
        return float(v)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {v!r}") from None


def _list(v):
    return [t.strip() for t in v.split(",") if t.strip()]


@dataclass
class RunConfig:
    values: dict  # section -> key -> text

    def get(self, section: str, key: str) -> str:
        return self.values[section][key]

    def int(self, section, key):
        return _int(self.get(section, key), f"{section}.{key}")

    def float(self, section, key):
        return _float(self.get(section, key), f"{section}.{key}")

    def opt_int(self, section, key):
        v = self.get(section, key)
        return _int(v, f"{section}.{key}") if v else None

    def opt_float(self, section, key):
        v = self.get(section, key)
        return _float(v, f"{section}.{key}") if v else None

    def stack_config(self, input_dim: int) -> StackConfig:
        hidden = [_int(t, "train.hidden") for t in _list(self.get("train", "hidden"))]
        if not hidden:
            raise ConfigError("train.hidden must list at least one module width")
        cfg = StackConfig(
            dims=[input_dim] + hidden,
            eta=self.float("train", "eta"),
            epochs=self.int("train", "epochs"),
            inner_iters=self.opt_int("train", "inner_iters"),
            inner_passes=self.int("train", "inner_passes"),
            batch_size=self.int("train", "batch_size"),
            lr=self.float("train", "lr"),
            loss_kind=self.get("train", "loss_kind"),
            prop_kind=self.get("train", "prop_kind"),
            prop_m=self.opt_int("train", "prop_m"),
            prop_alpha=self.opt_float("train", "prop_alpha"),
            activations=_list(self.get("train", "activations")) or None,
            seed=self.int("train", "seed"),
            bt_rounds=self.int("train", "bt_rounds"),
            optimizer=self.get("train", "optimizer"),
            weight_decay=self.float("train", "weight_decay"),
            psi=self.get("train", "psi"),
        )
        cfg.validate()
        return cfg

    def sbm_spec(self) -> SbmSpec:
        spec = SbmSpec(
            blocks=self.int("dataset", "sbm_blocks"),
            nodes_per_block=self.int("dataset", "sbm_nodes_per_block"),
            p_in=self.float("dataset", "sbm_p_in"),
            p_out=self.float("dataset", "sbm_p_out"),
            feature_dim=self.int("dataset", "sbm_feature_dim"),
            feature_noise=self.float("dataset", "sbm_feature_noise"),
            seed=self.int("dataset", "sbm_seed"),
        )
        try:
            spec.validate()
        except ValueError as exc:
            raise ConfigError(f"dataset: {exc}") from None
        return spec

    def dataset(self) -> Dataset:
        source = self.get("dataset", "source")
        if source == "sbm":
            return generate_sbm(self.sbm_spec())
        if source != "files":
            raise ConfigError(f"dataset.source must be 'sbm' or 'files', got {source!r}")
        graph, feats = self.get("dataset", "graph"), self.get("dataset", "features")
        if not graph or not feats:
            raise ConfigError("dataset.graph and dataset.features are required when source = files")
        return load_dataset(graph, feats, self.get("dataset", "labels") or None,
                            self.get("dataset", "split") or None)

    def resolved_text(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        for section, kv in self.values.items():
            parser[section] = kv
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    def config_hash(self) -> str:
        return hashlib.sha256(self.resolved_text().encode("utf-8")).hexdigest()


def _apply(values: dict, section: str, key: str, value: str, origin: str) -> None:
    if section not in values:
        raise ConfigError(f"{origin}: unknown section [{section}]")
    if key not in values[section]:
        raise ConfigError(f"{origin}: unknown key {key!r} in [{section}]")
    values[section][key] = value.strip()


def parse_override(text: str) -> tuple[str, str, str]:
    """``section.key=value`` or ``key=value`` (the key must then be unambiguous)."""
    name, sep, value = text.partition("=")
    if not sep:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    name = name.strip()
    if "." in name:
        section, key = name.split(".", 1)
        return section, key, value
    owners = [s for s, kv in DEFAULTS.items() if name in kv]
    if len(owners) != 1:
        where = "no section" if not owners else f"sections {owners}"
        raise ConfigError(f"override key {name!r} matches {where}; write section.key")
    return owners[0], name, value


def load_config(path=None, overrides=(), seed=None) -> RunConfig:
    values = {s: dict(kv) for s, kv in DEFAULTS.items()}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        for section in parser.sections():
            for key, value in parser[section].items():
                _apply(values, section, key, value, str(path))
    for text in overrides:
        section, key, value = parse_override(text)
        _apply(values, section, key, value, "--set")
    if seed is not None:
        values["train"]["seed"] = str(int(seed))
    return RunConfig(values)
