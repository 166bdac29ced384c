"""Run configuration: one JSON file drives a whole run."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

from .hetgraph import SyntheticSpec
from .objective import LossWeights
from .trainer import TuneConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    dataset_path: str | None
    synthetic: SyntheticSpec | None
    d: int
    pretrain_epochs: int
    tune: TuneConfig
    out_dir: str

    def resolved(self) -> dict:
        ds = ({"path": self.dataset_path} if self.dataset_path
              else {"synthetic": asdict(self.synthetic)})
        t = asdict(self.tune)
        weights = t.pop("weights")
        return {
            "dataset": ds,
            "encoder": {"d": self.d, "pretrain_epochs": self.pretrain_epochs},
            "adapter": {k: t[k] for k in
                        ("dprime", "t", "tprime", "k", "alpha", "beta")},
            "objective": {**weights, "rec_sample": t["rec_sample"],
                          "include_con": t["include_con"],
                          "margin_variant": t["margin_variant"]},
            "trainer": {k: t[k] for k in
                        ("lr", "epochs", "seed", "structure_refresh")},
            "out_dir": self.out_dir,
        }

    def fingerprint(self) -> str:
        resolved = self.resolved()
        resolved.pop("out_dir")  # identifies the run, not where it lands
        blob = json.dumps(resolved, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def load_or_generate_graph(self):
        from .hetgraph import generate_synthetic, load_graph

        if self.dataset_path:
            return load_graph(self.dataset_path)
        return generate_synthetic(self.synthetic)


def config_from_dict(raw: dict, seed: int | None = None,
                     out_dir: str | None = None,
                     structure_refresh: int | None = None,
                     rec_sample: int | None = None) -> RunConfig:
    try:
        ds = raw["dataset"]
        if ("path" in ds) == ("synthetic" in ds):
            raise ConfigError("dataset must give exactly one of path/synthetic")
        enc = raw.get("encoder", {})
        adapter = raw.get("adapter", {})
        obj = dict(raw.get("objective", {}))
        trn = dict(raw.get("trainer", {}))
        if seed is not None:
            trn["seed"] = seed
        if structure_refresh is not None:
            trn["structure_refresh"] = structure_refresh
        if rec_sample is not None:
            obj["rec_sample"] = rec_sample
        weights = LossWeights(
            lam=float(obj.get("lam", 0.5)), tau=float(obj.get("tau", 0.5)),
            gamma=float(obj.get("gamma", 1.0)), eta=float(obj.get("eta", 0.01)),
            mu=float(obj.get("mu", 0.01)))
        tune = TuneConfig(
            dprime=int(adapter.get("dprime", 64)),
            t=int(adapter.get("t", 4)),
            tprime=int(adapter.get("tprime", 4)),
            k=int(adapter.get("k", 10)),
            alpha=float(adapter.get("alpha", 1.0)),
            beta=float(adapter.get("beta", 1.0)),
            weights=weights,
            lr=float(trn.get("lr", 0.048)),
            epochs=int(trn.get("epochs", 242)),
            seed=int(trn.get("seed", 0)),
            structure_refresh=int(trn.get("structure_refresh", 1)),
            rec_sample=obj.get("rec_sample"),
            include_con=bool(obj.get("include_con", True)),
            margin_variant=obj.get("margin_variant", "hinge"),
        )
        synthetic = SyntheticSpec(**ds["synthetic"]) if "synthetic" in ds else None
        return RunConfig(
            dataset_path=ds.get("path"),
            synthetic=synthetic,
            d=int(enc.get("d", 64)),
            pretrain_epochs=int(enc.get("pretrain_epochs", 0)),
            tune=tune,
            out_dir=out_dir if out_dir is not None else raw.get("out_dir", "run_out"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path: str, **overrides) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}") from exc
    return config_from_dict(raw, **overrides)
