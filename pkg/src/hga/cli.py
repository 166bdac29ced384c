"""Command-line entry point.

Exit codes: 0 success, 1 check failure, 2 usage/config error, 3 divergence.
"""
from __future__ import annotations

import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import click

from .adapters import load_adapter, save_adapter
from .config import ConfigError, RunConfig, load_config
from .encoder import encode, init_encoder, pretrain, save_encoder
from .evalmetrics import ablate, evaluate, write_ablation_csv
from .hetgraph import SyntheticSpec, generate_synthetic, save_graph
from .trainer import DivergenceError, grad_check, tune, write_history_csv


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _prepare(cfg: RunConfig):
    graph = cfg.load_or_generate_graph()
    params = init_encoder(graph, cfg.d, cfg.tune.seed)
    params = pretrain(graph, params, cfg.pretrain_epochs, cfg.tune.seed)
    return graph, params, encode(graph, params)


def _write_run_artifacts(cfg: RunConfig, out_dir: str, report, history=None):
    os.makedirs(out_dir, exist_ok=True)
    resolved = cfg.resolved()
    with open(os.path.join(out_dir, "resolved_config.json"), "w") as fh:
        json.dump(resolved, fh, indent=2, sort_keys=True)
    metrics = {"config": resolved, "seed": cfg.tune.seed,
               "fingerprint": cfg.fingerprint(), "metrics": report.as_dict()}
    with open(os.path.join(out_dir, "metrics.json"), "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
    if history is not None:
        write_history_csv(history, os.path.join(out_dir, "history.csv"))


@click.group()
def main():
    """HG-style adapter tuning on heterogeneous graphs."""


@main.command()
@click.option("--spec", "spec_file", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
def gen(spec_file, out_dir):
    """Generate a synthetic dataset directory from a spec JSON file."""
    try:
        with open(spec_file) as fh:
            raw = json.load(fh)
        spec = SyntheticSpec(**raw)
    except json.JSONDecodeError as exc:
        _fail(2, f"{spec_file}: invalid JSON at line {exc.lineno}, column {exc.colno}")
    except (TypeError, ValueError, FileNotFoundError) as exc:
        _fail(2, str(exc))
    save_graph(generate_synthetic(spec), out_dir)
    click.echo(f"dataset written to {out_dir}")


@main.command("pretrain")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
def pretrain_cmd(config_path, seed, out_dir):
    """Warm up and freeze the surrogate encoder; write encoder.bin."""
    cfg = _load(config_path, seed=seed, out_dir=out_dir)
    graph = cfg.load_or_generate_graph()
    params = init_encoder(graph, cfg.d, cfg.tune.seed)
    params = pretrain(graph, params, cfg.pretrain_epochs, cfg.tune.seed)
    os.makedirs(cfg.out_dir, exist_ok=True)
    save_encoder(params, os.path.join(cfg.out_dir, "encoder.bin"))
    click.echo(f"frozen encoder written to {cfg.out_dir}/encoder.bin")


def _load(config_path, **overrides) -> RunConfig:
    overrides = {k: v for k, v in overrides.items() if v is not None}
    try:
        return load_config(config_path, **overrides)
    except ConfigError as exc:
        _fail(2, str(exc))


@main.command("tune")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--structure-refresh", type=int, default=None)
@click.option("--rec-sample", type=int, default=None)
def tune_cmd(config_path, seed, out_dir, structure_refresh, rec_sample):
    """Encode, tune the adapters, evaluate; write checkpoint + history + metrics."""
    cfg = _load(config_path, seed=seed, out_dir=out_dir,
                structure_refresh=structure_refresh, rec_sample=rec_sample)
    try:
        graph, _, reps = _prepare(cfg)
        state, history = tune(graph, reps, cfg.tune)
    except DivergenceError as exc:
        if exc.history:
            os.makedirs(cfg.out_dir, exist_ok=True)
            write_history_csv(exc.history, os.path.join(cfg.out_dir, "history.csv"))
        _fail(3, str(exc))
    except (ValueError, OSError) as exc:
        _fail(2, str(exc))
    report = evaluate(graph, reps, state, cfg.tune, fingerprint=cfg.fingerprint())
    _write_run_artifacts(cfg, cfg.out_dir, report, history)
    save_adapter(state, os.path.join(cfg.out_dir, "adapter.bin"))
    click.echo(json.dumps(report.as_dict(), indent=2, sort_keys=True))


@main.command("eval")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
def eval_cmd(config_path, checkpoint, seed, out_dir):
    """Evaluate a saved adapter checkpoint; write metrics.json."""
    cfg = _load(config_path, seed=seed, out_dir=out_dir)
    try:
        graph, _, reps = _prepare(cfg)
        state = load_adapter(checkpoint)
    except (ValueError, OSError) as exc:
        _fail(2, str(exc))
    report = evaluate(graph, reps, state, cfg.tune, fingerprint=cfg.fingerprint())
    _write_run_artifacts(cfg, cfg.out_dir, report)
    click.echo(json.dumps(report.as_dict(), indent=2, sort_keys=True))


def _ablate_cell(raw_config_path: str, seed, cell: dict):
    cfg = load_config(raw_config_path, seed=seed)
    graph, _, reps = _prepare(cfg)
    return ablate(graph, reps, cfg.tune, [cell], fingerprint=cfg.fingerprint())[0]


@main.command("ablate")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--grid", "grid_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--jobs", type=int, default=1)
def ablate_cmd(config_path, grid_path, seed, out_dir, jobs):
    """Run the ablation grid; write ablation.csv."""
    cfg = _load(config_path, seed=seed, out_dir=out_dir)
    try:
        with open(grid_path) as fh:
            grid = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        _fail(2, f"grid file: {exc}")
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                rows = list(pool.map(_ablate_cell,
                                     [config_path] * len(grid),
                                     [seed] * len(grid), grid))
        else:
            graph, _, reps = _prepare(cfg)
            rows = ablate(graph, reps, cfg.tune, grid,
                          fingerprint=cfg.fingerprint())
    except ValueError as exc:
        _fail(2, str(exc))
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(os.path.join(cfg.out_dir, "resolved_config.json"), "w") as fh:
        json.dump(cfg.resolved(), fh, indent=2, sort_keys=True)
    write_ablation_csv(rows, os.path.join(cfg.out_dir, "ablation.csv"))
    click.echo(f"ablation table written to {cfg.out_dir}/ablation.csv")


@main.command("gradcheck")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--probes", type=int, default=24)
@click.option("--corrupt-grad", is_flag=True, hidden=True,
              help="negative-control hook: corrupt the analytic gradient")
def gradcheck_cmd(config_path, seed, probes, corrupt_grad):
    """Compare analytic gradients against central finite differences."""
    cfg = _load(config_path, seed=seed)
    try:
        graph, _, reps = _prepare(cfg)
    except (ValueError, OSError) as exc:
        _fail(2, str(exc))
    err = grad_check(graph, reps, cfg.tune, probes, corrupt=corrupt_grad)
    click.echo(f"max relative gradient error: {err:.3e}")
    sys.exit(0 if err < 1e-4 else 1)


if __name__ == "__main__":
    main()
