"""Command-line harness: run, record and compare optimization experiments.

Exit codes: 0 success, 1 configuration error, 2 environment or credential
error, 3 a run aborted.
"""

from __future__ import annotations

import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

import click
import numpy as np
import yaml

from .bench import REGISTRY, get_objective
from .engine import (LLM_METHODS, METHODS, RegretUnavailable, RunConfig, RunLog, UndefinedTest, atomic_write,
                     band_csv, cumulative_regret, curves_csv, max_so_far_curve, mean_stderr, run_method,
                     sign_test)
from .llm import (FixtureDirNotEmpty, GuidedResponder, LiveClient, LLMConfig, MissingAPIKey, RecordingClient,
                  ReplayClient, ScriptedClient)
from .llm.clients import API_KEY_ENV

EXIT_OK, EXIT_CONFIG, EXIT_ENV, EXIT_ABORT = 0, 1, 2, 3
CLIENTS = ("replay", "live", "scripted", "none")

log = logging.getLogger("bora")


class ConfigError(click.ClickException):
    exit_code = EXIT_CONFIG


class EnvironmentProblem(click.ClickException):
    exit_code = EXIT_ENV


def load_config(path, overrides: dict) -> tuple[RunConfig, dict]:
    """Merge a YAML file with command-line overrides into a RunConfig.

    Returns the config and the harness settings (trials, out, jobs) that do
    not belong to a single run.
    """
    doc = {}
    if path:
        try:
            doc = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}")
        if not isinstance(doc, dict):
            raise ConfigError("the config file must hold a mapping")
    llm = dict(doc.pop("llm", None) or {})
    harness = {k: doc.pop(k) for k in ("trials", "out", "jobs") if k in doc}
    for key, value in overrides.items():
        if value is None:
            continue
        if key in ("client", "fixtures", "model", "base_url"):
            llm[key] = value
        elif key in ("trials", "out", "jobs"):
            harness[key] = value
        else:
            doc[key] = value
    unknown = set(doc) - {f.name for f in fields(RunConfig)}
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    try:
        cfg = RunConfig(**doc, llm=LLMConfig(**llm))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc))
    if cfg.llm.client not in CLIENTS:
        raise ConfigError(f"unknown client {cfg.llm.client!r}; expected one of {', '.join(CLIENTS)}")
    try:
        get_objective(cfg.objective)
    except (KeyError, ImportError, AttributeError, TypeError) as exc:
        raise ConfigError(str(exc))
    harness.setdefault("trials", 1)
    harness.setdefault("out", "results")
    harness.setdefault("jobs", 1)
    if harness["trials"] < 1 or harness["jobs"] < 1:
        raise ConfigError("trials and jobs must be >= 1")
    return cfg, harness


def _check_client(cfg: RunConfig, seeds, recording: bool = False):
    """Fail fast, before any run starts, when the chosen client cannot work."""
    if cfg.method not in LLM_METHODS and not recording:
        return
    kind = cfg.llm.client
    if kind == "none":
        raise ConfigError(f"method {cfg.method} needs an LLM client")
    if kind == "live" and not os.environ.get(API_KEY_ENV):
        raise EnvironmentProblem(f"the live client needs the {API_KEY_ENV} environment variable")
    if kind == "scripted" and get_objective(cfg.objective).best_point is None:
        raise ConfigError(f"the scripted client needs an objective with a known optimum; {cfg.objective} has none")
    if kind == "replay" and not recording:
        if not cfg.llm.fixtures:
            raise ConfigError("the replay client needs --fixtures")
        for s in seeds:
            d = fixture_dir(cfg.llm.fixtures, s)
            if not d.is_dir():
                raise ConfigError(f"missing replay fixtures {d}")


def fixture_dir(root, seed: int) -> Path:
    return Path(root) / f"seed_{seed}"


def make_client(cfg: RunConfig, objective):
    kind = cfg.llm.client
    if kind == "replay":
        return ReplayClient(fixture_dir(cfg.llm.fixtures, cfg.seed))
    if kind == "live":
        return LiveClient(cfg.llm.model, cfg.llm.base_url)
    if kind == "scripted":
        return ScriptedClient(GuidedResponder(objective.space, objective.best_point, seed=cfg.seed))
    return None


def run_dir(out, cfg: RunConfig) -> Path:
    return Path(out) / cfg.method / cfg.objective


def _trial(args) -> dict:
    """Run one seed and write its files. Runs in a worker process when --jobs > 1."""
    cfg_dict, out, record_force = args
    cfg = RunConfig(**{**cfg_dict, "llm": LLMConfig(**cfg_dict["llm"])})
    objective = get_objective(cfg.objective)
    target = run_dir(out, cfg)
    target.mkdir(parents=True, exist_ok=True)
    client = None
    if cfg.method in LLM_METHODS or record_force is not None:
        client = make_client(cfg, objective)
    recorder = None
    if record_force is not None:
        recorder = RecordingClient(client, fixture_dir(cfg.llm.fixtures, cfg.seed), force=record_force)
        client = recorder
    stem = target / f"trial_{cfg.seed}"
    lg = run_method(cfg, objective, client, checkpoint=stem.with_suffix(".jsonl"))
    if recorder is not None:
        recorder.close(complete=lg.complete)
    samples = []
    for s in lg.steps:
        for p, src, y in zip(s["points"], s["sources"], s["values"]):
            samples.append(json.dumps({"trial": cfg.seed, "step": s["step"], "sample": len(samples),
                                       "source": src, "x": p, "y": y}))
    atomic_write(target / f"samples_{cfg.seed}.jsonl", "\n".join(samples) + "\n")
    if lg.report:
        atomic_write(stem.with_suffix(".md"), lg.report_markdown())
    return {"seed": cfg.seed, "status": lg.status, "y_max": lg.footer.get("y_max"),
            "n_samples": lg.n_samples, "error": lg.footer.get("error"), "path": str(stem.with_suffix(".jsonl"))}


def execute(cfg: RunConfig, harness: dict, record_force: bool | None = None) -> int:
    seeds = [cfg.seed + t for t in range(harness["trials"])]
    _check_client(cfg, seeds, recording=record_force is not None)
    jobs = []
    for s in seeds:
        d = cfg.to_dict()
        d["seed"] = s
        jobs.append((d, harness["out"], record_force))
    if record_force is not None and not record_force:
        for s in seeds:
            d = fixture_dir(cfg.llm.fixtures, s)
            if d.exists() and any(d.iterdir()):
                raise ConfigError(f"fixture directory {d} is not empty (use --force to overwrite)")
    try:
        if harness["jobs"] > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=harness["jobs"]) as pool:
                results = list(pool.map(_trial, jobs))
        else:
            results = [_trial(j) for j in jobs]
    except MissingAPIKey as exc:
        raise EnvironmentProblem(str(exc))
    except FixtureDirNotEmpty as exc:
        raise ConfigError(str(exc))
    logs = [RunLog.read(r["path"]) for r in results]
    atomic_write(run_dir(harness["out"], cfg) / "curves.csv", curves_csv(logs, cfg.method))
    failed = 0
    for r in results:
        if r["status"] == "complete":
            click.echo(f"seed {r['seed']}: {r['n_samples']} samples, y_max = {r['y_max']:.6g} -> {r['path']}")
        else:
            failed += 1
            click.echo(f"seed {r['seed']}: aborted after {r['n_samples']} samples: {r['error']}", err=True)
    return EXIT_ABORT if failed else EXIT_OK


def _run_options(f):
    opts = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML run configuration."),
        click.option("--method", type=click.Choice(METHODS)),
        click.option("--objective"),
        click.option("--trials", type=int, help="Number of seeds, starting at --seed."),
        click.option("--seed", type=int),
        click.option("--budget", "i_max", type=int, help="Samples after the initial design."),
        click.option("--n-init", type=int),
        click.option("--client", type=click.Choice(CLIENTS)),
        click.option("--fixtures", type=click.Path(file_okay=False), help="Replay fixture root (one seed_N per trial)."),
        click.option("--model"),
        click.option("--base-url"),
        click.option("--out", type=click.Path(file_okay=False), help="Output root directory."),
        click.option("--jobs", type=int, help="Trials run in parallel."),
    ]
    for o in reversed(opts):
        f = o(f)
    return f


@click.group()
@click.option("-v", "--verbose", count=True)
def main(verbose):
    """Bayesian optimization with LLM interventions: experiment harness."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), format="%(levelname)s %(name)s: %(message)s")


@main.command("run")
@_run_options
def cmd_run(config_path, **overrides):
    """Run one method on one objective for several seeds."""
    cfg, harness = load_config(config_path, overrides)
    sys.exit(execute(cfg, harness))


@main.command("record")
@_run_options
@click.option("--force", is_flag=True, help="Overwrite existing fixtures.")
def cmd_record(config_path, force, **overrides):
    """Run with a recording client, writing replay fixtures per seed."""
    cfg, harness = load_config(config_path, overrides)
    if cfg.method not in LLM_METHODS:
        raise ConfigError(f"method {cfg.method} makes no LLM calls; there is nothing to record")
    if cfg.llm.client not in ("live", "scripted"):
        raise ConfigError("record needs --client live or --client scripted")
    if not cfg.llm.fixtures:
        raise ConfigError("record needs --fixtures")
    sys.exit(execute(cfg, harness, record_force=force))


def _load_method_dir(path: Path) -> dict[str, list[RunLog]]:
    out = {}
    for sub in sorted(p for p in path.iterdir() if p.is_dir()):
        logs = [RunLog.read(f) for f in sorted(sub.glob("trial_*.jsonl"))]
        logs = [lg for lg in logs if lg.complete]
        if logs:
            out[sub.name] = logs
    return out


@main.command("compare")
@click.argument("result_dirs", nargs=-1, type=click.Path(exists=True, file_okay=False))
@click.option("--out", type=click.Path(file_okay=False), default="comparison", show_default=True)
@click.option("--stderr-multiplier", type=float, default=0.25, show_default=True,
              help="Half-width of the curve bands, in standard errors.")
def cmd_compare(result_dirs, out, stderr_multiplier):
    """Compare method result directories (each holding one subdirectory per objective).

    The first directory is the reference method; sign tests pair it with each
    other method over the shared objectives.
    """
    if len(result_dirs) < 2:
        raise ConfigError("compare needs at least two method result directories")
    methods = {}
    for d in result_dirs:
        p = Path(d)
        logs = _load_method_dir(p)
        if not logs:
            raise ConfigError(f"no complete run logs under {p}")
        methods[p.name] = logs
    names = list(methods)
    objectives = sorted(set.intersection(*(set(m) for m in methods.values())))
    if not objectives:
        raise ConfigError("the result directories share no objective")

    rows, regret_rows, bands = [], [], {}
    task_regret = {m: [] for m in names}
    for obj in objectives:
        budgets = {lg.n_samples for m in names for lg in methods[m][obj]}
        if len(budgets) != 1:
            raise ConfigError(f"mismatched budgets on {obj}: {sorted(budgets)}")
        for m in names:
            logs = methods[m][obj]
            curves = np.array([max_so_far_curve(lg) for lg in logs])
            bands[f"{m}/{obj}"] = curves
            mean, se = mean_stderr(curves[:, -1:])
            try:
                regs = np.array([cumulative_regret(lg)[-1] for lg in logs])
                rmean, rse = float(regs.mean()), float(mean_stderr(regs[:, None])[1][0])
            except RegretUnavailable:
                rmean = rse = float("nan")
            task_regret[m].append(rmean)
            rows.append({"objective": obj, "method": m, "trials": len(logs), "y_max_mean": float(mean[0]),
                         "y_max_stderr": float(se[0]), "regret_mean": rmean, "regret_stderr": rse})
            regret_rows.append(f"{m},{obj},{rmean!r},{rse!r}")

    out = Path(out)
    lines = ["| objective | method | trials | y_max (mean ± stderr) | cumulative regret (mean ± stderr) |",
             "|---|---|---|---|---|"]
    for r in rows:
        lines.append(f"| {r['objective']} | {r['method']} | {r['trials']} | {r['y_max_mean']:.6g} ± "
                     f"{r['y_max_stderr']:.3g} | {r['regret_mean']:.6g} ± {r['regret_stderr']:.3g} |")
    ref = names[0]
    tests = []
    for other in names[1:]:
        a, b = np.array(task_regret[ref]), np.array(task_regret[other])
        keep = np.isfinite(a) & np.isfinite(b)
        try:
            res = sign_test(a[keep], b[keep], n_comparisons=len(names) - 1)
            tests.append(f"{ref} vs {other}: {res.wins} wins, {res.losses} losses, {res.ties} ties; "
                         f"p = {res.p_value:.5g}, Bonferroni-adjusted p = {res.p_adjusted:.5g}")
        except (UndefinedTest, ValueError) as exc:
            tests.append(f"{ref} vs {other}: sign test unavailable ({exc})")
    table = "\n".join(lines + [""] + tests) + "\n"
    atomic_write(out / "comparison.md", table)
    atomic_write(out / "comparison.json", json.dumps({"rows": rows, "sign_tests": tests}, indent=1) + "\n")
    atomic_write(out / "curves.csv", band_csv(bands, stderr_multiplier))
    atomic_write(out / "regret.csv", "method,objective,regret_mean,regret_stderr\n" + "\n".join(regret_rows) + "\n")
    click.echo(table, nl=False)


@main.command("list-objectives")
def cmd_list_objectives():
    """List the registered benchmark objectives."""
    for name in sorted(REGISTRY):
        obj = REGISTRY[name]()
        best = "unknown" if obj.best_known is None else f"{obj.best_known:.6g}"
        click.echo(f"{name:10s} d={obj.space.d:<3d} best known = {best}  {obj.card.title}")


if __name__ == "__main__":
    main()
