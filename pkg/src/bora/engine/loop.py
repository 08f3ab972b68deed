"""The BORA optimization loop and its baselines."""

from __future__ import annotations

import functools
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..bench import Objective
from ..core import Dataset, Sample, SearchSpace
from ..llm import (ChatClient, Fallback, InterventionContext, LLMConfig, UsageMeter, generate_report, intervene,
                   overview)
from ..policy import (Action, PolicyConfig, PolicyState, plateau_detected, record_intervention, select_action,
                      update_uncertainty)
from ..surrogate import MonitorSet, fit, propose_candidates
from .runlog import FORMAT_VERSION, RunLog

log = logging.getLogger(__name__)

METHODS = ("bora", "vanilla-bo", "random", "llm-only")
LLM_METHODS = ("bora", "llm-only")
TRANSPORT_KEYS = ("client", "fixtures", "base_url")


@dataclass
class RunConfig:
    objective: str = "branin"
    method: str = "bora"
    i_max: int = 105
    n_init: int = 5
    seed: int = 0
    policy: dict = field(default_factory=dict)  # PolicyConfig overrides
    llm: LLMConfig = field(default_factory=LLMConfig)
    gp_restarts: int = 8
    record_timing: bool = False

    def __post_init__(self):
        if isinstance(self.llm, dict):
            self.llm = LLMConfig(**self.llm)
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {', '.join(METHODS)}")
        if self.n_init < 1:
            raise ValueError("n_init must be >= 1")
        if self.i_max < self.n_init:
            raise ValueError("i_max must be >= n_init")
        if self.gp_restarts < 1:
            raise ValueError("gp_restarts must be >= 1")
        unknown = set(self.policy) - set(PolicyConfig.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown policy settings: {', '.join(sorted(unknown))}")

    @property
    def budget(self) -> int:
        return self.n_init + self.i_max

    def policy_config(self, d: int) -> PolicyConfig:
        return PolicyConfig.for_dimension(d, **self.policy)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["llm"] = self.llm.to_dict()
        return out

    def snapshot(self) -> dict:
        """Settings that determine the run's outcome.

        Transport details (client kind, fixture path) are left out, so a
        replayed run logs exactly what the recorded run logged.
        """
        out = self.to_dict()
        for key in TRANSPORT_KEYS:
            out["llm"].pop(key, None)
        return out


class _Run:
    """Bookkeeping shared by every method: dataset, log records, evaluation."""

    def __init__(self, config: RunConfig, objective: Objective, checkpoint=None):
        self.config = config
        self.objective = objective
        self.space: SearchSpace = objective.space
        self.rng = np.random.default_rng(config.seed)
        self.dataset = Dataset(self.space)
        self.meter = UsageMeter()
        self.checkpoint = checkpoint
        self.step = 0
        self.log = RunLog({
            "format": FORMAT_VERSION,
            "method": config.method,
            "objective": objective.name,
            "best_known": objective.best_known,
            "space": self.space.to_dict(),
            "config": config.snapshot(),
        })

    @property
    def remaining(self) -> int:
        return self.config.budget - len(self.dataset)

    def evaluate(self, points, sources, record: dict) -> list[float]:
        """Evaluate ``points`` in order and append one step record.

        On objective failure the partial step is still logged before re-raising.
        """
        t0 = time.perf_counter()
        values, done = [], []
        try:
            for p, src in zip(points, sources):
                p = np.asarray(p, dtype=float)
                y = float(self.objective(p))
                self.dataset.add(Sample(p, y, src, self.step, len(self.dataset)))
                values.append(y)
                done.append(p)
        finally:
            rec = {"step": self.step, **record, "points": [list(map(float, p)) for p in done],
                   "sources": list(sources[:len(done)]), "values": values,
                   "y_max": self.dataset.y_max() if len(self.dataset) else None}
            if self.config.record_timing:
                rec["wall_time"] = time.perf_counter() - t0
            self.log.steps.append(rec)
            self.step += 1
            self._save()
        return values

    def _save(self):
        if self.checkpoint is not None:
            self.log.write(self.checkpoint)

    def finish(self, report: dict | None = None):
        self.log.footer = {
            "status": "complete",
            "n_samples": len(self.dataset),
            "y_max": self.dataset.y_max(),
            "best_point": list(map(float, self.dataset.best().point)),
            "usage": self.meter.as_dict(),
            "report": report,
        }
        self._save()
        return self.log

    def abort(self, exc: BaseException):
        log.error("run aborted at step %d: %s", self.step, exc)
        self.log.footer = {
            "status": "aborted",
            "error": f"{type(exc).__name__}: {exc}",
            "n_samples": len(self.dataset),
            "y_max": self.dataset.y_max() if len(self.dataset) else None,
            "usage": self.meter.as_dict(),
            "report": None,
        }
        self._save()
        return self.log

    def fit(self, warm=None):
        return fit(self.dataset, restarts=self.config.gp_restarts, seed=self.config.seed * 100_003 + self.step,
                   warm_start=warm)

    def random_init(self):
        pts = self.space.sample_uniform(self.rng, self.config.n_init, dedupe=self.dataset)
        self.evaluate(pts, ["init"] * len(pts), {"action": "init"})


def _guarded(body):
    @functools.wraps(body)
    def wrapper(config: RunConfig, objective: Objective, *args, checkpoint=None, **kwargs) -> RunLog:
        run = _Run(config, objective, checkpoint)
        try:
            body(run, *args, **kwargs)
        except Exception as exc:  # noqa: BLE001 - any failure aborts with the partial log kept
            return run.abort(exc)
        return run.log
    return wrapper


def _bo_step(run: _Run, model, record: dict):
    x = propose_candidates(model, run.space, 1, run.rng, dataset=run.dataset)[0]
    run.evaluate([x], ["a1"], record)


@_guarded
def run_random(run: _Run) -> None:
    """Uniform (constrained) random sampling for the whole budget."""
    run.random_init()
    while run.remaining > 0:
        x = run.space.sample_uniform(run.rng, 1, dedupe=run.dataset)[0]
        run.evaluate([x], ["fallback_random"], {"action": "random"})
    run.finish()


@_guarded
def run_vanilla_bo(run: _Run) -> None:
    """GP-EI with a random initial design; never touches an LLM."""
    run.random_init()
    model = None
    while run.remaining > 0:
        model = run.fit(model.params if model is not None else None)
        _bo_step(run, model, {"action": "a1"})
    run.finish()


def _init_with_llm(run: _Run, client, history) -> list:
    cfg = run.config.llm
    ctx = InterventionContext(run.objective.card, run.dataset, [], history, run.config.n_init)
    res = intervene(client, "init", ctx, cfg, run.rng, meter=run.meter)
    n_llm = len(res.points) - res.n_random
    sources = ["init"] * n_llm + ["fallback_random"] * res.n_random
    run.evaluate(res.points, sources, {
        "action": "init", "attempts": res.attempts, "n_random": res.n_random,
        "comment": res.comment.to_wire() if res.comment is not None else None,
        "errors": [[e.to_dict() for e in errs] for errs in res.errors], "usage": res.usage,
    })
    return [res.comment] if res.comment is not None else []


def _report(run: _Run, client, comments, n_interventions, history) -> dict:
    return generate_report(client, run.objective.card, run.dataset, comments, n_interventions, history,
                           run.config.llm, run.meter)


@_guarded
def run_bora(run: _Run, client: ChatClient) -> None:
    """LLM warm start, then BO steps with policy-gated LLM interventions."""
    cfg, llm = run.config, run.config.llm
    history = overview(client, run.objective.card, False, llm, run.meter)
    comments = _init_with_llm(run, client, history)
    pcfg = cfg.policy_config(run.space.d)
    monitor = MonitorSet.sample(run.space, run.rng, pcfg.q)
    state = PolicyState.initial(pcfg)
    model = run.fit()
    state = update_uncertainty(state, model, monitor)
    state.ymax_history.append(run.dataset.y_max())
    n_interventions = 0

    while run.remaining > 0:
        plateau = plateau_detected(state.ymax_history, state.m, pcfg.gamma)
        action = select_action(state, plateau)
        decision = {**state.snapshot(), "plateau": plateau, "action": action.value}
        y_prev = run.dataset.y_max()
        record = {"action": action.value, "policy": decision}

        outcome = None
        if action is not Action.A1_VanillaBO:
            if action is Action.A2_LLMSuggest:
                n = min(llm.n_llm, run.remaining)
                ctx = InterventionContext(run.objective.card, run.dataset, comments, history, n)
            else:
                n = min(llm.n_lbo, run.remaining)
                cands = propose_candidates(model, run.space, llm.n_bo, run.rng, dataset=run.dataset)
                n = min(n, len(cands))
                ctx = InterventionContext(run.objective.card, run.dataset, comments, history, n,
                                          [list(map(float, c)) for c in cands])
                record["candidates"] = ctx.candidates
            outcome = intervene(client, action.value, ctx, llm, run.rng, meter=run.meter)
            record["attempts"] = outcome.attempts
            record["errors"] = [[e.to_dict() for e in errs] for errs in outcome.errors]
            record["usage"] = outcome.usage

        if outcome is None or isinstance(outcome, Fallback):
            if isinstance(outcome, Fallback):
                record.update(action="a1", fallback=outcome.reason, requested_action=action.value)
            _bo_step(run, model, record)
        else:
            n_interventions += 1
            comments.append(outcome.comment)
            record["comment"] = outcome.comment.to_wire()
            values = run.evaluate(outcome.points, [action.value] * len(outcome.points), record)
            state = record_intervention(state, values, y_prev)
            run.log.steps[-1]["trust"] = {"reward": max(values) - y_prev, "score": state.H[-1],
                                          "T": state.T_current, "m": state.m}
            run._save()

        state.ymax_history.append(run.dataset.y_max())
        if run.remaining > 0:
            model = run.fit(model.params)
            state = update_uncertainty(state, model, monitor)

    run.finish(_report(run, client, comments, n_interventions, history))


@_guarded
def run_llm_only(run: _Run, client: ChatClient) -> None:
    """The LLM proposes every point; invalid hypotheses are replaced at random."""
    llm = run.config.llm
    history = overview(client, run.objective.card, True, llm, run.meter)
    comments = _init_with_llm(run, client, history)
    while run.remaining > 0:
        n = min(llm.n_llm, run.remaining)
        ctx = InterventionContext(run.objective.card, run.dataset, comments, history, n)
        res = intervene(client, "a2", ctx, llm, run.rng, fill=True, meter=run.meter)
        if res.comment is not None:
            comments.append(res.comment)
        n_llm = len(res.points) - res.n_random
        run.evaluate(res.points, ["a2"] * n_llm + ["fallback_random"] * res.n_random, {
            "action": "a2", "attempts": res.attempts, "n_random": res.n_random,
            "comment": res.comment.to_wire() if res.comment is not None else None,
            "errors": [[e.to_dict() for e in errs] for errs in res.errors], "usage": res.usage,
        })
    run.finish(_report(run, client, comments, len(comments), history))


def run_method(config: RunConfig, objective: Objective, client: ChatClient | None = None,
               checkpoint=None) -> RunLog:
    if config.method in LLM_METHODS:
        if client is None:
            raise ValueError(f"method {config.method} needs a chat client")
        fn = run_bora if config.method == "bora" else run_llm_only
        return fn(config, objective, client, checkpoint=checkpoint)
    fn = run_vanilla_bo if config.method == "vanilla-bo" else run_random
    return fn(config, objective, checkpoint=checkpoint)
