"""LLM interventions: self-consistent generation, validation with retries,
and the fallbacks that keep an optimization going when the model fails."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..core import Dataset, ExperimentCard
from . import prompts
from .clients import ChatClient, ChatReply, TransportError, UsageMeter
from .comment import Comment, MalformedCommentError, ValidationError, parse_comment, validate_comment

log = logging.getLogger(__name__)

MODES = ("init", "a2", "a3")
UNAVAILABLE = "_Report unavailable: the LLM could not be reached._"


@dataclass
class LLMConfig:
    client: str = "replay"  # replay | live | scripted | none
    model: str = "gpt-4o-mini"
    base_url: str | None = None
    fixtures: str | None = None
    n_llm: int = 3
    n_bo: int = 5
    n_lbo: int = 2
    self_consistency: int = 3
    temperature: float = 0.7
    consolidation_temperature: float = 0.2
    max_attempts: int = 3
    max_tokens: int = 2048
    context_window: int = 128_000
    budget_fraction: float = 0.8

    def __post_init__(self):
        if min(self.n_llm, self.n_bo, self.n_lbo, self.self_consistency, self.max_attempts) < 1:
            raise ValueError("LLM counts must all be >= 1")
        if self.n_lbo > self.n_bo:
            raise ValueError("n_lbo must not exceed n_bo")
        if not 0 < self.budget_fraction <= 1:
            raise ValueError("budget_fraction must lie in (0, 1]")

    @property
    def budget_tokens(self) -> int:
        return int(self.context_window * self.budget_fraction)

    def to_dict(self) -> dict:
        return asdict(self)


def self_consistent_text(client: ChatClient, messages: list[dict], n: int = 3, temperature: float = 0.7,
                         consolidation_temperature: float = 0.2, max_tokens: int = 2048,
                         meter: UsageMeter | None = None) -> tuple[str, dict]:
    """``n`` generations merged by one consolidation call; returns (text, summed usage)."""
    local = UsageMeter()

    def call(msgs, temp) -> ChatReply:
        reply = client.send(msgs, temperature=temp, max_tokens=max_tokens)
        local.add(reply)
        if meter is not None:
            meter.add(reply)
        return reply

    outputs = [call(messages, temperature).text for _ in range(n)]
    text = outputs[0] if n == 1 else \
        call(prompts.build_consolidation_prompt(messages, outputs), consolidation_temperature).text
    usage = {"prompt_tokens": local.prompt_tokens, "completion_tokens": local.completion_tokens}
    return text, usage


def self_consistent_comment(client: ChatClient, messages: list[dict], n: int = 3, **kwargs) -> Comment:
    text, usage = self_consistent_text(client, messages, n, **kwargs)
    comment = parse_comment(text)
    comment.token_usage = usage
    return comment


@dataclass
class InterventionContext:
    card: ExperimentCard
    dataset: Dataset
    comments: list[Comment] = field(default_factory=list)
    history: list[dict] = field(default_factory=list)  # role prompt and overview reply
    n_points: int = 1
    candidates: list | None = None  # a3 only


@dataclass
class InterventionResult:
    points: list[np.ndarray]
    comment: Comment | None
    attempts: int
    errors: list[list[ValidationError]] = field(default_factory=list)
    n_random: int = 0  # points filled in at random
    usage: dict = field(default_factory=lambda: {"prompt_tokens": 0, "completion_tokens": 0})


@dataclass
class Fallback:
    """The intervention failed; the caller should run a vanilla BO step."""

    reason: str  # "invalid" or "transport"
    attempts: int
    errors: list[list[ValidationError]] = field(default_factory=list)
    detail: str = ""
    usage: dict = field(default_factory=lambda: {"prompt_tokens": 0, "completion_tokens": 0})


def _build(mode: str, ctx: InterventionContext, cfg: LLMConfig, rng) -> list[dict]:
    if mode == "init":
        return prompts.build_init_prompt(ctx.card, ctx.n_points, rng, ctx.history)
    if mode == "a2":
        return prompts.build_a2_prompt(ctx.card, ctx.dataset, ctx.comments, ctx.n_points, ctx.history,
                                       cfg.budget_tokens)
    return prompts.build_a3_prompt(ctx.card, ctx.dataset, ctx.comments, ctx.candidates, ctx.n_points,
                                   ctx.history, cfg.budget_tokens)


def _valid_points(comment: Comment, errors: list[ValidationError]) -> list[np.ndarray]:
    bad = {e.hypothesis for e in errors}
    return [np.asarray(h.points[0], dtype=float) for i, h in enumerate(comment.hypotheses)
            if i not in bad and len(h.points) == 1]


def intervene(client: ChatClient, mode: str, ctx: InterventionContext, cfg: LLMConfig | None = None,
              rng: np.random.Generator | None = None, fill: bool | None = None,
              meter: UsageMeter | None = None) -> InterventionResult | Fallback:
    """Run one LLM intervention with up to ``cfg.max_attempts`` validated attempts.

    With ``fill`` (the default for init) a failed intervention keeps the valid
    hypotheses of the last parseable attempt and completes the request with
    uniform random points. Otherwise failure returns a :class:`Fallback`.
    """
    if mode not in MODES:
        raise ValueError(f"unknown intervention mode {mode!r}")
    cfg = cfg or LLMConfig()
    rng = rng if rng is not None else np.random.default_rng()
    fill = (mode == "init") if fill is None else fill
    space = ctx.card.space
    vmode = "select" if mode == "a3" else "suggest"
    usage = UsageMeter()

    def usage_dict():
        return {"prompt_tokens": usage.prompt_tokens, "completion_tokens": usage.completion_tokens}

    messages = _build(mode, ctx, cfg, rng)
    history: list[list[ValidationError]] = []
    last_comment = None
    last_errors: list[ValidationError] = []
    for attempt in range(1, cfg.max_attempts + 1):
        try:
            text, _ = self_consistent_text(
                client, messages, cfg.self_consistency, cfg.temperature, cfg.consolidation_temperature,
                cfg.max_tokens, meter=_Tee(usage, meter))
        except TransportError as exc:
            log.warning("%s intervention: transport failure: %s", mode, exc)
            if fill:
                return _filled(ctx, rng, last_comment, last_errors, attempt, history, usage_dict())
            return Fallback("transport", attempt, history, str(exc), usage_dict())
        try:
            comment = parse_comment(text)
            errors = validate_comment(comment, space, ctx.dataset, vmode, ctx.n_points, ctx.candidates)
        except MalformedCommentError as exc:
            comment, errors = None, [exc.error]
        history.append(errors)
        if comment is not None:
            comment.token_usage = usage_dict()
            last_comment, last_errors = comment, errors
        if not errors:
            pts = [np.asarray(p, dtype=float) for p in comment.points]
            return InterventionResult(pts, comment, attempt, history, 0, usage_dict())
        log.info("%s intervention attempt %d rejected: %s", mode, attempt, "; ".join(e.kind.value for e in errors))
        messages = prompts.build_retry_prompt(messages, text, errors)
    if fill:
        return _filled(ctx, rng, last_comment, last_errors, cfg.max_attempts, history, usage_dict())
    return Fallback("invalid", cfg.max_attempts, history, "", usage_dict())


class _Tee:
    """Forward usage to the per-intervention meter and an optional run meter."""

    def __init__(self, *meters):
        self.meters = [m for m in meters if m is not None]

    def add(self, reply):
        for m in self.meters:
            m.add(reply)


def _filled(ctx, rng, comment, errors, attempts, history, usage) -> InterventionResult:
    pts = _valid_points(comment, errors)[:ctx.n_points] if comment is not None else []
    missing = ctx.n_points - len(pts)
    if missing:
        taken = {ctx.card.space.canonical_key(p) for p in pts}
        pts += ctx.card.space.sample_uniform(rng, missing, dedupe=ctx.dataset, exclude=taken)
    return InterventionResult(pts, comment, attempts, history, missing, usage)


def overview(client: ChatClient, card: ExperimentCard, sole_optimizer: bool = False,
             cfg: LLMConfig | None = None, meter: UsageMeter | None = None) -> list[dict]:
    """Role prompt plus the model's overview reply, reused as conversation prefix.

    On transport failure the prefix is the role prompt alone.
    """
    cfg = cfg or LLMConfig()
    messages = prompts.build_role_prompt(card, sole_optimizer)
    try:
        reply = client.send(messages, temperature=cfg.temperature, max_tokens=cfg.max_tokens)
    except TransportError as exc:
        log.warning("overview request failed: %s", exc)
        return messages
    if meter is not None:
        meter.add(reply)
    return messages + [{"role": "assistant", "content": reply.text}]


def generate_report(client: ChatClient, card: ExperimentCard, dataset: Dataset, comments: list[Comment],
                    n_interventions: int, history: list[dict] | None = None, cfg: LLMConfig | None = None,
                    meter: UsageMeter | None = None) -> dict:
    """Conclusion and summary texts; either is :data:`UNAVAILABLE` if the call fails."""
    cfg = cfg or LLMConfig()
    out = {}
    builders = {
        "conclusion": lambda: prompts.build_conclusion_prompt(card, dataset, comments, history, cfg.budget_tokens),
        "summary": lambda: prompts.build_summary_prompt(card, dataset, n_interventions, history),
    }
    for name, build in builders.items():
        try:
            reply = client.send(build(), temperature=cfg.temperature, max_tokens=cfg.max_tokens)
        except TransportError as exc:
            log.warning("%s request failed: %s", name, exc)
            out[name] = UNAVAILABLE
            continue
        if meter is not None:
            meter.add(reply)
        out[name] = reply.text if reply.text.strip() else UNAVAILABLE
    return out
