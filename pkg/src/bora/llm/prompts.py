"""Prompt construction. Every task message starts with a ``[TASK: ...]`` tag
line so logs, fixtures and scripted responders can tell the tasks apart."""

from __future__ import annotations

import json
import re

import numpy as np

from ..core import Dataset, ExperimentCard, SearchSpace
from .clients import estimate_tokens
from .comment import Comment

COMMENT_SCHEMA = """{
  "comment": "<string: insights on the optimization progress and key findings>",
  "hypotheses": [
    {
      "name": "<string: a short, meaningful name>",
      "rationale": "<string: why this hypothesis should maximize the target>",
      "confidence": "<one of: low | medium | high>",
      "points": [[<one number per variable, in variable order>]]
    }
  ]
}"""

TAG = re.compile(r"^\[TASK: (\w+)(?: n=(\d+))?\]")


def task_tag(kind: str, n: int | None = None) -> str:
    return f"[TASK: {kind}{'' if n is None else f' n={n}'}]"


def parse_tag(text: str) -> tuple[str, int | None] | None:
    m = TAG.match(text)
    if not m:
        return None
    return m.group(1), (int(m.group(2)) if m.group(2) else None)


def _num(v: float) -> str:
    return json.dumps(float(v))


def render_card(card: ExperimentCard) -> str:
    lines = [
        "## Experiment card",
        f"Title: {card.title}",
        f"Description: {card.description}",
        f"Target (to maximize): {card.target_name}. {card.target_description}",
        "Variables (points list values in exactly this order):",
    ]
    for i, v in enumerate(card.space.variables):
        unit = f" [{v.unit}]" if v.unit else ""
        grid = f", discrete with step {v.step:g}" if v.kind == "discrete" else ", continuous"
        desc = f": {v.description}" if v.description else ""
        lines.append(f"  {i + 1}. {v.name}{unit}{desc} Bounds [{v.lower:g}, {v.upper:g}]{grid}.")
    constraints = card.constraints_text()
    if constraints:
        lines.append("Constraints:")
        lines.extend(f"  - {c}" for c in constraints.splitlines())
    if card.context:
        lines.append(f"Additional context: {card.context}")
    return "\n".join(lines)


def _system(sole_optimizer: bool) -> str:
    if sole_optimizer:
        return ("You are a research assistant specialized in black-box optimization and the sole optimizer "
                "of an experimental campaign. You comment live on the optimization progress and propose "
                "hypotheses, each tested by a point that will be evaluated. No other algorithm suggests points.")
    return ("You are a research assistant specialized in Bayesian optimization (BO) and a live commentator "
            "of an optimization campaign. A Gaussian-process BO algorithm drives the search; when its progress "
            "stalls you are asked to comment on the progress so far and either propose new points to test "
            "your hypotheses or select the most promising points among BO suggestions. Always answer "
            "truthfully and stay within the experiment's bounds and constraints.")


def build_role_prompt(card: ExperimentCard, sole_optimizer: bool = False) -> list[dict]:
    task = ("Give an overview of the experiment and explain how you will participate in the optimization "
            "process as its only optimizer." if sole_optimizer else
            "Give an overview of the experiment and explain how you will participate in the optimization "
            "process alongside Bayesian optimization.")
    return [
        {"role": "system", "content": _system(sole_optimizer)},
        {"role": "user", "content": f"{task_tag('overview')}\n{render_card(card)}\n\n{task}"},
    ]


def _format_instructions(space: SearchSpace, n: int) -> str:
    return (
        f"Respond with a single JSON object, and nothing else, following this structure:\n{COMMENT_SCHEMA}\n"
        f"Return exactly {n} hypotheses with exactly one point each. Every point must list {space.d} numbers in "
        f"the variable order of the experiment card, lie within the bounds, respect the discretization steps "
        f"and constraints, and differ from every point already evaluated."
    )


def build_init_prompt(card: ExperimentCard, n_hypotheses: int, rng: np.random.Generator,
                      history: list[dict] | None = None) -> list[dict]:
    """Few-shot prompt for the warm-start hypotheses.

    The worked example carries randomly sampled in-space values so that the
    model sees well-formed points without being anchored on a fixed one.
    """
    if n_hypotheses < 1:
        raise ValueError("n_hypotheses must be >= 1")
    space = card.space
    example_pts = space.sample_uniform(rng, min(2, n_hypotheses))
    example = {
        "comment": "Summary of what is known about the problem and the strategy behind the hypotheses.",
        "hypotheses": [
            {"name": f"Hypothesis {i + 1}", "rationale": "Why this region should yield a high target value.",
             "confidence": conf, "points": [[float(v) for v in p]]}
            for i, (p, conf) in enumerate(zip(example_pts, ("medium", "high")))
        ],
    }
    body = (
        f"{task_tag('init', n_hypotheses)}\n"
        f"Using your domain knowledge, generate {n_hypotheses} diverse hypotheses for maximizing "
        f"{card.target_name}. Each hypothesis is tested by a single point that will be evaluated to form the "
        f"initial dataset.\n\n{_format_instructions(space, n_hypotheses)}\n\n"
        f"Example of a well-formed answer with {len(example_pts)} hypotheses (values are placeholders):\n"
        f"{json.dumps(example, indent=2)}"
    )
    return list(history or []) + [{"role": "user", "content": body}]


def render_dataset(dataset: Dataset, card: ExperimentCard) -> str:
    space = card.space
    header = ["#"] + space.names + [card.target_name]
    rows = [", ".join(header)]
    for i, s in enumerate(dataset.samples):
        rows.append(", ".join([str(i + 1)] + [_num(v) for v in s.point] + [_num(s.value)]))
    return "\n".join(rows)


def render_correlation(dataset: Dataset, card: ExperimentCard) -> str:
    C = dataset.correlation_matrix()
    names = card.space.names
    best = dataset.best()
    rows = [", ".join([""] + names)]
    for n, row in zip(names, C):
        rows.append(", ".join([n] + [f"{v:.3f}" for v in row]))
    return (
        f"The dataset holds {len(dataset)} samples, too many to list. Pairwise Pearson correlations of the "
        f"input variables:\n" + "\n".join(rows) +
        f"\nBest sample so far: {json.dumps(list(best.point))} with {card.target_name} = {_num(best.value)}."
    )


def render_comments(comments: list[Comment]) -> str:
    if not comments:
        return "No previous comments."
    out = []
    for i, c in enumerate(comments):
        out.append(f"Comment {i + 1}: {c.insights}")
        for h in c.hypotheses:
            out.append(f"  - {h.name} (confidence {h.confidence:g}): {h.rationale} "
                       f"Points: {json.dumps(h.points)}")
    return "\n".join(out)


def _data_section(dataset, card, comments, history, budget_tokens, task_text) -> str:
    """Raw data when it fits in the token budget, its correlation matrix otherwise."""
    raw = f"Data gathered so far:\n{render_dataset(dataset, card)}"
    prior = f"Your previous comments:\n{render_comments(comments)}"
    used = sum(estimate_tokens(m["content"]) for m in (history or []))
    if budget_tokens is not None and len(dataset) >= 2 and \
            used + estimate_tokens(raw + prior + task_text) > budget_tokens:
        raw = render_correlation(dataset, card)
    return f"{raw}\n\n{prior}"


def build_a2_prompt(card: ExperimentCard, dataset: Dataset, comments: list[Comment], n_points: int,
                    history: list[dict] | None = None, budget_tokens: int | None = None) -> list[dict]:
    if not len(dataset):
        raise ValueError("the dataset must not be empty")
    task = (
        f"The optimization has stalled. Comment on the optimization progress in light of the new data, update "
        f"your previous hypotheses as needed, and propose {n_points} new hypotheses to maximize "
        f"{card.target_name}, each with one new point to evaluate.\n\n{_format_instructions(card.space, n_points)}"
    )
    data = _data_section(dataset, card, comments, history, budget_tokens, task)
    body = f"{task_tag('a2', n_points)}\n{data}\n\n{task}"
    return list(history or []) + [{"role": "user", "content": body}]


def build_a3_prompt(card: ExperimentCard, dataset: Dataset, comments: list[Comment], bo_candidates,
                    n_select: int, history: list[dict] | None = None,
                    budget_tokens: int | None = None) -> list[dict]:
    if not len(dataset):
        raise ValueError("the dataset must not be empty")
    if n_select > len(bo_candidates):
        raise ValueError("cannot select more points than there are candidates")
    listing = "\n".join(f"Candidate {j + 1}: {json.dumps([float(v) for v in c])}"
                        for j, c in enumerate(bo_candidates))
    task = (
        f"The optimization has stalled. Bayesian optimization suggests these {len(bo_candidates)} candidate "
        f"points:\n{listing}\n\nComment on the optimization progress in light of the new data and select the "
        f"{n_select} most promising candidates that best align with your hypotheses for maximizing "
        f"{card.target_name}. You may only choose among the candidates above; copy their values exactly.\n\n"
        f"{_format_instructions(card.space, n_select)}"
    )
    data = _data_section(dataset, card, comments, history, budget_tokens, task)
    body = f"{task_tag('a3', n_select)}\n{data}\n\n{task}"
    return list(history or []) + [{"role": "user", "content": body}]


def build_consolidation_prompt(messages: list[dict], outputs: list[str]) -> list[dict]:
    listing = "\n\n".join(f"Response {i + 1}:\n{o}" for i, o in enumerate(outputs))
    body = (
        f"{task_tag('consolidate', len(outputs))}\n"
        f"You produced {len(outputs)} independent responses to the task above:\n\n{listing}\n\n"
        "Reflect on and critique each response, evaluate their consistency, and resolve any discrepancies by "
        "cross-referencing them against the optimization data. Then synthesize a comprehensive and unified "
        "response that satisfies every requirement of the original task, in the same JSON structure."
    )
    return list(messages) + [{"role": "user", "content": body}]


def build_retry_prompt(messages: list[dict], previous: str, errors) -> list[dict]:
    detail = json.dumps([e.to_dict() for e in errors], indent=1)
    body = (
        f"{task_tag('revise')}\nYour Comment failed validation with these errors:\n{detail}\n"
        "Update your Comment to remedy every error (novel points, within bounds, on the grid, satisfying the "
        "constraints, with the requested number of hypotheses). Respond with the corrected JSON object only."
    )
    return list(messages) + [{"role": "assistant", "content": previous}, {"role": "user", "content": body}]


def build_conclusion_prompt(card: ExperimentCard, dataset: Dataset, comments: list[Comment],
                            history: list[dict] | None = None, budget_tokens: int | None = None) -> list[dict]:
    best = dataset.best()
    status = (f"The optimization is finished after {len(dataset)} evaluated samples. The best "
              f"{card.target_name} found is {_num(best.value)} at {json.dumps(list(best.point))}.")
    if comments:
        task = ("Briefly explain how your hypotheses evolved throughout the optimization, as a markdown table "
                "with the columns Hypothesis | Evolution | Outcome, followed by a short conclusion.")
    else:
        task = ("No LLM interventions occurred during this optimization, so there are no hypotheses to "
                "review. Briefly conclude on what the data shows.")
    data = _data_section(dataset, card, comments, history, budget_tokens, status + task)
    body = f"{task_tag('conclusion')}\n{status}\n\n{data}\n\n{task}"
    return list(history or []) + [{"role": "user", "content": body}]


def build_summary_prompt(card: ExperimentCard, dataset: Dataset, n_interventions: int,
                         history: list[dict] | None = None) -> list[dict]:
    best = dataset.best()
    facts = (f"Total evaluated samples: {len(dataset)}. LLM interventions: {n_interventions}. "
             f"Best {card.target_name}: {_num(best.value)} at {json.dumps(list(best.point))}.")
    if n_interventions == 0:
        facts += " No LLM interventions occurred; the search was driven by Bayesian optimization alone."
    body = (
        f"{task_tag('summary')}\n{facts}\n\nWrite the final report of this optimization in markdown. "
        "Give an overview of the optimization, highlight the key results and findings, and recommend future "
        "experiments based on these findings."
    )
    return list(history or []) + [{"role": "user", "content": body}]
