"""Regenerate comment_corpus.jsonl: 200 Comment texts with the context each is validated in.

Run from the repository root: ``python tests/fixtures/make_comment_corpus.py``.
Labels name the defect a case was built to contain; the acceptance test
derives the expected errors independently instead of trusting them.
"""

import json
from pathlib import Path

import numpy as np

from bora.bench import branin_objective, hydrogen_space

CATEGORIES = ("valid", "malformed", "out_of_bounds", "off_grid", "constraint", "duplicate", "wrong_count",
              "non_candidate")
PER_CATEGORY = 25


def spaces():
    return {"branin": branin_objective().space, "hydrogen": hydrogen_space()}


def hyp(i, point):
    return {"name": f"H{i}", "rationale": "Because the data suggests it.",
            "confidence": ["low", "medium", "high", 0.42][i % 4], "points": [point]}


def as_list(p):
    return [float(v) for v in p]


def build_case(rng, category, space_name, space):
    mode = "select" if category == "non_candidate" or rng.random() < 0.4 else "suggest"
    n = int(rng.integers(1, 4))
    pool = [as_list(p) for p in space.sample_uniform(rng, 3 + 6 + n)]
    dataset, candidates, fresh = pool[:3], pool[3:9], pool[9:]
    points = [candidates[i] for i in rng.choice(6, n, replace=False)] if mode == "select" else fresh
    doc = {"comment": "Progress so far.", "hypotheses": [hyp(i, p) for i, p in enumerate(points)]}
    k = int(rng.integers(n))
    target = doc["hypotheses"][k]["points"][0]
    text = None

    if category == "malformed":
        variant = int(rng.integers(7))
        if variant == 0:
            text = json.dumps(doc)[:-7]
        elif variant == 1:
            del doc["hypotheses"][k]["rationale"]
        elif variant == 2:
            doc["hypotheses"][k]["confidence"] = "certain"
        elif variant == 3:
            doc["hypotheses"][k]["points"] = [[str(target[0])] + target[1:]]
        elif variant == 4:
            doc["hypotheses"][k]["points"] = [target + [1.0]]
        elif variant == 5:
            doc["comment"] = ["not", "a", "string"]
        else:
            doc["hypotheses"][k]["confidence"] = 1.7
    elif category == "out_of_bounds":
        j = int(rng.integers(space.d))
        v = space.variables[j]
        over = v.step if v.kind == "discrete" else 1.3
        target[j] = v.upper + over if rng.random() < 0.5 else v.lower - over
    elif category == "off_grid":
        discrete = [j for j, v in enumerate(space.variables) if v.kind == "discrete"]
        if discrete:
            j = int(rng.choice(discrete))
            v = space.variables[j]
            target[j] = v.lower + 0.1 if target[j] == v.lower else target[j] - 0.1
        else:  # continuous spaces have no grid; nudge within bounds instead, which stays valid
            target[0] = min(target[0] + 0.1, space.variables[0].upper)
    elif category == "constraint":
        if space.constraints:
            c = space.constraints[0]
            for name in c.variable_names[:6]:
                target[space.names.index(name)] = 1.0
        else:
            target[1] = space.variables[1].upper + 2.0
    elif category == "duplicate":
        if n > 1 and rng.random() < 0.5:
            doc["hypotheses"][-1]["points"] = [list(doc["hypotheses"][0]["points"][0])]
        else:
            doc["hypotheses"][k]["points"] = [list(dataset[int(rng.integers(3))])]
    elif category == "wrong_count":
        variant = int(rng.integers(3))
        if variant == 0:
            doc["hypotheses"].append(hyp(n, as_list(space.sample_uniform(rng, 1)[0])))
        elif variant == 1:
            doc["hypotheses"][k]["points"].append(as_list(space.sample_uniform(rng, 1)[0]))
        else:
            doc["hypotheses"][k]["points"] = []
    elif category == "non_candidate":
        doc["hypotheses"][k]["points"] = [as_list(space.sample_uniform(rng, 1)[0])]

    return {"category": category, "space": space_name, "mode": mode, "n_expected": n, "dataset": dataset,
            "candidates": candidates if mode == "select" else None,
            "text": text if text is not None else json.dumps(doc)}


def main():
    rng = np.random.default_rng(20240611)
    sp = spaces()
    cases = []
    for category in CATEGORIES:
        for i in range(PER_CATEGORY):
            name = "hydrogen" if category in ("off_grid", "constraint") or i % 2 else "branin"
            cases.append(build_case(rng, category, name, sp[name]))
    out = Path(__file__).with_name("comment_corpus.jsonl")
    out.write_text("\n".join(json.dumps(c) for c in cases) + "\n")
    print(f"wrote {len(cases)} cases to {out}")


if __name__ == "__main__":
    main()
