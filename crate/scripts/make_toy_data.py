#!/usr/bin/env python3
"""Generate the bundled toy corpus and toy datasets used by the test suites.

Outputs (in crates/core/tests/data/):
  toy_corpus.txt    200 sentences, `doc_id\tsent_index\ttext`
  toy_pairs.jsonl   10 pairs (5 valid, 5 invalid) used for mining checks
  toy_dev.jsonl     48 instances, split into train / dev2 by the library
  toy_test.jsonl    16 instances

Labels are a function of the verb pair alone and positive and negative
pairs use disjoint verbs, so the data is separable for a bag-of-words model.
Arguments of the 64 dev/test instances are balanced across labels.
"""
import json
import pathlib
import random

OUT = pathlib.Path(__file__).resolve().parent.parent / "crates" / "core" / "tests" / "data"

POSITIVE = [
    ("bought", "owns"), ("won", "played"), ("married", "knows"), ("defeated", "fought"),
    ("founded", "leads"), ("invaded", "attacked"), ("wrote", "authored"), ("taught", "instructed"),
]
NEGATIVE = [
    ("visited", "hates"), ("met", "sued"), ("praised", "ignored"), ("called", "fired"),
    ("hosted", "robbed"), ("joined", "left"), ("watched", "killed"), ("cited", "copied"),
]
PEOPLE = ["Alice", "Bruno", "Chen", "Dana", "Emeka", "Farah", "Goran", "Hana", "Ivo", "Jun",
          "Kofi", "Lena", "Mateo", "Nora", "Omar", "Priya"]
THINGS = ["the company", "the league", "the castle", "the novel", "the city", "the school",
          "the band", "the museum", "the river", "the island", "the museum shop", "the team"]

TEMPLATES = [
    "{a} {p} {b} last year, and today {a} {h} {b}.",
    "Reports say that {a} {p} {b}; since then {a} {h} {b} openly.",
    "Because {a} {p} {b}, everyone agrees that {a} {h} {b}.",
    "After {a} {p} {b}, the press wrote that {a} {h} {b}.",
    "{a} {h} {b} only because {a} {p} {b} earlier.",
]
FILLER = [
    "The weather in {b} was mild for most of the season.",
    "{a} spent the summer near {b} with friends.",
    "Nobody expected the meeting about {b} to last so long.",
    "A new bridge now connects {b} to the old harbour.",
    "{a} rarely talks about {b} in interviews.",
]
SPECIAL = [
    # hyphen-attached mention of a verb
    "The self-taught painter taught {a} and later instructed {b}.",
    # braces in text are never mined
    "The code {a} wrote {{x}} authored nothing.",
    # same verb twice
    "{a} won, then won again, and still played {b}.",
]


# Each verb pair sees these argument pairs once across its four instances,
# rotated per pair, so arguments carry no label signal.
BALANCED_ARGS = [("Alice", "the company"), ("Bruno", "the castle"), ("Alice", "the castle"), ("Bruno", "the company")]


def instance(idx, prem, hypo, label, rng, args=None):
    a, b = rng.sample(PEOPLE, 1)[0], rng.choice(THINGS)
    if args is not None:
        a, b = args
    return {
        "id": f"toy-{idx:03d}",
        "prem": {"tokens": prem.split()},
        "hypo": {"tokens": hypo.split()},
        "arg_left": a,
        "arg_right": b,
        "label": int(label),
        "source": "levyholt",
    }


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows), encoding="utf-8")


def main():
    rng = random.Random(20201)
    OUT.mkdir(parents=True, exist_ok=True)

    # 64 instances: every verb pair 4 times (3 dev, 1 test).
    dev, test = [], []
    idx = 0
    for rep in range(4):
        for pairs, label in ((POSITIVE, True), (NEGATIVE, False)):
            for j, (p, h) in enumerate(pairs):
                row = instance(idx, p, h, label, rng, BALANCED_ARGS[(rep + j) % 4])
                (test if rep == 3 else dev).append(row)
                idx += 1
    rng.shuffle(dev)
    rng.shuffle(test)
    write_jsonl(OUT / "toy_dev.jsonl", dev)
    write_jsonl(OUT / "toy_test.jsonl", test)

    pairs = [instance(900 + i, p, h, True, rng) for i, (p, h) in enumerate(POSITIVE[:5])]
    pairs += [instance(950 + i, p, h, False, rng) for i, (p, h) in enumerate(NEGATIVE[:5])]
    write_jsonl(OUT / "toy_pairs.jsonl", pairs)

    sentences = []
    for p, h in POSITIVE + NEGATIVE:
        for t in rng.sample(TEMPLATES, 3):
            sentences.append(t.format(a=rng.choice(PEOPLE), b=rng.choice(THINGS), p=p, h=h))
    for t in SPECIAL:
        sentences.append(t.format(a=rng.choice(PEOPLE), b=rng.choice(THINGS)))
    while len(sentences) < 200:
        sentences.append(rng.choice(FILLER).format(a=rng.choice(PEOPLE), b=rng.choice(THINGS)))
    rng.shuffle(sentences)
    lines = [f"doc{i // 20:02d}\t{i % 20}\t{s}\n" for i, s in enumerate(sentences)]
    (OUT / "toy_corpus.txt").write_text("".join(lines), encoding="utf-8")


if __name__ == "__main__":
    main()
