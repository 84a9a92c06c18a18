#!/usr/bin/env python3
"""Regenerates data/synth200 (deterministic; the JSONL output is committed).

Binary sentiment corpus shaped for selection-strategy experiments: class
signal lives only in adjective slots. Positive training samples split into
easy ones (two strong adjectives) and hard ones (mild or even negative-leaning
content), so surrogate confidence spreads over [0,1]. Test negatives are
graded in strength, giving the attack a spread of decision margins to flip.
"""

import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "data" / "synth200"

STRONG_POS = ["wonderful", "excellent", "superb", "delightful",
              "brilliant", "charming", "gripping", "stirring"]
MILD_POS = ["decent", "pleasant", "solid", "agreeable"]
STRONG_NEG = ["terrible", "awful", "dreadful", "tedious",
              "lifeless", "clumsy", "grating", "dismal"]
MILD_NEG = ["slow", "thin", "uneven", "flat"]
NOUNS = ["film", "movie", "plot", "acting", "script",
         "pacing", "dialogue", "ending", "cast", "score"]
VERBS = ["was", "felt", "seemed", "stayed"]
CONNS = ["and", "but", "while", "though"]

rng = random.Random(20240601)


def sent1(adj):
    return " ".join(["the", rng.choice(NOUNS), rng.choice(VERBS), adj, "."])


def sent2(adj_a, adj_b):
    n1, n2 = rng.sample(NOUNS, 2)
    return " ".join(["the", n1, rng.choice(VERBS), adj_a, rng.choice(CONNS),
                     "the", n2, rng.choice(VERBS), adj_b, "."])


def sent3(adj_a, adj_b, adj_c):
    n1, n2, n3 = rng.sample(NOUNS, 3)
    return " ".join(["the", n1, rng.choice(VERBS), adj_a, rng.choice(CONNS),
                     "the", n2, rng.choice(VERBS), adj_b, rng.choice(CONNS),
                     "the", n3, rng.choice(VERBS), adj_c, "."])


def pick(pool):
    return rng.choice(pool)


def main():
    train = []
    # easy positives: unmistakable content, quickly saturated in training
    for _ in range(85):
        train.append((sent3(pick(STRONG_POS), pick(STRONG_POS), pick(STRONG_POS)), 1))
    # hard positives: mild or negative-leaning content under a positive label
    for _ in range(5):
        a, b = pick(MILD_NEG), pick(MILD_POS)
        if rng.random() < 0.5:
            a, b = b, a
        train.append((sent2(a, b), 1))
    for _ in range(10):
        train.append((sent2(pick(MILD_NEG), pick(MILD_NEG)), 1))
    # easy negatives
    for _ in range(70):
        train.append((sent3(pick(STRONG_NEG), pick(STRONG_NEG), pick(STRONG_NEG)), 0))
    # mild negatives: keep the mild-negative adjectives net-negative
    for _ in range(30):
        train.append((sent2(pick(MILD_NEG), pick(MILD_NEG)), 0))
    rng.shuffle(train)

    test = []
    pos_grades = [lambda: sent1(pick(MILD_POS)),
                  lambda: sent2(pick(MILD_POS), pick(MILD_POS)),
                  lambda: sent1(pick(STRONG_POS)),
                  lambda: sent2(pick(STRONG_POS), pick(MILD_POS)),
                  lambda: sent2(pick(STRONG_POS), pick(STRONG_POS))]
    neg_grades = [lambda: sent2(pick(MILD_NEG), pick(MILD_NEG)),
                  lambda: sent1(pick(STRONG_NEG)),
                  lambda: sent2(pick(STRONG_NEG), pick(MILD_NEG)),
                  lambda: sent2(pick(STRONG_NEG), pick(STRONG_NEG)),
                  lambda: sent3(pick(STRONG_NEG), pick(STRONG_NEG), pick(STRONG_NEG))]
    for grade in pos_grades:
        for _ in range(10):
            test.append((grade(), 1))
    for grade in neg_grades:
        for _ in range(10):
            test.append((grade(), 0))
    rng.shuffle(test)

    OUT.mkdir(parents=True, exist_ok=True)
    with open(OUT / "train.jsonl", "w", encoding="utf-8") as f:
        for i, (text, label) in enumerate(train):
            f.write(json.dumps({"id": f"tr{i:04d}", "text": text, "label": label},
                               ensure_ascii=False) + "\n")
    with open(OUT / "test.jsonl", "w", encoding="utf-8") as f:
        for i, (text, label) in enumerate(test):
            f.write(json.dumps({"id": f"te{i:04d}", "text": text, "label": label},
                               ensure_ascii=False) + "\n")
    print(f"wrote {len(train)} train / {len(test)} test samples to {OUT}")


if __name__ == "__main__":
    main()
