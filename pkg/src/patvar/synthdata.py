"""Synthetic four-label review corpus for demos and end-to-end runs.

Each label owns a small signature vocabulary that never leaks into other
labels; every sentence carries two signature words plus shared filler. That
construction guarantees high-precision patterns exist per label and that a
mock generator injecting a target label's signature words produces genuinely
informative counterfactuals.

Run `python -m patvar.synthdata out.csv` to write a demo dataset.
"""

from __future__ import annotations

import argparse
import csv
import random

LABEL_VOCAB: dict[str, list[str]] = {
    "service": ["staff", "waiter", "friendly", "rude", "helpful", "attentive"],
    "price": ["price", "cheap", "expensive", "affordable", "deal", "overpriced"],
    "environment": ["atmosphere", "decor", "cozy", "noisy", "quiet", "romantic"],
    "products": ["food", "lobster", "menu", "tasty", "fresh", "bland"],
}

_TEMPLATES = [
    "the {a} was really {b} here.",
    "honestly the {a} seemed {b} to us.",
    "we thought the {a} was {b} overall.",
    "that {a} felt very {b} last night.",
    "such a {b} {a} at this place.",
    "the {a} here is {b} again.",
]


def make_rows(n: int, seed: int = 0) -> list[tuple[str, str]]:
    """n (text, label) rows, labels round-robin, content seeded."""
    rng = random.Random(seed)
    labels = list(LABEL_VOCAB)
    rows = []
    for i in range(n):
        label = labels[i % len(labels)]
        a, b = rng.sample(LABEL_VOCAB[label], 2)
        template = rng.choice(_TEMPLATES)
        rows.append((template.format(a=a, b=b), label))
    return rows


def write_csv(path, rows: list[tuple[str, str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["text", "label"])
        writer.writerows(rows)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Write a synthetic 4-label review CSV.")
    parser.add_argument("out", help="output CSV path")
    parser.add_argument("--rows", type=int, default=300)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)
    write_csv(args.out, make_rows(args.rows, args.seed))
    print(f"wrote {args.rows} rows to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
