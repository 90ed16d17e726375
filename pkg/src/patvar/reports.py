"""Markdown and CSV renderers for quality reports and macro-F1 grids.

Layouts mirror the published tables: the quality table has the three rates
as rows and datasets as columns; F1 grids have methods as rows, shots as
columns, cells as `mean (sd)` with the best mean per column in bold and
significance stars appended. All formatting is deterministic so re-rendered
reports are byte-identical.
"""

from __future__ import annotations

import csv
from typing import Iterable, Mapping, Sequence

from .learning import RunResult

QUALITY_ROWS = (
    ("pkr", "Pattern Keeping Rate"),
    ("slfr", "Soft Label Flip Rate"),
    ("lfr", "Label Flip Rate"),
)

STAR_THRESHOLDS = ((0.0001, "***"), (0.01, "**"), (0.05, "*"), (0.1, "+"))


def significance_stars(p: float | None) -> str:
    if p is None:
        return ""
    for threshold, stars in STAR_THRESHOLDS:
        if p < threshold:
            return stars
    return ""


def _fmt_rate(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.2f}"


def _fmt_mean(value: float) -> str:
    # paper-style ".55" / "(.08)" cells
    text = f"{value:.2f}"
    return text[1:] if text.startswith("0.") else text


def _markdown_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(cell)) for cell in col) for col in zip(header, *rows)]
    def line(cells):
        return "| " + " | ".join(str(c).ljust(w) for c, w in zip(cells, widths)) + " |"
    sep = "| " + " | ".join("-" * w for w in widths) + " |"
    return "\n".join([line(header), sep, *[line(r) for r in rows]]) + "\n"


def render_quality_table(per_dataset: Mapping[str, Mapping[str, float | None]]) -> str:
    """Quality rates table: one column per dataset, one row per rate."""
    datasets = list(per_dataset)
    header = ["", *datasets]
    rows = []
    for key, title in QUALITY_ROWS:
        rows.append([title, *[_fmt_rate(per_dataset[d].get(key)) for d in datasets]])
    return _markdown_table(header, rows)


def render_f1_grid(title: str, results: Sequence[RunResult]) -> str:
    """Macro-F1 grid: methods as rows, shots as columns, bold best per column."""
    if not results:
        return f"**{title}**\n\n(no results)\n"
    shots = results[0].shots
    best_per_shot = {}
    for shot in shots:
        means = [r.mean[shot] for r in results if r.mean[shot] is not None]
        best_per_shot[shot] = max(means) if means else None
    header = ["Method", *[str(s) for s in shots]]
    rows = []
    for r in results:
        cells = [r.condition]
        for shot in shots:
            m, sd = r.mean[shot], r.sd[shot]
            if m is None:
                cells.append("n/a")
                continue
            body = f"{_fmt_mean(m)} ({_fmt_mean(sd or 0.0)})"
            if best_per_shot[shot] is not None and m == best_per_shot[shot]:
                body = f"**{body}**"
            stars = significance_stars(r.p_vs_reference.get(shot))
            cells.append(f"{body} {stars}".rstrip())
        rows.append(cells)
    return f"**{title}**\n\n" + _markdown_table(header, rows)


# ---------------------------------------------------------------------------
# CSV results files
# ---------------------------------------------------------------------------

RESULTS_FIELDS = ("condition", "dataset", "shot", "seed", "macro_f1")
SUMMARY_FIELDS = ("condition", "dataset", "shot", "mean", "sd", "p_vs_counterfactual", "significance")


def write_results_csv(path, results: Sequence[RunResult], dataset_name: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULTS_FIELDS)
        for r in results:
            for shot in r.shots:
                for seed in r.seeds:
                    value = r.scores[shot][seed]
                    writer.writerow([
                        r.condition, dataset_name, shot, seed,
                        "" if value is None else f"{value:.6f}",
                    ])


def write_summary_csv(path, results: Sequence[RunResult], dataset_name: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_FIELDS)
        for r in results:
            for shot in r.shots:
                mean_v, sd_v = r.mean[shot], r.sd[shot]
                p = r.p_vs_reference.get(shot)
                writer.writerow([
                    r.condition, dataset_name, shot,
                    "" if mean_v is None else f"{mean_v:.6f}",
                    "" if sd_v is None else f"{sd_v:.6f}",
                    "" if p is None else f"{p:.6g}",
                    significance_stars(p),
                ])


def read_results_csv(path) -> list[dict]:
    """Rows of the per-seed results schema; also used for external imports."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(RESULTS_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"results file {path} lacks columns {sorted(missing)}")
        return [dict(row) for row in reader]


def results_from_rows(rows: Iterable[dict]) -> list[RunResult]:
    """Aggregate per-seed rows back into RunResult grids (no p-values)."""
    from .stats import mean as _mean, sample_sd

    by_condition: dict[str, dict[int, dict[int, float | None]]] = {}
    for row in rows:
        cond = row["condition"]
        shot = int(row["shot"])
        seed = int(row["seed"])
        value = float(row["macro_f1"]) if row["macro_f1"] else None
        by_condition.setdefault(cond, {}).setdefault(shot, {})[seed] = value
    results = []
    for cond, scores in by_condition.items():
        shots = tuple(sorted(scores))
        seeds = tuple(sorted({s for cell in scores.values() for s in cell}))
        means, sds = {}, {}
        for shot in shots:
            present = [v for v in scores[shot].values() if v is not None]
            means[shot] = _mean(present) if present else None
            sds[shot] = sample_sd(present) if present else None
        results.append(RunResult(
            condition=cond, shots=shots, seeds=seeds, scores=scores,
            mean=means, sd=sds, p_vs_reference={s: None for s in shots}, reference=None,
        ))
    return results
