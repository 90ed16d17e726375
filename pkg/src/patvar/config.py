"""Experiment configuration (a single YAML file, strictly validated) and
dataset ingestion with a seeded stratified holdout split."""

from __future__ import annotations

import csv
import json
import os
import random
from dataclasses import dataclass, field, replace

import yaml

from .annotation import (
    AnnotatedSentence,
    AnnotationProvider,
    SynonymLexicon,
    load_annotations_file,
    load_synonyms_file,
)
from .errors import ConfigError, ParseError, PatvarError
from .filtering import FilterConfig
from .fixtures import FixtureAnnotationProvider, fixture_synonyms
from .gateway import Gateway, HttpBackend, MockBackend
from .learning import CONDITIONS, Dataset
from .synthesis import LabeledExample, SynthesisConfig


class EmptyDataset(PatvarError):
    pass


class UnknownLabel(PatvarError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    path: str
    format: str = "csv"  # csv | jsonl
    text_field: str = "text"
    label_field: str = "label"
    multi_label: bool = False
    label_delimiter: str = "|"
    holdout_fraction: float = 0.3
    split_seed: int = 0
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.format not in ("csv", "jsonl"):
            raise ConfigError(f"dataset.format must be csv or jsonl, got {self.format!r}")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ConfigError("dataset.holdout_fraction must be in (0, 1)")


@dataclass(frozen=True)
class BackendSettings:
    kind: str = "mock"  # mock | http
    model: str = "mock-model"
    api_base: str | None = None
    api_key: str | None = None
    label_vocab: dict | None = None
    flaw_rate: float = 0.0  # mock only: fraction of template generations made faulty

    def __post_init__(self):
        if self.kind not in ("mock", "http"):
            raise ConfigError(f"backend.kind must be mock or http, got {self.kind!r}")
        if not 0.0 <= self.flaw_rate < 1.0:
            raise ConfigError("backend.flaw_rate must be in [0, 1)")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec
    annotations: str | None = None
    lexicon: str | None = None
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    target_policy: str = "default"  # default | all_others | round_robin:K | random:K
    per_target: int = 1
    filters: FilterConfig = field(default_factory=FilterConfig)
    conditions: tuple[str, ...] = ("random", "counterfactual")
    shots: tuple[int, ...] = (10, 15, 30, 50, 70, 90, 120)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4, 5, 6, 7)
    backend: BackendSettings = field(default_factory=BackendSettings)
    cache_dir: str = ".patvar-cache"
    output_dir: str = "out"

    def __post_init__(self):
        bad = [c for c in self.conditions if c not in CONDITIONS]
        if bad:
            raise ConfigError(f"unknown conditions {bad}; valid: {list(CONDITIONS)}")


_SCHEMA = {
    "dataset": {"path", "format", "text_field", "label_field", "multi_label",
                "label_delimiter", "holdout_fraction", "split_seed", "labels"},
    "annotations": None,
    "lexicon": None,
    "synthesis": {"max_patterns", "max_atoms", "min_precision", "beam_width"},
    "target_policy": None,
    "per_target": None,
    "filters": {"heuristic", "symbolic", "discriminator"},
    "conditions": None,
    "shots": None,
    "seeds": None,
    "backend": {"kind", "model", "api_base", "api_key", "label_vocab", "flaw_rate"},
    "cache_dir": None,
    "output_dir": None,
}


def _check_keys(section: str, mapping: dict, allowed: set[str]) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {sorted(unknown)}")


def load_config(path) -> ExperimentConfig:
    """Parse and validate the experiment YAML; env vars override credentials."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    _check_keys("config", raw, set(_SCHEMA))
    for section, allowed in _SCHEMA.items():
        if allowed is not None and section in raw:
            if not isinstance(raw[section], dict):
                raise ConfigError(f"section {section} must be a mapping")
            _check_keys(section, raw[section], allowed)
    if "dataset" not in raw or "path" not in raw["dataset"]:
        raise ConfigError("dataset.path is required")

    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if p is None or os.path.isabs(p) else os.path.join(base, p)

    ds = dict(raw["dataset"])
    ds["path"] = resolve(ds["path"])
    if "labels" in ds and ds["labels"] is not None:
        ds["labels"] = tuple(ds["labels"])
    dataset = DatasetSpec(**ds)

    backend_raw = dict(raw.get("backend", {}))
    backend_raw.setdefault("api_base", os.environ.get("LLM_API_BASE"))
    backend_raw.setdefault("api_key", os.environ.get("LLM_API_KEY"))
    if os.environ.get("LLM_MODEL"):
        backend_raw["model"] = os.environ["LLM_MODEL"]
    backend = BackendSettings(**backend_raw)

    filters_raw = raw.get("filters", {})
    filter_cfg = FilterConfig(
        enable_heuristic=bool(filters_raw.get("heuristic", True)),
        enable_symbolic=bool(filters_raw.get("symbolic", True)),
        enable_discriminator=bool(filters_raw.get("discriminator", True)),
    )

    try:
        synthesis = SynthesisConfig(**raw.get("synthesis", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad synthesis section: {exc}") from exc

    cfg = ExperimentConfig(
        dataset=dataset,
        annotations=resolve(raw.get("annotations")),
        lexicon=resolve(raw.get("lexicon")),
        synthesis=synthesis,
        target_policy=str(raw.get("target_policy", "default")),
        per_target=int(raw.get("per_target", 1)),
        filters=filter_cfg,
        conditions=tuple(raw.get("conditions", ("random", "counterfactual"))),
        shots=tuple(int(s) for s in raw.get("shots", (10, 15, 30, 50, 70, 90, 120))),
        seeds=tuple(int(s) for s in raw.get("seeds", range(8))),
        backend=backend,
        cache_dir=resolve(raw.get("cache_dir", ".patvar-cache")),
        output_dir=resolve(raw.get("output_dir", "out")),
    )
    for label, p in (("dataset.path", cfg.dataset.path),
                     ("annotations", cfg.annotations),
                     ("lexicon", cfg.lexicon)):
        if p is not None and not os.path.exists(p):
            raise ConfigError(f"{label} does not exist: {p}")
    return cfg


def build_provider(cfg: ExperimentConfig) -> AnnotationProvider:
    if cfg.annotations is None:
        return FixtureAnnotationProvider()
    return _FileBackedProvider(cfg.annotations)


class _FileBackedProvider:
    """Serves pre-annotated sentences by raw text; falls back to the fixture."""

    def __init__(self, path):
        self._by_raw = {s.raw: s for s in load_annotations_file(path)}
        self._fallback = FixtureAnnotationProvider()

    def annotate(self, raw: str) -> AnnotatedSentence:
        hit = self._by_raw.get(raw)
        return hit if hit is not None else self._fallback.annotate(raw)


def build_lexicon(cfg: ExperimentConfig) -> SynonymLexicon:
    return fixture_synonyms() if cfg.lexicon is None else load_synonyms_file(cfg.lexicon)


def build_gateway(cfg: ExperimentConfig) -> Gateway:
    if cfg.backend.kind == "mock":
        backend = MockBackend(label_vocab=cfg.backend.label_vocab, flaw_rate=cfg.backend.flaw_rate)
    else:
        if not cfg.backend.api_base:
            raise ConfigError("backend.kind=http requires api_base (or LLM_API_BASE)")
        backend = HttpBackend(cfg.backend.api_base, cfg.backend.api_key)
    return Gateway(backend=backend, model=cfg.backend.model, cache_dir=cfg.cache_dir)


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------


def _read_rows(spec: DatasetSpec) -> list[tuple[str, list[str]]]:
    rows: list[tuple[str, list[str]]] = []
    if spec.format == "csv":
        with open(spec.path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            for lineno, row in enumerate(reader, start=2):  # header is line 1
                if spec.text_field not in row or row[spec.text_field] is None:
                    raise ParseError(f"missing field {spec.text_field!r}", line=lineno)
                if spec.label_field not in row or not (row[spec.label_field] or "").strip():
                    raise ParseError(f"missing field {spec.label_field!r}", line=lineno)
                labels = [row[spec.label_field].strip()]
                if spec.multi_label:
                    labels = [l.strip() for l in row[spec.label_field].split(spec.label_delimiter) if l.strip()]
                rows.append((row[spec.text_field], labels))
    else:
        with open(spec.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"invalid JSON ({exc.msg})", line=lineno) from exc
                if spec.text_field not in record or spec.label_field not in record:
                    raise ParseError(
                        f"record needs fields {spec.text_field!r} and {spec.label_field!r}",
                        line=lineno,
                    )
                value = record[spec.label_field]
                labels = [str(l) for l in value] if isinstance(value, list) else [str(value)]
                if spec.multi_label and len(labels) == 1:
                    labels = [l.strip() for l in labels[0].split(spec.label_delimiter) if l.strip()]
                rows.append((str(record[spec.text_field]), labels))
    return rows


def _stratified_split(
    examples: list[LabeledExample], fraction: float, seed: int, label_set: tuple[str, ...]
) -> tuple[list[LabeledExample], list[LabeledExample]]:
    """Largest-remainder allocation: holdout size exact, per-label within 1."""
    rng = random.Random(seed)
    target_total = round(fraction * len(examples))
    by_label = {label: [] for label in label_set}
    for ex in examples:
        by_label[ex.label].append(ex)
    quotas = {}
    remainders = []
    for label in label_set:
        exact = fraction * len(by_label[label])
        quotas[label] = int(exact)
        remainders.append((-(exact - int(exact)), label))
    shortfall = target_total - sum(quotas.values())
    for _, label in sorted(remainders):
        if shortfall <= 0:
            break
        if quotas[label] < len(by_label[label]):
            quotas[label] += 1
            shortfall -= 1
    holdout, pool = [], []
    for label in label_set:
        members = by_label[label][:]
        rng.shuffle(members)
        holdout.extend(members[: quotas[label]])
        pool.extend(members[quotas[label]:])
    order = {ex.sentence.id: i for i, ex in enumerate(examples)}
    pool.sort(key=lambda ex: order[ex.sentence.id])
    holdout.sort(key=lambda ex: order[ex.sentence.id])
    return pool, holdout


def ingest(
    spec: DatasetSpec, provider: AnnotationProvider, gateway: Gateway | None = None
) -> Dataset:
    """Parse, validate, annotate, and split a dataset file.

    When the dataset is flagged multi-label and a gateway is provided,
    multi-labeled rows are separated into single-labeled parts before the
    holdout split; without a gateway each such row degrades to one duplicate
    example per label (ids `rNNNNN#k`).
    """
    import logging

    from .generation import separate_multilabel

    logger = logging.getLogger(__name__)
    rows = _read_rows(spec)
    if not rows:
        raise EmptyDataset(f"no rows in {spec.path}")
    declared = spec.labels
    label_order: list[str] = list(declared) if declared else []
    examples: list[LabeledExample] = []
    for i, (text, labels) in enumerate(rows):
        for label in labels:
            if declared and label not in declared:
                raise UnknownLabel(f"row {i + 1}: label {label!r} not in declared labels")
            if not declared and label not in label_order:
                label_order.append(label)
        if len(labels) > 1 and gateway is not None:
            parts = separate_multilabel(text, [""] * len(labels), labels, gateway)
            for k, (part_text, _pattern, part_label) in enumerate(parts):
                sentence = replace(provider.annotate(part_text), id=f"r{i:05d}#{k}")
                examples.append(LabeledExample(sentence, part_label))
            continue
        if len(labels) > 1:
            logger.warning("row %d is multi-labeled but no gateway given; duplicating", i + 1)
        for k, label in enumerate(labels):
            suffix = f"#{k}" if len(labels) > 1 else ""
            sentence = replace(provider.annotate(text), id=f"r{i:05d}{suffix}")
            examples.append(LabeledExample(sentence, label))
    label_set = tuple(label_order)
    pool, holdout = _stratified_split(examples, spec.holdout_fraction, spec.split_seed, label_set)
    return Dataset(tuple(pool), label_set, tuple(holdout))
