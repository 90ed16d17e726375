"""Counterfactual generation: multi-label separation, pattern-constrained
candidate phrases, the phrase-anchored counterfactual generator, and the
unconstrained rewrite baseline.

Generated phrases are never trusted: each one is re-annotated and checked
against the task pattern before it may constrain a counterfactual.
"""

from __future__ import annotations

import itertools
import logging
import random
import re
import zlib
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .annotation import AnnotatedSentence, AnnotationProvider, SynonymLexicon
from .errors import PatvarError
from .gateway import Gateway
from .patterns import (
    PatternAst,
    SoftAtom,
    find_matches,
    match_sentence,
    render_pattern,
)
from .prompts import GENERATION_MAX_TOKENS, SEPARATOR_MAX_TOKENS, fill, load_template

logger = logging.getLogger(__name__)

STAGES = ("heuristic", "symbolic", "discriminator")


class ResponseFormatError(PatvarError):
    pass


class LabelMismatch(PatvarError):
    pass


class NoValidPhrases(PatvarError):
    pass


class NoPatternMatch(PatvarError):
    """The pattern assigned to a generation task does not match its original."""


@dataclass(frozen=True)
class GenerationTask:
    """One (original example, target label) generation job.

    `pattern` is None for the no-pattern rewrite baseline; otherwise it must
    match the original sentence and `matched_phrase` holds the text of the
    matched span.
    """

    original: AnnotatedSentence
    original_label: str
    target_label: str
    pattern: PatternAst | None = None
    matched_phrase: str = ""

    def __post_init__(self):
        if self.original_label == self.target_label:
            raise ValueError("original and target label must differ")


def build_task(
    original: AnnotatedSentence,
    original_label: str,
    target_label: str,
    pattern: PatternAst,
    lex: SynonymLexicon,
) -> GenerationTask:
    """Construct a pattern-constrained task, extracting the matched phrase."""
    spans = find_matches(pattern, original, lex)
    if not spans:
        raise NoPatternMatch(
            f"pattern {render_pattern(pattern)!r} does not match sentence {original.id!r}"
        )
    return GenerationTask(original, original_label, target_label, pattern, spans[0].text(original))


@dataclass(frozen=True)
class CandidatePhrases:
    task: GenerationTask
    phrases: tuple[str, ...]

    def __post_init__(self):
        if not self.phrases:
            raise ValueError("phrases must be non-empty")


@dataclass(frozen=True)
class StageVerdict:
    status: str  # pending | passed | failed | skipped
    reason: str = ""

    def __post_init__(self):
        if self.status not in ("pending", "passed", "failed", "skipped"):
            raise ValueError(f"unknown verdict status {self.status!r}")


PENDING = StageVerdict("pending")


@dataclass(frozen=True)
class CounterfactualCandidate:
    uid: str
    task: GenerationTask
    generated_text: str
    used_phrase: str | None
    finish_reason: str = "stop"
    verdicts: Mapping[str, StageVerdict] = None  # type: ignore[assignment]
    discriminator_label: str | None = None

    def __post_init__(self):
        verdicts = dict(self.verdicts or {})
        for stage in STAGES:
            verdicts.setdefault(stage, PENDING)
        object.__setattr__(self, "verdicts", verdicts)
        # A later stage may not have passed while an earlier one failed.
        failed = False
        for stage in STAGES:
            status = verdicts[stage].status
            if failed and status == "passed":
                raise ValueError(f"stage {stage} passed after an earlier stage failed")
            failed = failed or status == "failed"

    def with_verdict(self, stage: str, verdict: StageVerdict, **extra) -> "CounterfactualCandidate":
        verdicts = dict(self.verdicts)
        verdicts[stage] = verdict
        return replace(self, verdicts=verdicts, **extra)

    def failed_any(self, stages: Sequence[str] = STAGES) -> bool:
        return any(self.verdicts[s].status == "failed" for s in stages)

    @property
    def is_pattern_constrained(self) -> bool:
        return self.task.pattern is not None


# ---------------------------------------------------------------------------
# Candidate (de)serialization for the candidates/survivors jsonl files
# ---------------------------------------------------------------------------


def candidate_to_record(c: CounterfactualCandidate) -> dict:
    from .annotation import sentence_to_record

    return {
        "uid": c.uid,
        "original": sentence_to_record(c.task.original),
        "original_label": c.task.original_label,
        "target_label": c.task.target_label,
        "pattern": render_pattern(c.task.pattern) if c.task.pattern else None,
        "matched_phrase": c.task.matched_phrase,
        "generated_text": c.generated_text,
        "used_phrase": c.used_phrase,
        "finish_reason": c.finish_reason,
        "verdicts": {s: [v.status, v.reason] for s, v in c.verdicts.items()},
        "discriminator_label": c.discriminator_label,
    }


def candidate_from_record(record: Mapping) -> CounterfactualCandidate:
    from .annotation import record_to_sentence
    from .patterns import parse_pattern

    task = GenerationTask(
        original=record_to_sentence(record["original"]),
        original_label=record["original_label"],
        target_label=record["target_label"],
        pattern=parse_pattern(record["pattern"]) if record["pattern"] else None,
        matched_phrase=record.get("matched_phrase", ""),
    )
    return CounterfactualCandidate(
        uid=record["uid"],
        task=task,
        generated_text=record["generated_text"],
        used_phrase=record.get("used_phrase"),
        finish_reason=record.get("finish_reason", "stop"),
        verdicts={s: StageVerdict(v[0], v[1]) for s, v in record.get("verdicts", {}).items()},
        discriminator_label=record.get("discriminator_label"),
    )


# ---------------------------------------------------------------------------
# Multi-label separation
# ---------------------------------------------------------------------------

_TRIPLE_RE = re.compile(r"'([^']*)'\s*\+\s*'([^']*)'\s*\+\s*'([^']*)'")


def separate_multilabel(
    raw_text: str,
    patterns: Sequence[str],
    labels: Sequence[str],
    gateway: Gateway,
) -> list[tuple[str, str, str]]:
    """Split a multi-labeled sentence into (text, pattern, label) parts."""
    if not labels:
        raise ValueError("labels must be non-empty")
    slots = {
        "text": raw_text,
        "pattern": "[" + ", ".join(f"'{p}'" for p in patterns) + "]",
        "label": ", ".join(labels),
    }
    messages = fill(load_template("multilabel_separator"), slots)
    resp = gateway.complete(gateway.request(messages, SEPARATOR_MAX_TOKENS))
    parts: list[tuple[str, str, str]] = []
    for segment in resp.text.split(";"):
        if not segment.strip():
            continue
        m = _TRIPLE_RE.search(segment)
        if m is None:
            raise ResponseFormatError(
                f"cannot parse separator segment {segment.strip()[:80]!r}"
            )
        text, pattern, label = m.group(1), m.group(2), m.group(3)
        if label not in labels:
            raise LabelMismatch(f"separator returned unknown label {label!r}")
        parts.append((text, pattern, label))
    if not parts:
        raise ResponseFormatError("separator returned no parts")
    return parts


# ---------------------------------------------------------------------------
# Candidate phrases
# ---------------------------------------------------------------------------


def collect_soft_matches(
    task: GenerationTask, lex: SynonymLexicon
) -> list[tuple[str, tuple[str, ...]]]:
    """(matched word, allowed synonyms) for each soft atom bound in the original."""
    if task.pattern is None:
        return []
    spans = find_matches(task.pattern, task.original, lex)
    if not spans:
        return []
    span = spans[0]
    seq = task.pattern.alternatives[span.alternative]
    out = []
    for atom, (lo, hi) in zip(seq, span.bindings):
        if isinstance(atom, SoftAtom) and hi - lo == 1:
            word = task.original.tokens[lo].surface.lower()
            out.append((word, tuple(sorted(lex.synonyms_of(atom.lemma)))))
    return out


def generate_candidate_phrases(
    task: GenerationTask,
    soft_match_info: Sequence[tuple[str, Sequence[str]]],
    gateway: Gateway,
    provider: AnnotationProvider,
    lex: SynonymLexicon,
) -> CandidatePhrases:
    """Ask for pattern-matching phrases and keep only the ones that verify."""
    if task.pattern is None:
        raise ValueError("candidate phrases need a pattern-constrained task")
    slots = {
        "matched_phrase": task.matched_phrase,
        "pattern": render_pattern(task.pattern),
        "label": task.original_label,
        "target_label": task.target_label,
    }
    messages = fill(load_template("candidate_phrases"), slots)
    note = load_template("soft_match_constraint")
    for word, synonyms in soft_match_info:
        messages.extend(
            fill(note, {"match": word, "soft-match_words": ", ".join(synonyms)})
        )
    resp = gateway.complete(gateway.request(messages, GENERATION_MAX_TOKENS))
    raw_phrases = [p.strip() for p in resp.text.split(",")]
    raw_phrases = [p for p in raw_phrases if p]
    valid = []
    for phrase in raw_phrases:
        if match_sentence(task.pattern, provider.annotate(phrase), lex):
            valid.append(phrase)
        else:
            logger.warning(
                "dropping phrase %r: does not match pattern %s",
                phrase,
                render_pattern(task.pattern),
            )
    if not valid:
        raise NoValidPhrases(
            f"no returned phrase matches {render_pattern(task.pattern)!r} "
            f"(got {len(raw_phrases)} phrases)"
        )
    return CandidatePhrases(task, tuple(valid))


# ---------------------------------------------------------------------------
# Counterfactual generation
# ---------------------------------------------------------------------------


def _find_used_phrase(text: str, phrases: Sequence[str]) -> str | None:
    lowered = text.lower()
    for phrase in phrases:
        if phrase.lower() in lowered:
            return phrase
    return None


def generate_counterfactual(
    task: GenerationTask,
    phrases: CandidatePhrases,
    gateway: Gateway,
    uid: str | None = None,
) -> CounterfactualCandidate:
    """Generate one phrase-anchored counterfactual; filtering judges the text."""
    joined = ", ".join(phrases.phrases)
    slots = {
        "text": task.original.raw,
        "label": task.original_label,
        "target_label": task.target_label,
        "generated_phrases": joined,
    }
    messages = fill(load_template("counterfactual_generator"), slots)
    resp = gateway.complete(gateway.request(messages, GENERATION_MAX_TOKENS))
    text = resp.text.strip()
    return CounterfactualCandidate(
        uid=uid or f"{task.original.id}:{task.target_label}",
        task=task,
        generated_text=text,
        used_phrase=_find_used_phrase(text, phrases.phrases),
        finish_reason=resp.finish_reason,
    )


def generate_without_vt(
    original: AnnotatedSentence,
    original_label: str,
    target_label: str,
    gateway: Gateway,
    uid: str | None = None,
) -> CounterfactualCandidate:
    """Unconstrained rewrite baseline: no pattern, no phrase anchor."""
    task = GenerationTask(original, original_label, target_label, pattern=None)
    slots = {"text": original.raw, "label": original_label, "target_label": target_label}
    messages = fill(load_template("counterfactual_no_vt"), slots)
    resp = gateway.complete(gateway.request(messages, GENERATION_MAX_TOKENS))
    return CounterfactualCandidate(
        uid=uid or f"{original.id}:{target_label}:novt",
        task=task,
        generated_text=resp.text.strip(),
        used_phrase=None,
        finish_reason=resp.finish_reason,
    )


# ---------------------------------------------------------------------------
# Target planning
# ---------------------------------------------------------------------------


@dataclass
class AllOthers:
    pass


@dataclass
class RoundRobin:
    k: int
    _counter: "itertools.count" = field(init=False, repr=False)

    def __post_init__(self):
        self._counter = itertools.count()


@dataclass(frozen=True)
class RandomTargets:
    k: int
    seed: int = 0


TargetPolicy = AllOthers | RoundRobin | RandomTargets


def default_target_policy(label_set: Sequence[str], seed: int = 0) -> TargetPolicy:
    return AllOthers() if len(label_set) <= 6 else RandomTargets(3, seed)


def plan_targets(example, label_set: Sequence[str], policy: TargetPolicy | None = None) -> list[str]:
    """Target labels to generate counterfactuals toward, per policy."""
    if len(label_set) < 2:
        raise ValueError("need at least two labels to plan targets")
    policy = policy if policy is not None else default_target_policy(label_set)
    others = [l for l in label_set if l != example.label]
    if isinstance(policy, AllOthers):
        return others
    if isinstance(policy, RoundRobin):
        start = next(policy._counter) % len(others)
        k = min(policy.k, len(others))
        return [others[(start + i) % len(others)] for i in range(k)]
    if isinstance(policy, RandomTargets):
        rng = random.Random(f"{policy.seed}:{example.sentence.id}:{zlib.crc32(example.label.encode())}")
        return sorted(rng.sample(others, min(policy.k, len(others))), key=others.index)
    raise TypeError(f"unknown target policy {policy!r}")
