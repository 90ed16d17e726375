"""Pattern synthesis from labeled examples.

Bottom-up beam search over atom sequences scored by F1 against the positive
and negative examples, followed by a greedy set cover that picks up to
`max_patterns` high-precision patterns whose union covers the positives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .annotation import AnnotatedSentence, SynonymLexicon
from .errors import PatvarError
from .patterns import (
    WILDCARD,
    Atom,
    EntityAtom,
    PatternAst,
    PosAtom,
    SoftAtom,
    StemAtom,
    WildcardAtom,
    match_sentence,
    render_pattern,
)


class EmptyPositives(PatvarError):
    pass


class NoViablePattern(PatvarError):
    """No candidate met the precision floor; caller may retry with a lower one."""


@dataclass(frozen=True)
class LabeledExample:
    sentence: AnnotatedSentence
    label: str

    def __post_init__(self):
        if not self.label:
            raise ValueError("label must be non-empty")


@dataclass(frozen=True)
class SynthesisConfig:
    max_patterns: int = 5
    max_atoms: int = 4
    min_precision: float = 1.0
    beam_width: int = 200

    def __post_init__(self):
        if self.max_patterns < 1 or self.max_atoms < 1:
            raise ValueError("max_patterns and max_atoms must be >= 1")


@dataclass(frozen=True)
class ScoredPattern:
    pattern: PatternAst
    matched_positive_ids: frozenset[str]
    matched_negative_ids: frozenset[str]
    precision: float
    recall: float
    f1: float
    rendered: str = field(default="", compare=False)


def enumerate_atoms(s: AnnotatedSentence, lex: SynonymLexicon) -> set[Atom]:
    """Candidate atoms derivable from one sentence, plus the wildcard."""
    atoms: set[Atom] = {WILDCARD}
    for token in s.tokens:
        if token.pos != "OTHER":
            atoms.add(PosAtom(token.pos))
        atoms.add(StemAtom(token.lemma))
        if token.lemma in lex:
            atoms.add(SoftAtom(token.lemma))
        if token.entity is not None:
            atoms.add(EntityAtom(token.entity))
    return atoms


def _score(
    seq: tuple[Atom, ...],
    positives: list[LabeledExample],
    negatives: list[LabeledExample],
    lex: SynonymLexicon,
) -> ScoredPattern:
    pattern = PatternAst((seq,))
    pos_ids = frozenset(
        ex.sentence.id for ex in positives if match_sentence(pattern, ex.sentence, lex)
    )
    neg_ids = frozenset(
        ex.sentence.id for ex in negatives if match_sentence(pattern, ex.sentence, lex)
    )
    hits = len(pos_ids) + len(neg_ids)
    precision = len(pos_ids) / hits if hits else 0.0
    recall = len(pos_ids) / len(positives)
    f1 = (
        2 * precision * recall / (precision + recall)
        if precision + recall > 0
        else 0.0
    )
    return ScoredPattern(pattern, pos_ids, neg_ids, precision, recall, f1, render_pattern(pattern))


def _beam_key(sp: ScoredPattern):
    return (-sp.f1, len(sp.pattern.alternatives[0]), sp.rendered)


def score_pattern(
    pattern: PatternAst,
    positives: list[LabeledExample],
    negatives: list[LabeledExample],
    lex: SynonymLexicon,
) -> ScoredPattern:
    """Score an arbitrary (possibly multi-alternative) pattern against examples."""
    pos_ids = frozenset(
        ex.sentence.id for ex in positives if match_sentence(pattern, ex.sentence, lex)
    )
    neg_ids = frozenset(
        ex.sentence.id for ex in negatives if match_sentence(pattern, ex.sentence, lex)
    )
    hits = len(pos_ids) + len(neg_ids)
    precision = len(pos_ids) / hits if hits else 0.0
    recall = len(pos_ids) / len(positives) if positives else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return ScoredPattern(pattern, pos_ids, neg_ids, precision, recall, f1, render_pattern(pattern))


def enumerate_candidates(
    positives: list[LabeledExample],
    negatives: list[LabeledExample],
    cfg: SynthesisConfig,
    lex: SynonymLexicon,
) -> list[ScoredPattern]:
    """Beam-searched single-sequence candidates that match at least one positive.

    Sequences grow one atom per round up to `max_atoms`; each round keeps the
    top `beam_width` by F1 (ties: shorter, then lexicographic render).
    Consecutive wildcards are never generated, and a bare wildcard is kept in
    the beam as a seed but never returned as a candidate.
    """
    if not positives:
        raise EmptyPositives("need at least one positive example")
    atom_pool = set()
    for ex in positives:
        atom_pool |= enumerate_atoms(ex.sentence, lex)
    atoms = sorted(atom_pool, key=lambda a: (render_pattern(PatternAst(((a,),)))))

    def useful(sp: ScoredPattern) -> bool:
        seq = sp.pattern.alternatives[0]
        if all(isinstance(a, WildcardAtom) for a in seq):
            return False
        return bool(sp.matched_positive_ids)

    candidates: dict[str, ScoredPattern] = {}
    beam = [_score((atom,), positives, negatives, lex) for atom in atoms]
    beam.sort(key=_beam_key)
    for sp in beam:
        if useful(sp):
            candidates.setdefault(sp.rendered, sp)
    for _ in range(cfg.max_atoms - 1):
        beam = beam[: cfg.beam_width]
        extended: list[ScoredPattern] = []
        for sp in beam:
            seq = sp.pattern.alternatives[0]
            # A pattern that matches nothing cannot start matching by growing.
            if not sp.matched_positive_ids and not sp.matched_negative_ids:
                continue
            for atom in atoms:
                if isinstance(atom, WildcardAtom) and isinstance(seq[-1], WildcardAtom):
                    continue
                child = _score(seq + (atom,), positives, negatives, lex)
                extended.append(child)
                if useful(child):
                    candidates.setdefault(child.rendered, child)
        if not extended:
            break
        beam = sorted(extended, key=_beam_key)
    return sorted(candidates.values(), key=_beam_key)


def synthesize_patterns(
    positives: list[LabeledExample],
    negatives: list[LabeledExample],
    cfg: SynthesisConfig,
    lex: SynonymLexicon,
) -> list[PatternAst]:
    """Greedy set cover over the high-precision candidates.

    Repeatedly picks the candidate covering the most not-yet-covered
    positives (ties: higher F1, then shorter, then lexicographic render)
    until the positives are covered, nothing adds coverage, or
    `max_patterns` is reached.
    """
    candidates = enumerate_candidates(positives, negatives, cfg, lex)
    viable = [sp for sp in candidates if sp.precision >= cfg.min_precision - 1e-12]
    if not viable:
        raise NoViablePattern(
            f"no candidate reaches precision {cfg.min_precision} "
            f"({len(candidates)} candidates considered)"
        )
    uncovered = {ex.sentence.id for ex in positives}
    chosen: list[PatternAst] = []
    while uncovered and len(chosen) < cfg.max_patterns:
        best = min(
            viable,
            key=lambda sp: (
                -len(sp.matched_positive_ids & uncovered),
                -sp.f1,
                len(sp.pattern.alternatives[0]),
                sp.rendered,
            ),
        )
        if not best.matched_positive_ids & uncovered:
            break
        chosen.append(best.pattern)
        uncovered -= best.matched_positive_ids
    return chosen
