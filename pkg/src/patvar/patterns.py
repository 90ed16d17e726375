"""The neuro-symbolic pattern language: parsing, rendering, and matching.

Grammar (flat, no grouping):

    pattern := seq ('|' seq)*
    seq     := atom ('+' atom)*
    atom    := POSTAG | '[' word ']' | '(' word ')' | '$' TAG | '*'

`[word]` matches a token by lemma, `(word)` matches any token whose lemma is
in the word's synonym set, `$TAG` matches a token carrying that entity tag,
a bare POS tag matches by part of speech, and `*` matches any span of zero
or more tokens. `+` joins atoms into an adjacent sequence; `|` separates
alternatives. Matching is unanchored: a pattern matches a sentence when some
alternative matches a contiguous token span anywhere in it.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

from .annotation import POS_TAGS, AnnotatedSentence, SynonymLexicon, Token
from .errors import PatvarError

logger = logging.getLogger(__name__)


class PatternSyntaxError(PatvarError):
    """Pattern text could not be parsed; `column` is 1-based."""

    def __init__(self, message: str, column: int):
        self.column = column
        super().__init__(f"column {column}: {message}")


class InputTooLarge(PatvarError):
    """Input exceeds the brute-force matcher's precondition."""


@dataclass(frozen=True)
class PosAtom:
    tag: str


@dataclass(frozen=True)
class StemAtom:
    lemma: str


@dataclass(frozen=True)
class SoftAtom:
    lemma: str


@dataclass(frozen=True)
class EntityAtom:
    tag: str


@dataclass(frozen=True)
class WildcardAtom:
    pass


Atom = PosAtom | StemAtom | SoftAtom | EntityAtom | WildcardAtom
WILDCARD = WildcardAtom()

Sequence = tuple[Atom, ...]


@dataclass(frozen=True)
class PatternAst:
    alternatives: tuple[Sequence, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "alternatives", tuple(tuple(seq) for seq in self.alternatives)
        )
        if not self.alternatives:
            raise ValueError("pattern must have at least one alternative")
        for seq in self.alternatives:
            if not seq:
                raise ValueError("pattern sequence must have at least one atom")
            for a, b in zip(seq, seq[1:]):
                if isinstance(a, WildcardAtom) and isinstance(b, WildcardAtom):
                    raise ValueError("consecutive wildcards must be collapsed")

    def atom_count(self) -> int:
        return sum(len(seq) for seq in self.alternatives)


@dataclass(frozen=True)
class MatchSpan:
    """A contiguous token span matched by one alternative.

    `bindings[i]` is the half-open token range bound by atom i of the
    matched alternative; non-wildcard atoms bind exactly one token.
    """

    start: int
    end: int
    alternative: int = 0
    bindings: tuple[tuple[int, int], ...] = field(default_factory=tuple)

    def text(self, sentence: AnnotatedSentence) -> str:
        return " ".join(t.surface for t in sentence.tokens[self.start : self.end])


# ---------------------------------------------------------------------------
# Parsing and rendering
# ---------------------------------------------------------------------------

_DELIMITERS = set("+|")
_META = set("[]()$*+|")


def _read_word(text: str, i: int, closer: str) -> tuple[str, int]:
    # i points at the opening bracket; returns (word, index after closer)
    col = i + 1
    j = text.find(closer, i + 1)
    if j < 0:
        raise PatternSyntaxError(f"unclosed {text[i]!r}", col)
    word = text[i + 1 : j].strip()
    if not word:
        raise PatternSyntaxError("empty atom", col)
    if any(ch.isspace() for ch in word) or any(ch in _META for ch in word):
        raise PatternSyntaxError(f"atom word must be a single plain word: {word!r}", col)
    return word.lower(), j + 1


def parse_pattern(text: str) -> PatternAst:
    """Parse pattern text. Raises PatternSyntaxError with a 1-based column."""
    alternatives: list[list[Atom]] = []
    seq: list[Atom] = []
    i = 0
    n = len(text)
    expect_atom = True
    while True:
        while i < n and text[i].isspace():
            i += 1
        if i >= n:
            break
        ch = text[i]
        col = i + 1
        if expect_atom:
            if ch == "[":
                word, i = _read_word(text, i, "]")
                atom: Atom = StemAtom(word)
            elif ch == "(":
                word, i = _read_word(text, i, ")")
                atom = SoftAtom(word)
            elif ch == "$":
                j = i + 1
                while j < n and (text[j].isalnum() or text[j] in "_-"):
                    j += 1
                tag = text[i + 1 : j]
                if not tag:
                    raise PatternSyntaxError("empty entity tag", col)
                atom = EntityAtom(tag.upper())
                i = j
            elif ch == "*":
                atom = WILDCARD
                i += 1
            elif ch in _DELIMITERS:
                raise PatternSyntaxError("empty atom before separator", col)
            else:
                j = i
                while j < n and not text[j].isspace() and text[j] not in _META:
                    j += 1
                name = text[i:j]
                if name in POS_TAGS:
                    atom = PosAtom(name)
                else:
                    raise PatternSyntaxError(
                        f"{name!r} is not a POS tag; write [word] or (word) for lemmas", col
                    )
                i = j
            # Adjacent wildcards collapse to one at parse time.
            if not (isinstance(atom, WildcardAtom) and seq and isinstance(seq[-1], WildcardAtom)):
                seq.append(atom)
            expect_atom = False
        else:
            if ch == "+":
                expect_atom = True
                i += 1
            elif ch == "|":
                alternatives.append(seq)
                seq = []
                expect_atom = True
                i += 1
            else:
                raise PatternSyntaxError(f"expected '+', '|', or end, got {ch!r}", col)
    if expect_atom:
        if not seq and not alternatives:
            raise PatternSyntaxError("empty pattern", 1)
        raise PatternSyntaxError("dangling separator", n)
    alternatives.append(seq)
    return PatternAst(tuple(tuple(s) for s in alternatives))


def render_atom(atom: Atom) -> str:
    if isinstance(atom, PosAtom):
        return atom.tag
    if isinstance(atom, StemAtom):
        return f"[{atom.lemma}]"
    if isinstance(atom, SoftAtom):
        return f"({atom.lemma})"
    if isinstance(atom, EntityAtom):
        return f"${atom.tag}"
    return "*"


def render_pattern(p: PatternAst) -> str:
    """Canonical text form; parse_pattern(render_pattern(p)) == p."""
    return "|".join("+".join(render_atom(a) for a in seq) for seq in p.alternatives)


# ---------------------------------------------------------------------------
# Matching
# ---------------------------------------------------------------------------


def atom_matches_token(atom: Atom, token: Token, lex: SynonymLexicon) -> bool:
    if isinstance(atom, PosAtom):
        return token.pos == atom.tag
    if isinstance(atom, StemAtom):
        return token.lemma == atom.lemma
    if isinstance(atom, SoftAtom):
        return token.lemma in lex.synonyms_of(atom.lemma)
    if isinstance(atom, EntityAtom):
        return token.entity == atom.tag
    raise TypeError(f"wildcards have no single-token semantics: {atom!r}")


def _match_seq_at(
    seq: Sequence, tokens: tuple[Token, ...], start: int, lex: SynonymLexicon
) -> tuple[int, tuple[tuple[int, int], ...]] | None:
    """Shortest match of `seq` anchored at `start`, or None.

    Wildcards expand zero tokens first, so the first success found is the
    one with the leftmost-shortest wildcard bindings and thus minimal end.
    """

    def rec(ai: int, ti: int, acc: list[tuple[int, int]]):
        if ai == len(seq):
            return ti, tuple(acc)
        atom = seq[ai]
        if isinstance(atom, WildcardAtom):
            for take in range(len(tokens) - ti + 1):
                acc.append((ti, ti + take))
                res = rec(ai + 1, ti + take, acc)
                if res is not None:
                    return res
                acc.pop()
            return None
        if ti < len(tokens) and atom_matches_token(atom, tokens[ti], lex):
            acc.append((ti, ti + 1))
            res = rec(ai + 1, ti + 1, acc)
            if res is not None:
                return res
            acc.pop()
        return None

    return rec(0, start, [])


def match_sentence(p: PatternAst, s: AnnotatedSentence, lex: SynonymLexicon) -> bool:
    """True iff some alternative matches a contiguous span anywhere in `s`."""
    for start in range(len(s.tokens) + 1):
        for seq in p.alternatives:
            if _match_seq_at(seq, s.tokens, start, lex) is not None:
                return True
    return False


def find_matches(p: PatternAst, s: AnnotatedSentence, lex: SynonymLexicon) -> list[MatchSpan]:
    """All maximal match spans, leftmost first.

    Per start position the shortest match wins (ties go to the earlier
    alternative); spans strictly contained in another reported span are
    dropped, and a zero-length match (possible only for all-wildcard
    alternatives) is reported once, at position 0.
    """
    raw: list[MatchSpan] = []
    for start in range(len(s.tokens) + 1):
        best: MatchSpan | None = None
        for idx, seq in enumerate(p.alternatives):
            res = _match_seq_at(seq, s.tokens, start, lex)
            if res is None:
                continue
            end, bindings = res
            if best is None or end < best.end:
                best = MatchSpan(start, end, idx, bindings)
        if best is None:
            continue
        if best.end == best.start and best.start > 0:
            continue
        raw.append(best)
    kept = [
        span
        for span in raw
        if not any(
            other.start <= span.start
            and span.end <= other.end
            and (other.start, other.end) != (span.start, span.end)
            for other in raw
        )
    ]
    return kept


def brute_force_match(p: PatternAst, s: AnnotatedSentence, lex: SynonymLexicon) -> bool:
    """Exhaustive matching oracle: try every span and every partition of it.

    Kept deliberately independent of the backtracking matcher so the two can
    check each other. Only valid for small inputs.
    """
    if len(s.tokens) > 12:
        raise InputTooLarge(f"sentence has {len(s.tokens)} tokens (limit 12)")
    if p.atom_count() > 5:
        raise InputTooLarge(f"pattern has {p.atom_count()} atoms (limit 5)")
    tokens = s.tokens
    n = len(tokens)
    for seq in p.alternatives:
        k = len(seq)
        # can_match[i][t]: atom i accepts token t (wildcards accept anything)
        can_match = [
            [True] * n if isinstance(atom, WildcardAtom) else [atom_matches_token(atom, t, lex) for t in tokens]
            for atom in seq
        ]
        for start in range(n + 1):
            for end in range(start, n + 1):
                # Cut points partition [start, end) into k consecutive pieces.
                for cuts in itertools.combinations_with_replacement(range(start, end + 1), k - 1):
                    bounds = (start, *cuts, end)
                    ok = True
                    for ai, atom in enumerate(seq):
                        lo, hi = bounds[ai], bounds[ai + 1]
                        if isinstance(atom, WildcardAtom):
                            continue
                        if hi - lo != 1 or not can_match[ai][lo]:
                            ok = False
                            break
                    if ok:
                        return True
    return False
