"""Segment text with a trained model, mark and recombine subwords, OOV metrics."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .corpus import Corpus, WordVocabulary
from .dictionary import SubwordDictionary, is_segmentable
from .errors import NoPathError, ParameterError, ReservedMarkerError, UnsegmentableWordError
from .graphs import GrammarFst, LatticeCache, ModelParams
from .wfst import LazyComposition

log = logging.getLogger(__name__)

MARKER = "+"


class Role(str, enum.Enum):
    SINGLETON = "singleton"
    PREFIX = "prefix"
    INFIX = "infix"
    SUFFIX = "suffix"


@dataclass(frozen=True)
class MarkedToken:
    text: str
    role: Role

    def __post_init__(self):
        if MARKER in self.text:
            raise ReservedMarkerError(self.text)

    def render(self) -> str:
        if self.role == Role.PREFIX:
            return self.text + MARKER
        if self.role == Role.INFIX:
            return MARKER + self.text + MARKER
        if self.role == Role.SUFFIX:
            return MARKER + self.text
        return self.text

    def __str__(self) -> str:
        return self.render()

    @classmethod
    def parse(cls, rendered: str) -> "MarkedToken":
        """Inverse of :meth:`render`; a lone or doubled marker is kept as text."""
        lead = len(rendered) > 1 and rendered.startswith(MARKER)
        trail = len(rendered) > 1 and rendered.endswith(MARKER)
        if lead and trail and len(rendered) > 2:
            return cls._make(rendered[1:-1], Role.INFIX)
        if lead and not trail:
            return cls._make(rendered[1:], Role.SUFFIX)
        if trail and not lead:
            return cls._make(rendered[:-1], Role.PREFIX)
        return cls._make(rendered, Role.SINGLETON)

    @classmethod
    def _make(cls, text: str, role: Role) -> "MarkedToken":
        # parsed text may carry stray markers; bypass the construction check
        token = object.__new__(cls)
        object.__setattr__(token, "text", text)
        object.__setattr__(token, "role", role)
        return token


def mark_context(seg: Sequence[str]) -> list[MarkedToken]:
    """Tag each piece of one word's segmentation with its position."""
    if not seg:
        raise ParameterError("cannot mark an empty segmentation")
    if len(seg) == 1:
        return [MarkedToken(seg[0], Role.SINGLETON)]
    roles = [Role.PREFIX] + [Role.INFIX] * (len(seg) - 2) + [Role.SUFFIX]
    return [MarkedToken(z, r) for z, r in zip(seg, roles)]


def render(tokens: Iterable[MarkedToken]) -> str:
    return " ".join(t.render() for t in tokens)


@dataclass
class Recombined:
    words: list[str]
    # indices into ``words`` of suffixes/infixes that had no open word
    malformed: list[int] = field(default_factory=list)
    # indices of words closed only because the sequence ended
    dangling: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.malformed and not self.dangling


def recombine(tokens: Iterable[MarkedToken | str]) -> Recombined:
    """Join marked subwords back into words.

    A prefix opens a word, infixes extend it and a suffix closes it. A
    suffix or infix with no open word is emitted as its own word and flagged
    malformed; a word still open at the end is closed and flagged dangling.
    """
    out = Recombined([])
    open_word: list[str] | None = None

    def close(flag: list[int] | None = None) -> None:
        nonlocal open_word
        if flag is not None:
            flag.append(len(out.words))
        out.words.append("".join(open_word))
        open_word = None

    for tok in tokens:
        if isinstance(tok, str):
            tok = MarkedToken.parse(tok)
        role = tok.role
        if role in (Role.SINGLETON, Role.PREFIX) and open_word is not None:
            close(out.dangling)
        if role == Role.SINGLETON:
            out.words.append(tok.text)
        elif role == Role.PREFIX:
            open_word = [tok.text]
        elif open_word is None:
            out.malformed.append(len(out.words))
            out.words.append(tok.render())
        else:
            open_word.append(tok.text)
            if role == Role.SUFFIX:
                close()
    if open_word is not None:
        close(out.dangling)
    if not out.ok:
        log.warning("recombination: %d malformed, %d dangling", len(out.malformed), len(out.dangling))
    return out


class Segmenter:
    """Best-path segmentation of tokens under one model, cached per word type."""

    def __init__(self, theta: ModelParams):
        self.theta = theta
        self.sg = GrammarFst(theta)
        self.lattices = LatticeCache(theta.dictionary)
        self._best: dict[str, tuple[str, ...] | None] = {}

    def best(self, word: str) -> tuple[str, ...]:
        try:
            seg = self._best[word]
        except KeyError:
            try:
                lazy = LazyComposition(self.lattices.lattice(word), self.sg)
                seg = lazy.best_path().labels
            except NoPathError:
                seg = None
            self._best[word] = seg
        if seg is None:
            raise UnsegmentableWordError(word)
        return seg


@dataclass
class SegmentedText:
    lines: list[str]
    tokens: int = 0
    unsegmentable: int = 0
    # (line number, token) of every token passed through unchanged, 1-based lines
    flagged: list[tuple[int, str]] = field(default_factory=list)


def segment_text(corpus: Corpus, theta: ModelParams, mark: bool = False,
                 segmenter: Segmenter | None = None) -> SegmentedText:
    """Replace every token by its best segmentation, pieces joined by spaces.

    Tokens that cannot be segmented are copied through unchanged and counted.
    """
    seg = segmenter or Segmenter(theta)
    out = SegmentedText([])
    for lineno, line in enumerate(corpus.tokens, 1):
        groups = []
        for token in line:
            out.tokens += 1
            try:
                pieces = seg.best(token)
                groups.append(render(mark_context(pieces)) if mark else " ".join(pieces))
            except (UnsegmentableWordError, ReservedMarkerError):
                out.unsegmentable += 1
                out.flagged.append((lineno, token))
                groups.append(token)
        out.lines.append(" ".join(groups))
    if out.unsegmentable:
        log.warning("%d of %d tokens could not be segmented", out.unsegmentable, out.tokens)
    return out


@dataclass(frozen=True)
class OovReport:
    tokens: int
    oov_tokens: int
    unsegmentable_tokens: int | None = None

    @property
    def oov_rate(self) -> float:
        return self.oov_tokens / self.tokens

    @property
    def unsegmentable_rate(self) -> float | None:
        if self.unsegmentable_tokens is None:
            return None
        return self.unsegmentable_tokens / self.tokens

    def to_text(self) -> str:
        lines = [f"tokens:{self.tokens}", f"oov_tokens:{self.oov_tokens}", f"oov_rate:{self.oov_rate!r}"]
        if self.unsegmentable_tokens is not None:
            lines += [f"unsegmentable_tokens:{self.unsegmentable_tokens}",
                      f"unsegmentable_rate:{self.unsegmentable_rate!r}"]
        return "\n".join(lines) + "\n"


def oov_rate(train_vocab: WordVocabulary, test: Corpus,
             dictionary: SubwordDictionary | None = None) -> OovReport:
    """Share of test tokens missing from the training vocabulary.

    With a dictionary, also counts test tokens that cannot be written as a
    concatenation of its entries.
    """
    total = test.num_tokens
    if not total:
        raise ParameterError("test corpus has no tokens")
    oov = sum(1 for t in test.iter_tokens() if t not in train_vocab)
    unseg = None
    if dictionary is not None:
        memo: dict[str, bool] = {}
        unseg = 0
        for t in test.iter_tokens():
            ok = memo.get(t)
            if ok is None:
                ok = memo[t] = is_segmentable(t, dictionary)
            unseg += not ok
    return OovReport(total, oov, unseg)
