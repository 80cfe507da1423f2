"""Corpus ingestion, word vocabulary and character n-gram counting."""

from __future__ import annotations

import enum
import io
from collections import Counter
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator, Mapping, Sequence

import regex

from .errors import CorpusDecodeError, ParameterError, SubsegError

DEFAULT_MAX_NGRAM = 7

_GRAPHEME = regex.compile(r"\X")


class CharMode(str, enum.Enum):
    """What counts as one character."""

    CODEPOINT = "codepoint"
    GRAPHEME = "grapheme"


def split_units(text: str, char_mode: CharMode | str = CharMode.CODEPOINT) -> list[str]:
    """Split ``text`` into characters under ``char_mode``."""
    if char_mode == CharMode.CODEPOINT:
        return list(text)
    if char_mode == CharMode.GRAPHEME:
        return _GRAPHEME.findall(text)
    raise ParameterError(f"unknown char mode {char_mode!r}")


def unit_length(text: str, char_mode: CharMode | str = CharMode.CODEPOINT) -> int:
    if char_mode == CharMode.CODEPOINT:
        return len(text)
    return len(split_units(text, char_mode))


def tie_break_key(text: str, count: int, char_mode: CharMode | str = CharMode.CODEPOINT):
    """Sort key: descending count, then shorter, then code-point order."""
    return (-count, unit_length(text, char_mode), text)


@dataclass(frozen=True)
class Corpus:
    lines: tuple[str, ...]
    tokens: tuple[tuple[str, ...], ...]
    char_mode: CharMode = CharMode.CODEPOINT

    def __len__(self) -> int:
        return len(self.lines)

    def iter_tokens(self) -> Iterator[str]:
        for line in self.tokens:
            yield from line

    @property
    def num_tokens(self) -> int:
        return sum(len(line) for line in self.tokens)

    @classmethod
    def from_lines(cls, lines: Iterable[str], char_mode: CharMode | str = CharMode.CODEPOINT) -> "Corpus":
        kept = []
        toks = []
        for line in lines:
            words = tuple(line.split())
            if words:
                kept.append(line)
                toks.append(words)
        return cls(tuple(kept), tuple(toks), CharMode(char_mode))


def decode_utf8(data: bytes) -> str:
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorpusDecodeError(exc.start) from None


def load_corpus(source: BinaryIO | bytes, char_mode: CharMode | str = CharMode.CODEPOINT) -> Corpus:
    """Read UTF-8 text into lines of whitespace-delimited tokens.

    Blank lines are dropped. Lines are split on ``\\n`` only; any other
    whitespace (including ``\\r``) separates tokens.
    """
    data = source if isinstance(source, (bytes, bytearray)) else source.read()
    text = decode_utf8(bytes(data))
    return Corpus.from_lines(text.split("\n"), char_mode)


@dataclass(frozen=True)
class WordVocabulary:
    entries: Mapping[str, int]

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, word: str) -> bool:
        return word in self.entries

    def __getitem__(self, word: str) -> int:
        return self.entries[word]

    @property
    def total(self) -> int:
        return sum(self.entries.values())

    def sorted_items(self, char_mode: CharMode | str = CharMode.CODEPOINT) -> list[tuple[str, int]]:
        return sorted(self.entries.items(), key=lambda kv: tie_break_key(kv[0], kv[1], char_mode))

    def to_tsv(self, char_mode: CharMode | str = CharMode.CODEPOINT) -> str:
        return "".join(f"{w}\t{c}\n" for w, c in self.sorted_items(char_mode))

    @classmethod
    def from_tsv(cls, text: str) -> "WordVocabulary":
        entries: dict[str, int] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise SubsegError(f"vocabulary line {lineno}: expected word<TAB>count")
            try:
                count = int(parts[1])
            except ValueError:
                raise SubsegError(f"vocabulary line {lineno}: bad count {parts[1]!r}") from None
            if count <= 0 or not parts[0] or any(ch.isspace() for ch in parts[0]):
                raise SubsegError(f"vocabulary line {lineno}: invalid entry")
            entries[parts[0]] = entries.get(parts[0], 0) + count
        return cls(entries)


def build_vocabulary(corpus: Corpus) -> WordVocabulary:
    return WordVocabulary(dict(Counter(corpus.iter_tokens())))


@dataclass(frozen=True)
class NgramCountTable:
    """Character n-gram counts, one table per length ``1..max_len``."""

    tables: Mapping[int, Mapping[str, int]]
    max_len: int = DEFAULT_MAX_NGRAM
    char_mode: CharMode = CharMode.CODEPOINT
    _sorted: dict = field(default_factory=dict, repr=False, compare=False)

    def __getitem__(self, length: int) -> Mapping[str, int]:
        return self.tables.get(length, {})

    def sorted_entries(self, length: int) -> list[tuple[str, int]]:
        """Entries of one table in descending count order (ties: code point)."""
        cached = self._sorted.get(length)
        if cached is None:
            # every key in one table has the same length, so code-point order decides ties
            cached = sorted(self[length].items(), key=lambda kv: (-kv[1], kv[0]))
            self._sorted[length] = cached
        return cached

    def characters(self) -> set[str]:
        return set(self[1])

    def to_tsv(self) -> str:
        out = io.StringIO()
        for length in range(1, self.max_len + 1):
            for key, count in self.sorted_entries(length):
                out.write(f"{length}\t{key}\t{count}\n")
        return out.getvalue()

    @classmethod
    def from_tsv(cls, text: str, char_mode: CharMode | str = CharMode.CODEPOINT) -> "NgramCountTable":
        tables: dict[int, dict[str, int]] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise SubsegError(f"n-gram line {lineno}: expected length<TAB>ngram<TAB>count")
            try:
                length, count = int(parts[0]), int(parts[2])
            except ValueError:
                raise SubsegError(f"n-gram line {lineno}: bad number") from None
            tables.setdefault(length, {})[parts[1]] = count
        max_len = max(tables, default=DEFAULT_MAX_NGRAM)
        return cls(tables, max_len, CharMode(char_mode))


def count_word_ngrams(
    words: Mapping[str, int] | Sequence[tuple[str, int]],
    max_len: int = DEFAULT_MAX_NGRAM,
    char_mode: CharMode | str = CharMode.CODEPOINT,
) -> NgramCountTable:
    """Count in-word character n-grams, weighting each word by its count."""
    if max_len < 1:
        raise ParameterError("maximum n-gram length must be at least 1")
    char_mode = CharMode(char_mode)
    items = words.items() if isinstance(words, Mapping) else words
    tables: dict[int, Counter] = {n: Counter() for n in range(1, max_len + 1)}
    for word, count in items:
        units = split_units(word, char_mode)
        size = len(units)
        if char_mode == CharMode.CODEPOINT:
            for n in range(1, min(max_len, size) + 1):
                table = tables[n]
                for i in range(size - n + 1):
                    table[word[i:i + n]] += count
        else:
            for n in range(1, min(max_len, size) + 1):
                table = tables[n]
                for i in range(size - n + 1):
                    table["".join(units[i:i + n])] += count
    return NgramCountTable({n: dict(t) for n, t in tables.items()}, max_len, char_mode)


def count_char_ngrams(
    corpus: Corpus,
    max_len: int = DEFAULT_MAX_NGRAM,
    type_weighted: bool = False,
) -> NgramCountTable:
    """Character n-gram tables for a corpus.

    By default every token occurrence contributes; ``type_weighted`` counts
    each distinct word once instead.
    """
    vocab = build_vocabulary(corpus)
    entries = {w: 1 for w in vocab.entries} if type_weighted else vocab.entries
    return count_word_ngrams(entries, max_len, corpus.char_mode)


def merge_tables(parts: Iterable[NgramCountTable]) -> NgramCountTable:
    """Sum tables counted on separate shards of a corpus."""
    parts = list(parts)
    if not parts:
        raise ParameterError("nothing to merge")
    max_len = parts[0].max_len
    char_mode = parts[0].char_mode
    tables: dict[int, Counter] = {n: Counter() for n in range(1, max_len + 1)}
    for part in parts:
        if part.max_len != max_len or part.char_mode != char_mode:
            raise ParameterError("cannot merge tables with different settings")
        for n, table in part.tables.items():
            tables[n].update(table)
    return NgramCountTable({n: dict(t) for n, t in tables.items()}, max_len, char_mode)
