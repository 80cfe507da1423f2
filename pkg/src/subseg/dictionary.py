"""Subword dictionaries: greedy n-gram BPE, length-capped BPE, and import.

Both learners rank character n-grams once by corpus count and take them
greedily, instead of re-counting pairs after every merge. After each
addition, any longer dictionary entry that is a substring of the new
codeword and has exactly the same count is dropped as redundant.
Single characters are never dropped, so every word over the training
alphabet stays segmentable.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import BinaryIO, Iterable, Sequence

from .corpus import CharMode, Corpus, NgramCountTable, build_vocabulary, decode_utf8, split_units
from .errors import DictionaryFormatError, ParameterError

log = logging.getLogger(__name__)

DEFAULT_CAPS = (48, 1000, 4000, 6000, 4000, 3000, 1952)
DEFAULT_SIZE = 20000
SUM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class SubwordDictionary:
    """Ordered codebook with a unigram probability per entry."""

    entries: tuple[str, ...]
    phi: tuple[float, ...]
    char_mode: CharMode = CharMode.CODEPOINT
    # number of codewords appended per n-gram length while learning (index = length)
    additions: tuple[int, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if len(self.entries) != len(self.phi):
            raise ParameterError("entries and probabilities differ in length")
        if len(set(self.entries)) != len(self.entries):
            raise ParameterError("dictionary entries are not unique")
        for z in self.entries:
            if not z or any(ch.isspace() for ch in z):
                raise ParameterError(f"invalid subword {z!r}")
        if any(p < 0 or math.isnan(p) for p in self.phi):
            raise ParameterError("negative probability in dictionary")
        if self.entries and abs(math.fsum(self.phi) - 1.0) > SUM_TOLERANCE:
            raise ParameterError(f"probabilities sum to {math.fsum(self.phi)!r}, not 1")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __contains__(self, subword: str) -> bool:
        return subword in self.index

    @cached_property
    def index(self) -> dict[str, int]:
        return {z: i for i, z in enumerate(self.entries)}

    @cached_property
    def probabilities(self) -> dict[str, float]:
        return dict(zip(self.entries, self.phi))

    def prob(self, subword: str) -> float:
        return self.probabilities.get(subword, 0.0)

    def units(self, subword: str) -> list[str]:
        return split_units(subword, self.char_mode)

    @cached_property
    def alphabet(self) -> frozenset[str]:
        """Every character occurring in any entry."""
        return frozenset(u for z in self.entries for u in self.units(z))

    @cached_property
    def single_characters(self) -> frozenset[str]:
        return frozenset(z for z in self.entries if len(self.units(z)) == 1)

    def to_tsv(self) -> str:
        return "".join(f"{z}\t{p:.12g}\n" for z, p in zip(self.entries, self.phi))

    @classmethod
    def from_tsv(cls, text: str, char_mode: CharMode | str = CharMode.CODEPOINT) -> "SubwordDictionary":
        entries, phi = [], []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DictionaryFormatError("expected subword<TAB>probability", lineno)
            try:
                p = float(parts[1])
            except ValueError:
                raise DictionaryFormatError(f"bad probability {parts[1]!r}", lineno) from None
            entries.append(parts[0])
            phi.append(p)
        if not entries:
            raise DictionaryFormatError("dictionary file is empty")
        return cls(tuple(entries), tuple(phi), CharMode(char_mode))

    @classmethod
    def from_counts(cls, entries: Sequence[str], counts: Sequence[float],
                    char_mode: CharMode | str = CharMode.CODEPOINT,
                    additions: tuple[int, ...] = ()) -> "SubwordDictionary":
        total = math.fsum(counts)
        if total <= 0:
            raise ParameterError("dictionary counts sum to zero")
        return cls(tuple(entries), tuple(c / total for c in counts), CharMode(char_mode), additions)


def _inner_substrings(codeword: str, char_mode: CharMode) -> set[str]:
    """Substrings of two or more characters, excluding the codeword itself."""
    units = split_units(codeword, char_mode)
    n = len(units)
    if char_mode == CharMode.CODEPOINT:
        return {codeword[i:j] for i in range(n) for j in range(i + 2, n + 1) if j - i < n}
    return {"".join(units[i:j]) for i in range(n) for j in range(i + 2, n + 1) if j - i < n}


class _GreedyBuilder:
    """Insertion-ordered codebook with the equal-count substring deletion."""

    def __init__(self, characters: Sequence[tuple[str, int]], char_mode: CharMode):
        self.char_mode = char_mode
        self.counts: dict[str, int] = {}
        for ch, count in characters:
            self.counts[ch] = count

    def __len__(self) -> int:
        return len(self.counts)

    def add(self, codeword: str, count: int) -> None:
        # single characters are never candidates for deletion
        for d in _inner_substrings(codeword, self.char_mode):
            if self.counts.get(d) == count:
                del self.counts[d]
                log.debug("dropping %r: substring of %r with equal count %d", d, codeword, count)
        self.counts[codeword] = count

    def build(self, additions: tuple[int, ...]) -> SubwordDictionary:
        return SubwordDictionary.from_counts(list(self.counts), list(self.counts.values()),
                                             self.char_mode, additions)


def _characters(psi: NgramCountTable, minimum: int | None = None) -> list[tuple[str, int]]:
    chars = psi.sorted_entries(1)
    if not chars:
        raise ParameterError("empty corpus: no characters to build a dictionary from")
    if minimum is not None and minimum < len(chars):
        raise ParameterError(f"dictionary size {minimum} is smaller than the {len(chars)} distinct characters")
    return chars


def learn_bpe(psi: NgramCountTable, size: int = DEFAULT_SIZE) -> SubwordDictionary:
    """Greedy BPE dictionary of at most ``size`` entries.

    Starts from all single characters, then repeatedly takes the
    highest-count remaining n-gram of length 2 or more (ties: shorter, then
    code-point order) until the dictionary holds ``size`` entries or the
    n-grams run out.
    """
    chars = _characters(psi, size)
    builder = _GreedyBuilder(chars, psi.char_mode)
    candidates = sorted(
        ((-count, n, key) for n in range(2, psi.max_len + 1) for key, count in psi[n].items()),
    )
    additions = [0] * (psi.max_len + 1)
    additions[1] = len(chars)
    for neg, n, key in candidates:
        if len(builder) >= size:
            break
        builder.add(key, -neg)
        additions[n] += 1
    if len(builder) < size:
        log.info("n-grams exhausted at %d entries (requested %d)", len(builder), size)
    return builder.build(tuple(additions))


def learn_extended_bpe(psi: NgramCountTable, caps: Sequence[int]) -> SubwordDictionary:
    """BPE with a cap on how many codewords of each length are added.

    ``caps[l-1]`` bounds the additions of length-``l`` codewords; ``caps[0]``
    must cover the character set, which is always included in full. The cap
    counts additions, so later deletions can leave fewer entries.
    """
    if not caps:
        raise ParameterError("at least one cap is required")
    if any(c < 0 for c in caps):
        raise ParameterError("caps must be non-negative")
    chars = _characters(psi, caps[0])
    builder = _GreedyBuilder(chars, psi.char_mode)
    additions = [0] * (max(len(caps), psi.max_len) + 1)
    additions[1] = len(chars)
    for n in range(2, len(caps) + 1):
        for key, count in psi.sorted_entries(n)[:caps[n - 1]]:
            builder.add(key, count)
            additions[n] += 1
    return builder.build(tuple(additions))


def parse_caps(text: str) -> tuple[int, ...]:
    try:
        caps = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise ParameterError(f"caps must be comma-separated integers, got {text!r}") from None
    return caps


def import_external(
    source: BinaryIO | bytes | str,
    corpus: Corpus | None = None,
    char_mode: CharMode | str = CharMode.CODEPOINT,
) -> SubwordDictionary:
    """Dictionary from a list of subwords, one per line, optionally with counts.

    Lines are ``subword`` or ``subword<TAB>count`` (any whitespace works as
    the separator). Without counts the distribution is uniform. Repeated
    subwords are merged, summing their counts.
    """
    if isinstance(source, str):
        text = source
    else:
        data = source if isinstance(source, (bytes, bytearray)) else source.read()
        text = decode_utf8(bytes(data))
    counts: dict[str, float] = {}
    with_counts: bool | None = None
    for lineno, line in enumerate(text.split("\n"), 1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) > 2:
            raise DictionaryFormatError(f"expected subword or subword<TAB>count, got {len(fields)} fields", lineno)
        has_count = len(fields) == 2
        if with_counts is None:
            with_counts = has_count
        elif with_counts != has_count:
            raise DictionaryFormatError("counts must be given for every entry or for none", lineno)
        count = 1.0
        if has_count:
            try:
                count = float(fields[1])
            except ValueError:
                raise DictionaryFormatError(f"bad count {fields[1]!r}", lineno) from None
            if not math.isfinite(count) or count < 0:
                raise DictionaryFormatError(f"bad count {fields[1]!r}", lineno)
        counts[fields[0]] = counts.get(fields[0], 0.0) + count
    if not counts:
        raise DictionaryFormatError("dictionary source is empty")
    d = SubwordDictionary.from_counts(list(counts), list(counts.values()), char_mode)
    if corpus is not None:
        vocab = build_vocabulary(corpus)
        bad = sum(1 for w in vocab.entries if not is_segmentable(w, d))
        if bad:
            log.warning("%d of %d word types cannot be segmented with the imported dictionary",
                        bad, len(vocab))
    return d


def is_segmentable(word: str, dictionary: SubwordDictionary | Iterable[str],
                   char_mode: CharMode | str | None = None) -> bool:
    """Whether ``word`` is a concatenation of dictionary entries."""
    if isinstance(dictionary, SubwordDictionary):
        entries = dictionary.index
        mode = dictionary.char_mode if char_mode is None else CharMode(char_mode)
    else:
        entries = set(dictionary)
        mode = CharMode.CODEPOINT if char_mode is None else CharMode(char_mode)
    units = split_units(word, mode)
    n = len(units)
    if n == 0:
        return False
    reach = [False] * (n + 1)
    reach[0] = True
    for i in range(n):
        if not reach[i]:
            continue
        piece = ""
        for j in range(i, n):
            piece += units[j]
            if piece in entries:
                reach[j + 1] = True
    return reach[n]
