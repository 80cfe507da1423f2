"""The dictionary, grammar, word and output transducers of the segmenter.

* dictionary transducer: characters in, one subword out per dictionary path
* grammar acceptor: scores a subword sequence with the unigram/bigram model
  ``phi(z1) * prod_m B(z_m | z_m-1) * phi(z_m)``
* word transducer: a single chain spelling one word
* output lattice: ``project_output(connect_topsort(W o SD o SG))``, an
  acyclic acceptor whose paths are the word's segmentations
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from .corpus import CharMode, split_units
from .dictionary import SUM_TOLERANCE, SubwordDictionary
from .errors import DictionaryFormatError, ParameterError, UnsegmentableWordError
from .wfst import EPSILON, Arc, Wfst, compose, connect_topsort, project_output, remove_epsilon


@dataclass(frozen=True)
class BigramModel:
    """Conditional subword probabilities ``B(next | context)``.

    Contexts without a row are uniform over the ``size`` dictionary entries.
    Within a stored row, next subwords that are not listed get the row's
    default probability (zero unless a probability floor was applied).
    """

    size: int
    rows: Mapping[str, Mapping[str, float]]
    defaults: Mapping[str, float]

    @classmethod
    def uniform(cls, size: int) -> "BigramModel":
        return cls(size, {}, {})

    def prob(self, nxt: str, context: str) -> float:
        row = self.rows.get(context)
        if row is None:
            return 1.0 / self.size
        p = row.get(nxt)
        return self.defaults.get(context, 0.0) if p is None else p

    def row_total(self, context: str) -> float:
        row = self.rows.get(context)
        if row is None:
            return 1.0
        return math.fsum(row.values()) + (self.size - len(row)) * self.defaults.get(context, 0.0)

    def validate(self, entries: Mapping[str, int] | frozenset[str]) -> None:
        for ctx, row in self.rows.items():
            if ctx not in entries:
                raise ParameterError(f"bigram context {ctx!r} is not in the dictionary")
            for nxt in row:
                if nxt not in entries:
                    raise ParameterError(f"bigram entry {ctx!r} -> {nxt!r} is not in the dictionary")
            if abs(self.row_total(ctx) - 1.0) > SUM_TOLERANCE:
                raise ParameterError(f"bigram row {ctx!r} sums to {self.row_total(ctx)!r}")

    def to_tsv(self, order: list[str] | None = None) -> str:
        """``context<TAB>next<TAB>probability`` lines.

        A row's default probability is written with an empty ``next`` field.
        """
        contexts = list(self.rows) if order is None else [z for z in order if z in self.rows]
        position = {z: i for i, z in enumerate(order)} if order is not None else None
        lines = []
        for ctx in contexts:
            row = self.rows[ctx]
            nexts = list(row) if position is None else sorted(row, key=position.__getitem__)
            for nxt in nexts:
                lines.append(f"{ctx}\t{nxt}\t{row[nxt]:.12g}\n")
            default = self.defaults.get(ctx, 0.0)
            if default > 0:
                lines.append(f"{ctx}\t\t{default:.12g}\n")
        return "".join(lines)

    @classmethod
    def from_tsv(cls, text: str, size: int) -> "BigramModel":
        rows: dict[str, dict[str, float]] = {}
        defaults: dict[str, float] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DictionaryFormatError("expected context<TAB>next<TAB>probability", lineno)
            try:
                p = float(parts[2])
            except ValueError:
                raise DictionaryFormatError(f"bad probability {parts[2]!r}", lineno) from None
            if parts[1]:
                rows.setdefault(parts[0], {})[parts[1]] = p
            else:
                rows.setdefault(parts[0], {})
                defaults[parts[0]] = p
        return cls(size, rows, defaults)


@dataclass(frozen=True)
class ModelParams:
    dictionary: SubwordDictionary
    bigram: BigramModel

    def __post_init__(self):
        if self.bigram.size != len(self.dictionary):
            raise ParameterError("bigram model and dictionary differ in size")
        self.bigram.validate(self.dictionary.index)

    @classmethod
    def initial(cls, dictionary: SubwordDictionary) -> "ModelParams":
        """Dictionary unigrams with uniform conditionals."""
        return cls(dictionary, BigramModel.uniform(len(dictionary)))

    def score(self, segmentation) -> float:
        """Probability of a subword sequence under the bigram model."""
        if not segmentation:
            return 0.0
        phi = self.dictionary.prob
        p = phi(segmentation[0])
        for prev, z in zip(segmentation, segmentation[1:]):
            p *= self.bigram.prob(z, prev) * phi(z)
        return p


# ---------------------------------------------------------------------------


def build_sd_wfst(d: SubwordDictionary) -> Wfst:
    """Loop-state transducer mapping character strings to dictionary entries."""
    if not len(d):
        raise ParameterError("dictionary is empty")
    return _loop_transducer(d.entries, d.char_mode, d.alphabet, d.entries)


def _loop_transducer(entries, char_mode, isyms, osyms) -> Wfst:
    fst = Wfst(isyms=isyms, osyms=osyms)
    fst.char_mode = char_mode
    loop = fst.add_state()
    fst.set_start(loop)
    fst.set_final(loop, 0.0)
    for z in entries:
        units = split_units(z, char_mode)
        prev = loop
        for k, unit in enumerate(units):
            last = k == len(units) - 1
            nxt = loop if last else fst.add_state()
            fst.add_arc(prev, unit, z if last else EPSILON, 0.0, nxt)
            prev = nxt
    return fst


class GrammarFst:
    """Subword acceptor scoring sequences with the unigram/bigram model.

    State 0 is the start; every subword with non-zero probability owns one
    final state reached by arcs labelled with it. Arcs are produced on
    request, so the ``|D|^2`` bigram arcs are never stored.
    """

    def __init__(self, theta: ModelParams):
        d = theta.dictionary
        self.theta = theta
        self.isyms = self.osyms = frozenset(d.entries)
        self.start = 0
        live = [z for z, p in zip(d.entries, d.phi) if p > 0]
        self._labels = [EPSILON] + live
        self._state = {z: i + 1 for i, z in enumerate(live)}
        self._phi = d.probabilities
        self._first = {z: -math.log(self._phi[z]) for z in live}
        self._rows = theta.bigram.rows
        self._defaults = theta.bigram.defaults
        self._uniform = 1.0 / theta.bigram.size
        self._memo: list[dict[str, tuple]] = [{} for _ in self._labels]

    @property
    def num_states(self) -> int:
        return len(self._labels)

    def states(self) -> range:
        return range(len(self._labels))

    def label(self, state: int) -> str:
        return self._labels[state]

    def state_of(self, subword: str) -> int | None:
        return self._state.get(subword)

    def final(self, state: int) -> float | None:
        return 0.0 if state > 0 else None

    def matching(self, state: int, label: str):
        memo = self._memo[state]
        hit = memo.get(label)
        if hit is None:
            hit = memo[label] = self._compute(state, label)
        return hit

    def _compute(self, state: int, label: str):
        target = self._state.get(label)
        if target is None:
            return ()
        if state == 0:
            return (Arc(label, label, self._first[label], target),)
        ctx = self._labels[state]
        row = self._rows.get(ctx)
        if row is None:
            b = self._uniform
        else:
            b = row.get(label)
            if b is None:
                b = self._defaults.get(ctx, 0.0)
        p = b * self._phi[label]
        if p <= 0.0:
            return ()
        return (Arc(label, label, -math.log(p), target),)

    def arcs(self, state: int) -> list[Arc]:
        out = []
        for z in self._labels[1:]:
            out.extend(self.matching(state, z))
        return out

    def materialize(self) -> Wfst:
        fst = Wfst(self.isyms, self.osyms)
        for _ in self.states():
            fst.add_state()
        fst.set_start(0)
        for s in self.states():
            for arc in self.arcs(s):
                fst.add_arc(s, arc.ilabel, arc.olabel, arc.weight, arc.nextstate)
            if s > 0:
                fst.set_final(s, 0.0)
        return fst


def build_sg_wfst(theta: ModelParams) -> GrammarFst:
    return GrammarFst(theta)


def build_w_wfst(word: str, char_mode: CharMode | str = CharMode.CODEPOINT,
                 symbols: frozenset[str] | None = None) -> Wfst:
    """Single-path transducer: the word on the first arc, its characters out."""
    if not word:
        raise ParameterError("word is empty")
    units = split_units(word, char_mode)
    fst = Wfst(isyms=[word], osyms=symbols if symbols is not None else units)
    prev = fst.add_state()
    fst.set_start(prev)
    for k, unit in enumerate(units):
        nxt = fst.add_state()
        fst.add_arc(prev, word if k == 0 else EPSILON, unit, 0.0, nxt)
        prev = nxt
    fst.set_final(prev, 0.0)
    return fst


def _word_transducer(word: str, sd: Wfst, char_mode) -> Wfst:
    if char_mode is None:
        char_mode = getattr(sd, "char_mode", CharMode.CODEPOINT)
    units = split_units(word, char_mode)
    if not units or any(u not in sd.isyms for u in units):
        raise UnsegmentableWordError(word)
    return build_w_wfst(word, char_mode, symbols=sd.isyms)


def build_o_wfst(word: str, sd: Wfst, sg, char_mode: CharMode | str | None = None) -> Wfst:
    """Segmentation lattice of ``word``, weighted by the grammar."""
    w = _word_transducer(word, sd, char_mode)
    o = project_output(connect_topsort(compose(compose(w, sd), sg)))
    if o.start is None:
        raise UnsegmentableWordError(word)
    return o


def word_lattice(word: str, sd: Wfst, char_mode: CharMode | str | None = None) -> Wfst:
    """Unweighted segmentation lattice ``W o SD`` without epsilon arcs.

    It does not depend on the model, so training builds it once per word
    and composes it with each iteration's grammar.
    """
    w = _word_transducer(word, sd, char_mode)
    lattice = remove_epsilon(project_output(connect_topsort(compose(w, sd))))
    if lattice.start is None:
        raise UnsegmentableWordError(word)
    return lattice


def score_lattice(lattice: Wfst, sg) -> Wfst:
    """Weight a :func:`word_lattice` with a grammar; same paths as :func:`build_o_wfst`."""
    return project_output(connect_topsort(compose(lattice, sg)))


def restricted_sd_wfst(word: str, d: SubwordDictionary, sd: Wfst | None = None) -> Wfst:
    """Dictionary transducer keeping only entries that occur inside ``word``.

    Entries that are not substrings of the word cannot lie on an accepting
    path of ``W o SD``, so composing with this smaller machine gives the
    same trimmed result while exploring far fewer dead states. Symbol
    tables are those of the full transducer.
    """
    units = split_units(word, d.char_mode)
    index = d.index
    found = set()
    n = len(units)
    for i in range(n):
        piece = ""
        for j in range(i, n):
            piece += units[j]
            if piece in index:
                found.add(piece)
    entries = sorted(found, key=index.__getitem__)
    isyms = sd.isyms if sd is not None else d.alphabet
    osyms = sd.osyms if sd is not None else frozenset(d.entries)
    return _loop_transducer(entries, d.char_mode, isyms, osyms)


class LatticeCache:
    """Per-word lattices for one dictionary, built on first use."""

    def __init__(self, dictionary: SubwordDictionary):
        self.dictionary = dictionary
        self.sd = build_sd_wfst(dictionary)
        self._cache: dict[str, Wfst | None] = {}

    def lattice(self, word: str) -> Wfst:
        try:
            lat = self._cache[word]
        except KeyError:
            try:
                lat = word_lattice(word, restricted_sd_wfst(word, self.dictionary, self.sd))
            except UnsegmentableWordError:
                lat = None
            self._cache[word] = lat
        if lat is None:
            raise UnsegmentableWordError(word)
        return lat

    def o_wfst(self, word: str, sg) -> Wfst:
        o = score_lattice(self.lattice(word), sg)
        if o.start is None:
            raise UnsegmentableWordError(word)
        return o

    def __len__(self) -> int:
        return len(self._cache)
