"""Maximum-likelihood (EM) and Viterbi training of the subword model.

Each iteration weights every vocabulary word's segmentation lattice with the
current grammar, collects subword and subword-pair counts (soft counts from
arc posteriors for EM, hard counts from the best path for Viterbi) and
renormalises them into new unigram and bigram tables.

Count sums use :func:`math.fsum`, so results do not depend on the order in
which words are processed or on how they are split across workers.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import CharMode, WordVocabulary
from .dictionary import SubwordDictionary
from .errors import ParameterError, SubsegError, UnsegmentableWordError
from .graphs import BigramModel, GrammarFst, LatticeCache, ModelParams, build_o_wfst, build_sd_wfst, build_sg_wfst
from .wfst import (
    EPSILON,
    LazyComposition,
    Wfst,
    enumerate_paths,
    forward_backward,
    nlog_sum,
    shortest_distance,
    shortest_path,
    topological_order,
)

log = logging.getLogger(__name__)

DEFAULT_ITERATIONS = 15
DEFAULT_FLOOR = 1e-10

Segmentation = tuple[str, ...]
# word -> [(segmentation, posterior), ...]
PosteriorSet = Mapping[str, Sequence[tuple[Segmentation, float]]]


class Mode(str, enum.Enum):
    ML = "ml"
    VITERBI = "viterbi"


@dataclass
class ExpectedCounts:
    unigram: dict[str, float] = field(default_factory=dict)
    bigram: dict[tuple[str, str], float] = field(default_factory=dict)  # (context, next)


class _Terms:
    """Count contributions kept as raw terms until an exact final sum."""

    def __init__(self):
        self.unigram: dict[str, list[float]] = {}
        self.bigram: dict[tuple[str, str], list[float]] = {}

    def add_unigram(self, z: str, value: float) -> None:
        lst = self.unigram.get(z)
        if lst is None:
            self.unigram[z] = [value]
        else:
            lst.append(value)

    def add_bigram(self, key: tuple[str, str], value: float) -> None:
        lst = self.bigram.get(key)
        if lst is None:
            self.bigram[key] = [value]
        else:
            lst.append(value)

    def extend(self, other: "_Terms") -> None:
        for z, lst in other.unigram.items():
            self.unigram.setdefault(z, []).extend(lst)
        for k, lst in other.bigram.items():
            self.bigram.setdefault(k, []).extend(lst)

    def totals(self) -> ExpectedCounts:
        return ExpectedCounts({z: math.fsum(v) for z, v in self.unigram.items()},
                              {k: math.fsum(v) for k, v in self.bigram.items()})


# ---------------------------------------------------------------------------
# E-step pieces


def compute_posteriors(word: str, theta: ModelParams, sd: Wfst | None = None,
                       sg=None) -> list[tuple[Segmentation, float]]:
    """All segmentations of ``word`` with their posterior probabilities.

    The normaliser comes from the forward-backward total of the lattice; the
    segmentations themselves are listed by path enumeration, so this is
    exponential in word length and meant for inspection and testing.
    """
    sd = build_sd_wfst(theta.dictionary) if sd is None else sd
    sg = build_sg_wfst(theta) if sg is None else sg
    o = build_o_wfst(word, sd, sg)
    _, total = forward_backward(o)
    return [(p.labels, math.exp(total - p.weight)) for p in enumerate_paths(o)]


def expected_counts(posteriors: PosteriorSet,
                    weights: Mapping[str, float] | None = None) -> ExpectedCounts:
    """Posterior-weighted subword and adjacent-pair counts."""
    terms = _Terms()
    for word, items in posteriors.items():
        scale = 1.0 if weights is None else weights[word]
        for seg, gamma in items:
            g = gamma * scale
            for z, c in Counter(seg).items():
                terms.add_unigram(z, g * c)
            for pair, c in Counter(zip(seg, seg[1:])).items():
                terms.add_bigram(pair, g * c)
    return terms.totals()


def _lattice_terms(o: Wfst, scale: float, terms: _Terms) -> float:
    """Add one lattice's arc-posterior counts to ``terms``; return its total weight.

    The preceding subword of an arc is read off its source state, which the
    grammar composition makes unique.
    """
    posts, total = forward_backward(o)
    unset = object()
    ctx: list = [unset] * o.num_states
    ctx[o.start] = None
    for s in topological_order(o):
        here = ctx[s]
        for arc, post in zip(o.arcs(s), posts[s]):
            lab = arc.olabel
            if lab == EPSILON:
                nxt_ctx = here
            else:
                nxt_ctx = lab
                g = post * scale
                terms.add_unigram(lab, g)
                if here is not None:
                    terms.add_bigram((here, lab), g)
            t = arc.nextstate
            old = ctx[t]
            if old is unset:
                ctx[t] = nxt_ctx
            elif old != nxt_ctx:
                raise SubsegError("lattice state does not determine the preceding subword")
    return total


def lattice_expected_counts(o: Wfst, scale: float = 1.0) -> ExpectedCounts:
    """Expected counts of one grammar-weighted lattice via forward-backward."""
    terms = _Terms()
    _lattice_terms(o, scale, terms)
    return terms.totals()


def _grammar_terms(lazy: LazyComposition, sg: GrammarFst, scale: float, terms: _Terms) -> None:
    label = sg.label
    for sb, _, barc, post in lazy.arc_posteriors():
        z = barc[1]
        g = post * scale
        terms.add_unigram(z, g)
        if sb:
            terms.add_bigram((label(sb), z), g)


def word_expected_counts(lattice: Wfst, sg: GrammarFst, scale: float = 1.0) -> ExpectedCounts:
    """Expected counts for one word lattice, composing with the grammar on the fly."""
    terms = _Terms()
    _grammar_terms(LazyComposition(lattice, sg), sg, scale, terms)
    return terms.totals()


def _path_total(o: Wfst) -> float:
    alpha = shortest_distance(o)
    return nlog_sum(alpha[s] + f for s, f in o.finals.items())


# ---------------------------------------------------------------------------
# M-step


def _normalise(counts: ExpectedCounts, dictionary: SubwordDictionary, floor: float) -> ModelParams:
    entries = dictionary.entries
    uni = [counts.unigram.get(z, 0.0) for z in entries]
    total = math.fsum(uni)
    if not total > 0:
        raise ParameterError("all subword counts are zero")
    phi = [c / total for c in uni]
    if floor > 0:
        phi = [max(p, floor) for p in phi]
        z = math.fsum(phi)
        phi = [p / z for p in phi]

    grouped: dict[str, dict[str, float]] = {}
    for (ctx, nxt), c in counts.bigram.items():
        grouped.setdefault(ctx, {})[nxt] = c
    size = len(entries)
    index = dictionary.index
    rows: dict[str, dict[str, float]] = {}
    defaults: dict[str, float] = {}
    for ctx in sorted(grouped, key=index.__getitem__):
        row = grouped[ctx]
        row_total = math.fsum(row.values())
        if not row_total > 0:
            continue  # no evidence: uniform fallback
        probs = {nxt: c / row_total for nxt, c in sorted(row.items(), key=lambda kv: index[kv[0]])}
        if floor > 0:
            probs = {nxt: max(p, floor) for nxt, p in probs.items()}
            missing = size - len(probs)
            z = math.fsum(probs.values()) + missing * floor
            probs = {nxt: p / z for nxt, p in probs.items()}
            if missing:
                defaults[ctx] = floor / z
        rows[ctx] = probs
    return ModelParams(SubwordDictionary(entries, tuple(phi), dictionary.char_mode),
                       BigramModel(size, rows, defaults))


def reestimate_ml(counts: ExpectedCounts, dictionary: SubwordDictionary,
                  floor: float = DEFAULT_FLOOR) -> ModelParams:
    """New unigram and bigram tables from expected counts.

    ``phi(z) = E[count(z)] / sum E[count]`` and
    ``B(z | y) = E[count(y z)] / sum_z' E[count(y z')]``. With ``floor > 0``
    every probability is raised to at least ``floor`` and renormalised.
    Contexts with no counts fall back to uniform.
    """
    return _normalise(counts, dictionary, floor)


def hard_counts(best_paths: Mapping[str, Segmentation] | Iterable[Segmentation],
                weights: Mapping[str, float] | None = None) -> ExpectedCounts:
    uni: Counter = Counter()
    bi: Counter = Counter()
    items = best_paths.items() if isinstance(best_paths, Mapping) else ((None, p) for p in best_paths)
    for word, seg in items:
        scale = 1 if weights is None or word is None else weights[word]
        for z in seg:
            uni[z] += scale
        for pair in zip(seg, seg[1:]):
            bi[pair] += scale
    return ExpectedCounts({z: float(c) for z, c in uni.items()},
                          {k: float(c) for k, c in bi.items()})


def reestimate_viterbi(best_paths: Mapping[str, Segmentation] | Iterable[Segmentation],
                       dictionary: SubwordDictionary, floor: float = DEFAULT_FLOOR,
                       weights: Mapping[str, float] | None = None) -> ModelParams:
    """New tables from the counts of one best segmentation per word."""
    return _normalise(hard_counts(best_paths, weights), dictionary, floor)


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainingReport:
    mode: Mode
    initial_log_likelihood: float
    # corpus log-likelihood after each completed iteration
    log_likelihoods: list[float] = field(default_factory=list)
    # Viterbi only: summed log-probability of the best paths after each iteration
    best_path_log_probs: list[float] = field(default_factory=list)
    # number of words whose best segmentation changed in each iteration
    segmentation_changes: list[int] = field(default_factory=list)
    segmentations: dict[str, Segmentation] = field(default_factory=dict)
    excluded: list[str] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.log_likelihoods)

    def to_tsv(self) -> str:
        return "".join(f"{k}\t{ll!r}\n" for k, ll in enumerate(self.log_likelihoods, 1))


@dataclass
class _Partial:
    terms: _Terms = field(default_factory=_Terms)
    ll: list[float] = field(default_factory=list)
    best_ll: list[float] = field(default_factory=list)
    best: dict[str, Segmentation] = field(default_factory=dict)
    failed: list[str] = field(default_factory=list)


def _process(words: Sequence[tuple[str, float]], theta: ModelParams, cache: LatticeCache,
             soft: bool, want_best: bool) -> _Partial:
    sg = GrammarFst(theta)
    part = _Partial()
    for word, scale in words:
        try:
            lazy = LazyComposition(cache.lattice(word), sg)
        except UnsegmentableWordError:
            part.failed.append(word)
            continue
        if lazy.total == math.inf:
            part.failed.append(word)
            continue
        if soft:
            _grammar_terms(lazy, sg, scale, part.terms)
        part.ll.append(-lazy.total * scale)
        if want_best:
            best = lazy.best_path()
            part.best[word] = best.labels
            part.best_ll.append(-best.weight * scale)
    return part


_worker_cache: LatticeCache | None = None


def _init_worker(dictionary: SubwordDictionary) -> None:
    global _worker_cache
    _worker_cache = LatticeCache(dictionary)


def _worker(args) -> _Partial:
    words, theta, soft, want_best = args
    return _process(words, theta, _worker_cache, soft, want_best)


class _Runner:
    """Runs E-step passes serially or over a process pool."""

    def __init__(self, dictionary: SubwordDictionary, threads: int):
        self.cache = LatticeCache(dictionary)
        self.threads = max(1, threads)
        self.pool = None
        if self.threads > 1:
            self.pool = ProcessPoolExecutor(self.threads, initializer=_init_worker,
                                            initargs=(dictionary,))

    def close(self) -> None:
        if self.pool is not None:
            self.pool.shutdown()

    def run(self, words: Sequence[tuple[str, float]], theta: ModelParams,
            soft: bool, want_best: bool) -> _Partial:
        if self.pool is None:
            return _process(words, theta, self.cache, soft, want_best)
        size = max(1, math.ceil(len(words) / (self.threads * 4)))
        chunks = [words[i:i + size] for i in range(0, len(words), size)]
        merged = _Partial()
        for part in self.pool.map(_worker, [(c, theta, soft, want_best) for c in chunks]):
            merged.terms.extend(part.terms)
            merged.ll.extend(part.ll)
            merged.best_ll.extend(part.best_ll)
            merged.best.update(part.best)
            merged.failed.extend(part.failed)
        return merged


def train(
    vocab: WordVocabulary | Mapping[str, int],
    dictionary: SubwordDictionary,
    mode: Mode | str = Mode.ML,
    iters: int = DEFAULT_ITERATIONS,
    floor: float = DEFAULT_FLOOR,
    freq_weighted: bool = False,
    tol: float | None = None,
    threads: int = 1,
) -> tuple[ModelParams, TrainingReport]:
    """Estimate the model from a word vocabulary, starting at the dictionary's unigrams.

    Every iteration re-segments the whole vocabulary with the current model
    and re-estimates from it. Words that cannot be segmented with the
    dictionary are left out and listed in the report. ``tol`` stops early once
    the log-likelihood moves by less than ``tol``; ``None`` always runs
    ``iters`` iterations.
    """
    mode = Mode(mode)
    if iters < 0:
        raise ParameterError("iteration count must be non-negative")
    entries = vocab.entries if isinstance(vocab, WordVocabulary) else vocab
    if not entries:
        raise ParameterError("vocabulary is empty")
    weights = {w: float(c) if freq_weighted else 1.0 for w, c in entries.items()}
    soft = mode == Mode.ML
    theta = ModelParams.initial(dictionary)

    runner = _Runner(dictionary, threads)
    try:
        excluded = []
        words = []
        for w in entries:
            try:
                runner.cache.lattice(w)
            except UnsegmentableWordError:
                excluded.append(w)
            else:
                words.append((w, weights[w]))
        if excluded:
            log.warning("%d of %d words cannot be segmented and are left out of training",
                        len(excluded), len(entries))
        if not words:
            raise ParameterError("no vocabulary word can be segmented with this dictionary")
        word_weights = dict(words)

        stats = runner.run(words, theta, soft, want_best=not soft)
        report = TrainingReport(mode, math.fsum(stats.ll), excluded=excluded)
        prev_best = stats.best
        for k in range(1, iters + 1):
            if soft:
                theta = reestimate_ml(stats.terms.totals(), dictionary, floor)
            else:
                theta = reestimate_viterbi(stats.best, dictionary, floor, word_weights)
            stats = runner.run(words, theta, soft, want_best=not soft)
            if stats.failed:
                log.warning("%d words have zero probability after iteration %d", len(stats.failed), k)
            ll = math.fsum(stats.ll)
            report.log_likelihoods.append(ll)
            if not soft:
                report.best_path_log_probs.append(math.fsum(stats.best_ll))
                report.segmentation_changes.append(
                    sum(1 for w, seg in stats.best.items() if prev_best.get(w) != seg))
                prev_best = stats.best
            log.info("iteration %d: log-likelihood %.6f", k, ll)
            if tol is not None and len(report.log_likelihoods) >= 1:
                before = report.log_likelihoods[-2] if k > 1 else report.initial_log_likelihood
                if abs(ll - before) < tol:
                    log.info("converged after %d iterations", k)
                    break
        if soft:
            stats = runner.run(words, theta, soft=False, want_best=True)
        report.segmentations = dict(sorted(stats.best.items()))
    finally:
        runner.close()
    return theta, report


def train_ml(vocab, dictionary, iters: int = DEFAULT_ITERATIONS, **kwargs):
    return train(vocab, dictionary, Mode.ML, iters, **kwargs)


def train_viterbi(vocab, dictionary, iters: int = DEFAULT_ITERATIONS, **kwargs):
    return train(vocab, dictionary, Mode.VITERBI, iters, **kwargs)


def segment_best(word: str, theta: ModelParams, sd: Wfst | None = None, sg=None) -> Segmentation:
    """Most probable segmentation of ``word``; raises if there is none."""
    sd = build_sd_wfst(theta.dictionary) if sd is None else sd
    sg = build_sg_wfst(theta) if sg is None else sg
    try:
        return shortest_path(build_o_wfst(word, sd, sg)).paths[0].labels
    except UnsegmentableWordError:
        raise
    except SubsegError:
        raise UnsegmentableWordError(word) from None


def corpus_log_likelihood(words: Mapping[str, float], theta: ModelParams) -> float:
    """Sum over words of ``weight * log p(word)``, skipping unsegmentable ones."""
    cache = LatticeCache(theta.dictionary)
    sg = GrammarFst(theta)
    terms = []
    for w, scale in words.items():
        try:
            terms.append(-_path_total(cache.o_wfst(w, sg)) * scale)
        except UnsegmentableWordError:
            continue
    return math.fsum(terms)


# ---------------------------------------------------------------------------
# model directory

DICTIONARY_FILE = "dictionary.tsv"
BIGRAM_FILE = "bigram.tsv"
REPORT_FILE = "report.tsv"
SEGMENTATION_FILE = "segmentations.tsv"
CONFIG_FILE = "model.json"


def save_model(directory: str | os.PathLike, theta: ModelParams,
               report: TrainingReport | None = None, config: Mapping | None = None) -> None:
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    d = theta.dictionary
    _write(path / DICTIONARY_FILE, d.to_tsv())
    _write(path / BIGRAM_FILE, theta.bigram.to_tsv(list(d.entries)))
    meta = {"char_mode": d.char_mode.value, "size": len(d)}
    if config:
        meta.update(config)
    if report is not None:
        _write(path / REPORT_FILE, report.to_tsv())
        _write(path / SEGMENTATION_FILE,
               "".join(f"{w}\t{' '.join(seg)}\n" for w, seg in report.segmentations.items()))
        meta.update({
            "mode": report.mode.value,
            "iterations": report.iterations,
            "initial_log_likelihood": report.initial_log_likelihood,
            "excluded_words": len(report.excluded),
        })
    _write(path / CONFIG_FILE, json.dumps(meta, sort_keys=True, indent=2) + "\n")


def load_model(directory: str | os.PathLike) -> ModelParams:
    path = Path(directory)
    meta = {}
    if (path / CONFIG_FILE).exists():
        meta = json.loads((path / CONFIG_FILE).read_text(encoding="utf-8"))
    char_mode = CharMode(meta.get("char_mode", CharMode.CODEPOINT.value))
    d = SubwordDictionary.from_tsv((path / DICTIONARY_FILE).read_text(encoding="utf-8"), char_mode)
    bigram_path = path / BIGRAM_FILE
    if bigram_path.exists():
        bigram = BigramModel.from_tsv(bigram_path.read_text(encoding="utf-8"), len(d))
    else:
        bigram = BigramModel.uniform(len(d))
    return ModelParams(d, bigram)


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="\n")
