"""Command-line interface.

Exit status is 0 on success, 1 for usage errors and 2 for bad input data.
Errors are printed to stderr as one line: ``error: <kind>: <message>``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .apply import oov_rate, recombine, segment_text
from .corpus import CharMode, DEFAULT_MAX_NGRAM, build_vocabulary, count_char_ngrams, load_corpus, split_units
from .dictionary import DEFAULT_SIZE, SubwordDictionary, import_external, learn_bpe, learn_extended_bpe, parse_caps
from .errors import SubsegError
from .estimator import DEFAULT_FLOOR, DEFAULT_ITERATIONS, load_model, save_model, train
from .graphs import ModelParams, build_o_wfst, build_sd_wfst, build_sg_wfst, build_w_wfst

log = logging.getLogger("subseg")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


def _one_line(text: str) -> str:
    return " ".join(str(text).split())


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _read_bytes(path: str) -> bytes:
    if path == "-":
        return sys.stdin.buffer.read()
    return Path(path).read_bytes()


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def _load_dictionary(path: str, char_mode: str) -> SubwordDictionary:
    return SubwordDictionary.from_tsv(Path(path).read_text(encoding="utf-8"), char_mode)


def _load_theta(args) -> ModelParams:
    if getattr(args, "model", None):
        return load_model(args.model)
    if getattr(args, "dict", None):
        return ModelParams.initial(_load_dictionary(args.dict, args.char_mode))
    raise UsageError("one of --model or --dict is required")


# ---------------------------------------------------------------------------
# subcommands


def cmd_learn_dict(args) -> int:
    corpus = load_corpus(_read_bytes(args.input), args.char_mode)
    if args.method == "import":
        if args.caps is not None:
            raise UsageError("--caps is only valid with --method ebpe")
        if not args.source:
            raise UsageError("--method import requires --source")
        d = import_external(_read_bytes(args.source), corpus, args.char_mode)
    else:
        caps = None
        if args.method == "ebpe":
            if args.caps is None:
                raise UsageError("--method ebpe requires --caps")
            try:
                caps = parse_caps(args.caps)
            except SubsegError as exc:
                raise UsageError(str(exc)) from None
            if args.size is not None and sum(caps) != args.size:
                raise UsageError(f"caps sum to {sum(caps)} but --size is {args.size}")
            if len(caps) > args.l_max:
                raise UsageError(f"{len(caps)} caps given but --l-max is {args.l_max}")
        elif args.caps is not None:
            raise UsageError("--caps is only valid with --method ebpe")
        psi = count_char_ngrams(corpus, args.l_max, type_weighted=args.type_weighted)
        if args.ngrams:
            _write_text(args.ngrams, psi.to_tsv())
        if caps is None:
            d = learn_bpe(psi, DEFAULT_SIZE if args.size is None else args.size)
        else:
            d = learn_extended_bpe(psi, caps)
    if args.vocab:
        _write_text(args.vocab, build_vocabulary(corpus).to_tsv(args.char_mode))
    _write_text(args.output, d.to_tsv())
    log.info("dictionary: %d entries", len(d))
    return EXIT_OK


def cmd_train(args) -> int:
    if args.iters < 0:
        raise UsageError("--iters must be non-negative")
    if args.threads < 1:
        raise UsageError("--threads must be at least 1")
    corpus = load_corpus(_read_bytes(args.input), args.char_mode)
    vocab = build_vocabulary(corpus)
    d = _load_dictionary(args.dict, args.char_mode)
    floor = 0.0 if args.no_floor else DEFAULT_FLOOR
    theta, report = train(vocab, d, args.mode, args.iters, floor=floor,
                          freq_weighted=args.freq_weighted, tol=args.tol, threads=args.threads)
    # thread count is deliberately left out: it must not change any artifact
    config = {
        "floor": floor,
        "freq_weighted": args.freq_weighted,
        "requested_iterations": args.iters,
        "tolerance": args.tol,
    }
    save_model(args.model_dir, theta, report, config)
    if report.excluded:
        log.warning("%d words excluded from training", len(report.excluded))
    return EXIT_OK


def cmd_segment(args) -> int:
    theta = load_model(args.model)
    corpus = load_corpus(_read_bytes(args.input), theta.dictionary.char_mode)
    result = segment_text(corpus, theta, mark=args.mark_context)
    _write_text(args.output, "".join(line + "\n" for line in result.lines))
    return EXIT_OK


def cmd_recombine(args) -> int:
    text = _read_bytes(args.input)
    corpus = load_corpus(text)
    lines = []
    bad = 0
    for tokens in corpus.tokens:
        result = recombine(tokens)
        bad += len(result.malformed) + len(result.dangling)
        lines.append(" ".join(result.words) + "\n")
    _write_text(args.output, "".join(lines))
    if bad:
        log.warning("%d tokens were malformed or left dangling", bad)
    return EXIT_OK


def cmd_oov(args) -> int:
    train_corpus = load_corpus(_read_bytes(args.train), args.char_mode)
    test_corpus = load_corpus(_read_bytes(args.test), args.char_mode)
    d = None
    if args.model:
        d = load_model(args.model).dictionary
    elif args.dict:
        d = _load_dictionary(args.dict, args.char_mode)
    report = oov_rate(build_vocabulary(train_corpus), test_corpus, d)
    _write_text(args.output, report.to_text())
    return EXIT_OK


def cmd_dump_fst(args) -> int:
    if args.graph in ("w", "o") and not args.word:
        raise UsageError(f"--graph {args.graph} requires --word")
    if args.graph == "w":
        fst = build_w_wfst(args.word, args.char_mode)
    else:
        theta = _load_theta(args)
        if args.graph == "sd":
            fst = build_sd_wfst(theta.dictionary)
        elif args.graph == "sg":
            fst = build_sg_wfst(theta).materialize()
        else:
            d = theta.dictionary
            fst = build_o_wfst(args.word, build_sd_wfst(d), build_sg_wfst(theta), d.char_mode)
    _write_text(args.output, fst.to_text())
    return EXIT_OK


def cmd_stats(args) -> int:
    corpus = load_corpus(_read_bytes(args.input), args.char_mode)
    vocab = build_vocabulary(corpus)
    psi = count_char_ngrams(corpus, args.l_max)
    lines = [
        f"lines:{len(corpus)}",
        f"tokens:{corpus.num_tokens}",
        f"types:{len(vocab)}",
        f"characters:{len(psi[1])}",
    ]
    lines += [f"ngrams_{n}:{len(psi[n])}" for n in range(1, args.l_max + 1)]
    if args.dict:
        d = _load_dictionary(args.dict, args.char_mode)
        lines.append(f"dictionary_size:{len(d)}")
        by_len: dict[int, int] = {}
        for z in d.entries:
            n = len(split_units(z, d.char_mode))
            by_len[n] = by_len.get(n, 0) + 1
        lines += [f"dictionary_{n}:{by_len[n]}" for n in sorted(by_len)]
    _write_text(args.output, "\n".join(lines) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="subseg", description="Subword dictionaries and segmentation models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def char_mode(p):
        p.add_argument("--char-mode", choices=[m.value for m in CharMode], default=CharMode.CODEPOINT.value,
                       help="unit of one character (default: codepoint)")

    def output(p, what):
        p.add_argument("-o", "--output", default=None, help=f"{what} (default: stdout)")

    p = sub.add_parser("learn-dict", help="learn a subword dictionary from a corpus")
    p.add_argument("-i", "--input", required=True, help="UTF-8 corpus, '-' for stdin")
    output(p, "dictionary TSV")
    p.add_argument("--method", choices=["bpe", "ebpe", "import"], default="bpe")
    p.add_argument("--size", type=int, default=None, help=f"dictionary size N (bpe default {DEFAULT_SIZE})")
    p.add_argument("--caps", default=None, help="comma-separated per-length caps N_1,...,N_L (ebpe)")
    p.add_argument("--l-max", type=int, default=DEFAULT_MAX_NGRAM, help="longest n-gram counted")
    p.add_argument("--type-weighted", action="store_true", help="count n-grams once per word type")
    p.add_argument("--source", help="subword list to import (import)")
    p.add_argument("--vocab", help="also write the word vocabulary TSV here")
    p.add_argument("--ngrams", help="also write the n-gram count table here")
    char_mode(p)
    p.set_defaults(func=cmd_learn_dict)

    p = sub.add_parser("train", help="estimate unigram/bigram subword model")
    p.add_argument("-i", "--input", required=True, help="UTF-8 training corpus")
    p.add_argument("--dict", required=True, help="dictionary TSV")
    p.add_argument("-m", "--model-dir", required=True, help="output model directory")
    p.add_argument("--mode", choices=["ml", "viterbi"], default="ml")
    p.add_argument("--iters", type=int, default=DEFAULT_ITERATIONS)
    p.add_argument("--freq-weighted", action="store_true", help="weight words by corpus frequency")
    p.add_argument("--no-floor", action="store_true", help="disable the probability floor")
    p.add_argument("--tol", type=float, default=None, help="stop when log-likelihood changes by less")
    p.add_argument("--threads", type=int, default=1, help="worker processes")
    char_mode(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("segment", help="segment text with a trained model")
    p.add_argument("--model", required=True, help="model directory")
    p.add_argument("-i", "--input", required=True, help="UTF-8 text")
    output(p, "segmented text")
    p.add_argument("--mark-context", action="store_true", help="add '+' markers for recombination")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("recombine", help="join context-marked subwords back into words")
    p.add_argument("-i", "--input", required=True, help="marked text")
    output(p, "word text")
    p.set_defaults(func=cmd_recombine)

    p = sub.add_parser("oov", help="out-of-vocabulary rates of test text")
    p.add_argument("--train", required=True, help="training corpus")
    p.add_argument("--test", required=True, help="test corpus")
    p.add_argument("--dict", help="dictionary TSV for the unsegmentable rate")
    p.add_argument("--model", help="model directory (alternative to --dict)")
    output(p, "key:value report")
    char_mode(p)
    p.set_defaults(func=cmd_oov)

    p = sub.add_parser("dump-fst", help="print a graph in text format")
    p.add_argument("--graph", choices=["sd", "sg", "w", "o"], required=True)
    p.add_argument("--model", help="model directory")
    p.add_argument("--dict", help="dictionary TSV (uniform bigrams)")
    p.add_argument("--word", help="word for the w and o graphs")
    output(p, "graph text")
    char_mode(p)
    p.set_defaults(func=cmd_dump_fst)

    p = sub.add_parser("stats", help="corpus and dictionary statistics")
    p.add_argument("-i", "--input", required=True, help="UTF-8 corpus")
    p.add_argument("--dict", help="dictionary TSV")
    p.add_argument("--l-max", type=int, default=DEFAULT_MAX_NGRAM)
    output(p, "key:value report")
    char_mode(p)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        return args.func(args)
    except UsageError as exc:
        print(f"error: usage: {_one_line(exc)}", file=sys.stderr)
        return EXIT_USAGE
    except SubsegError as exc:
        print(f"error: data: {type(exc).__name__}: {_one_line(exc)}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: io: {_one_line(exc)}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
