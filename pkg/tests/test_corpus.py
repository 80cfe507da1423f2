import io

import pytest

from subseg.corpus import (
    CharMode,
    NgramCountTable,
    WordVocabulary,
    build_vocabulary,
    count_char_ngrams,
    count_word_ngrams,
    load_corpus,
    merge_tables,
    split_units,
)
from subseg.errors import CorpusDecodeError, ParameterError


def test_load_two_lines():
    c = load_corpus(b"abab aba\nabab\n")
    assert len(c) == 2
    assert c.tokens == (("abab", "aba"), ("abab",))


def test_load_empty():
    assert len(load_corpus(b"")) == 0


def test_blank_line_dropped_and_whitespace_runs():
    c = load_corpus(b"a  b\n\n")
    assert c.tokens == (("a", "b"),)


def test_load_from_stream():
    assert load_corpus(io.BytesIO(b"x y\n")).tokens == (("x", "y"),)


def test_invalid_utf8_names_offset():
    with pytest.raises(CorpusDecodeError) as info:
        load_corpus(b"ab\xffcd")
    assert info.value.offset == 2
    assert "2" in str(info.value)


def test_vocabulary_counts():
    v = build_vocabulary(load_corpus(b"abab aba\nabab\n"))
    assert dict(v.entries) == {"abab": 2, "aba": 1}
    assert v.total == 3


def test_vocabulary_empty_and_repeats():
    assert len(build_vocabulary(load_corpus(b""))) == 0
    assert dict(build_vocabulary(load_corpus(b"x x x")).entries) == {"x": 3}


def test_vocabulary_tsv_order_and_round_trip():
    v = WordVocabulary({"b": 2, "aa": 2, "a": 2, "zz": 5})
    text = v.to_tsv()
    assert text == "zz\t5\na\t2\nb\t2\naa\t2\n"
    assert WordVocabulary.from_tsv(text).to_tsv() == text


def test_ngram_example():
    psi = count_char_ngrams(load_corpus(b"abab aba\nabab\n"))
    assert dict(psi[1]) == {"a": 6, "b": 5}
    assert dict(psi[2]) == {"ab": 5, "ba": 3}
    assert dict(psi[3]) == {"aba": 3, "bab": 2}
    assert dict(psi[4]) == {"abab": 2}
    assert all(not psi[n] for n in range(5, 8))


def test_single_char_word():
    psi = count_char_ngrams(load_corpus(b"q"))
    assert dict(psi[1]) == {"q": 1}
    assert all(not psi[n] for n in range(2, 8))


def test_sorted_entries_ties_by_code_point():
    psi = count_word_ngrams({"ba": 1, "ab": 1}, 2)
    assert psi.sorted_entries(2) == [("ab", 1), ("ba", 1)]
    assert psi.sorted_entries(1) == [("a", 2), ("b", 2)]


def test_type_weighted():
    psi = count_char_ngrams(load_corpus(b"abab aba\nabab\n"), type_weighted=True)
    assert dict(psi[1]) == {"a": 4, "b": 3}


def test_table_tsv_round_trip():
    psi = count_char_ngrams(load_corpus(b"abab aba\nabab\n"), 4)
    text = psi.to_tsv()
    assert text.splitlines()[0] == "1\ta\t6"
    assert NgramCountTable.from_tsv(text).to_tsv() == text


def test_merge_shards_matches_whole():
    whole = count_char_ngrams(load_corpus(b"abab aba\nabab\ncab\n"))
    parts = [count_char_ngrams(load_corpus(b"abab aba\n")), count_char_ngrams(load_corpus(b"abab\ncab\n"))]
    assert merge_tables(parts).to_tsv() == whole.to_tsv()
    assert merge_tables(reversed(parts)).to_tsv() == whole.to_tsv()


def test_bad_max_len():
    with pytest.raises(ParameterError):
        count_word_ngrams({"a": 1}, 0)


def test_grapheme_mode_keeps_combining_marks():
    word = "káb"  # a + combining acute
    assert split_units(word, CharMode.GRAPHEME) == ["k", "á", "b"]
    assert len(split_units(word)) == 4
    psi = count_char_ngrams(load_corpus(word.encode(), CharMode.GRAPHEME), 3)
    assert set(psi[1]) == {"k", "á", "b"}
    assert dict(psi[3]) == {word: 1}
