"""Subword dictionary learning and lattice-based segmentation training."""

__version__ = "0.1.0"

from .apply import MarkedToken, Role, mark_context, oov_rate, recombine, segment_text
from .corpus import CharMode, Corpus, NgramCountTable, WordVocabulary, build_vocabulary, count_char_ngrams, count_word_ngrams, load_corpus
from .dictionary import SubwordDictionary, import_external, learn_bpe, learn_extended_bpe
from .errors import SubsegError, UnsegmentableWordError
from .estimator import compute_posteriors, expected_counts, reestimate_ml, reestimate_viterbi, segment_best, train_ml, train_viterbi
from .graphs import BigramModel, ModelParams, build_o_wfst, build_sd_wfst, build_sg_wfst, build_w_wfst
from .wfst import Wfst, compose, connect_topsort, enumerate_paths, forward_backward, project_output, shortest_path
