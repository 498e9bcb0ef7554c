"""Grammar-based detection and penalization of structural repetition in
generated code."""

from .baselines import SamplerConfig, parse_sampler
from .detector import RepetitionPattern, build_lcp, build_suffix_array, find_consecutive_repetitions, trailing_repetition
from .grammar import GrammarSpec, load_grammar, parse_grammar, python_grammar, statement_classes, validate_grammar
from .lexer import TokenAdapter, feed_token, lex, split_token
from .metrics import MetricReport, ccp, egp, pass_at_k, tr_n, tr_s
from .model import ScoredVocab, Vocab
from .pda import PDAConfig, PDASession, ReducedSequence, ReductionLabel, build_pda, python_pda, reduce_stream
from .penalizer import DecodeSession, GenerationResult, PenaltyConfig, decode, penalty_factor

__version__ = "0.1.0"
