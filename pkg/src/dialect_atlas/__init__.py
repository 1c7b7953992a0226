"""Detect regional variation in word meaning from geo-tagged text."""
__version__ = "0.1.0"

from .adagram import AdaGram
from .baselines import FrequencyScorer, SyntacticScorer, frequency_score, syntactic_score
from .corpus import Document, RegionMap, Vocabulary, build_vocabulary, read_corpus, tokenize
from .dialectgram import DialectGram
from .evaluate import LabeledLexicon, ThresholdClassifier, evaluate_classifier, fit_threshold, split_lexicon
from .geodist import GeodistModel, bootstrap_confidence
from .synth import SynthSpec, generate, planted_spec

__all__ = [
    "AdaGram", "DialectGram", "Document", "FrequencyScorer", "GeodistModel", "LabeledLexicon",
    "RegionMap", "SynthSpec", "SyntacticScorer", "ThresholdClassifier", "Vocabulary",
    "bootstrap_confidence", "build_vocabulary", "evaluate_classifier", "fit_threshold",
    "frequency_score", "generate", "planted_spec", "read_corpus", "split_lexicon",
    "syntactic_score", "tokenize",
]
