"""
xner-transfer - Cross-lingual named entity recognition through annotation
projection.

A tagger trained on the source language labels the source side of a parallel
corpus; an entity aligner carries each label over to the translation; the
filtered result trains a target-language tagger.
"""

from .aligners import LexicalAligner, RemoteAligner
from .corpus import LabeledSentence, ParallelPair, gen_synthetic_corpus
from .errors import XnerError
from .evaluation import EvalReport, evaluate
from .losses import LossKind
from .projection import build_pseudo_dataset, project_sentence
from .tagger import TaggerConfig, TaggerModel, TrainConfig, init_model, train

__version__ = "0.1.0"
__all__ = [
    "EvalReport",
    "LabeledSentence",
    "LexicalAligner",
    "LossKind",
    "ParallelPair",
    "RemoteAligner",
    "TaggerConfig",
    "TaggerModel",
    "TrainConfig",
    "XnerError",
    "build_pseudo_dataset",
    "evaluate",
    "gen_synthetic_corpus",
    "init_model",
    "project_sentence",
    "train",
]
