"""Joint salient-phrase selection and discourse-relation labeling for
tree-structured discussions, with summarization and consistency pipelines."""

from .corpus import (
    CorpusError,
    Discussion,
    SchemaError,
    discussion_from_dict,
    discussion_to_dict,
    load_discussions,
    prepare,
    save_discussions,
)
from .learning import Scorer, TrainConfig, average_runs, samplerank_train
from .inference import brute_force_infer, decode_discussion, joint_infer
from .model import Weights, load_model, save_model
from .evaluation import (
    EvalReport,
    cross_validate,
    majority_baseline,
    rouge_1,
    rouge_su4,
    summarize,
)
from .cou import cou_features, leave_one_out, train_classifier
from .synth import CorpusSpec, generate

__version__ = "0.1.0"

__all__ = [
    "CorpusError",
    "CorpusSpec",
    "Discussion",
    "EvalReport",
    "SchemaError",
    "Scorer",
    "TrainConfig",
    "Weights",
    "average_runs",
    "brute_force_infer",
    "cou_features",
    "cross_validate",
    "decode_discussion",
    "discussion_from_dict",
    "discussion_to_dict",
    "generate",
    "joint_infer",
    "leave_one_out",
    "load_discussions",
    "load_model",
    "majority_baseline",
    "prepare",
    "rouge_1",
    "rouge_su4",
    "samplerank_train",
    "save_discussions",
    "save_model",
    "summarize",
    "train_classifier",
    "__version__",
]
