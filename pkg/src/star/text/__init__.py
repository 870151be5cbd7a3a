from .tokenizer import PREFIXES, fnv1a64, tokenize
from .model import BiEncoderModel, TextRecord
from .loss import LossConfig, compute_loss, mine_semi_hard
from .train import TrainingPair, TrainSettings, balance_pairs, load_pairs, train

__all__ = [
    "PREFIXES", "fnv1a64", "tokenize",
    "BiEncoderModel", "TextRecord",
    "LossConfig", "compute_loss", "mine_semi_hard",
    "TrainingPair", "TrainSettings", "balance_pairs", "load_pairs", "train",
]
