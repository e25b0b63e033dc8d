"""Vision-language-garment transformer, training and inference."""

from .checkpoint import Checkpoint, load_checkpoint, read_checkpoint, save_checkpoint, frozen_checksum
from .config import ModelConfig, TrainConfig, desk_warmup, lr_at
from .data import SplitData, load_split
from .evaluate import RowScore, evaluate_rows, score_prediction, summarize
from .generate import generate, generate_batch
from .network import (Model, Batch, build_model, encode_images, forward, forward_batch, loss,
                      make_batch, is_frozen, sequence_of)
from .train import TrainResult, train

__all__ = ["Checkpoint", "load_checkpoint", "read_checkpoint", "save_checkpoint", "frozen_checksum",
           "ModelConfig", "TrainConfig", "desk_warmup", "lr_at", "SplitData", "load_split",
           "RowScore", "evaluate_rows", "score_prediction", "summarize", "generate",
           "generate_batch", "Model", "Batch", "build_model", "encode_images", "forward",
           "forward_batch", "loss", "make_batch", "is_frozen", "sequence_of", "TrainResult", "train"]
