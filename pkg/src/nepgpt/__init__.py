"""GPT pretraining toolkit for Devanagari text.

Pipeline stages: corpus cleaning -> BPE tokenizer -> binary token shards
-> decoder-only transformer with tiled attention -> AdamW training ->
perplexity evaluation and sampling. Everything is framework-free (numpy
only) and deterministic.
"""

__version__ = "0.1.0"

from .corpus import (
    CleanConfig,
    CorpusStats,
    DocRecord,
    clean_document,
    clean_text,
    corpus_report,
    dedup_corpus,
)
from .evaluate import EvalReport, SampleConfig, evaluate, generate, perplexity
from .model import AttnTiling, GptConfig, forward, init_params, loss, param_count
from .shards import Batch, DatasetSplit, next_batch, split_shards, verify_shard, write_shards
from .tokenizer import BpeVocab, TokenizerConfig, train_bpe
from .trainer import LrSchedule, MetricsRecord, OptimHyper, OptimState, TrainConfig, adamw_step, clip_gradients, lr_at, train

__all__ = [
    "CleanConfig", "CorpusStats", "DocRecord", "clean_document", "clean_text",
    "corpus_report", "dedup_corpus",
    "BpeVocab", "TokenizerConfig", "train_bpe",
    "Batch", "DatasetSplit", "next_batch", "split_shards", "verify_shard", "write_shards",
    "AttnTiling", "GptConfig", "forward", "init_params", "loss", "param_count",
    "LrSchedule", "MetricsRecord", "OptimHyper", "OptimState", "TrainConfig",
    "adamw_step", "clip_gradients", "lr_at", "train",
    "EvalReport", "SampleConfig", "evaluate", "generate", "perplexity",
]
