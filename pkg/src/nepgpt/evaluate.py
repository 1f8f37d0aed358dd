"""Validation loss / perplexity and autoregressive text generation."""

import math
from dataclasses import dataclass

import numpy as np

from . import model as M
from .errors import ConfigInvalid, PromptTooLong, SplitEmpty
from .shards import DatasetSplit, next_batch
from .tokenizer import EOS_ID, BpeVocab


@dataclass
class EvalReport:
    role: str
    batches_evaluated: int
    mean_loss: float
    tokens_evaluated: int

    @property
    def perplexity(self) -> float:
        return math.exp(self.mean_loss)

    def csv_row(self) -> str:
        # mirrors the metrics-log schema: step,train_loss,val_loss,lr,tokens,perplexity,wall_time
        return (f"0,,{self.mean_loss:.6f},,{self.tokens_evaluated},"
                f"{self.perplexity:.4f},")


@dataclass
class SampleConfig:
    max_new_tokens: int = 128
    temperature: float = 1.0
    top_k: int = 0  # 0 disables truncation
    seed: int = 0

    def __post_init__(self):
        if self.temperature < 0 or self.top_k < 0 or self.max_new_tokens < 0:
            raise ConfigInvalid("temperature, top_k, max_new_tokens must be >= 0")


def perplexity(loss: float) -> float:
    """exp of a natural-log cross-entropy."""
    return math.exp(loss)


def evaluate(params: dict, cfg: M.GptConfig, split: DatasetSplit, n_batches: int,
             micro_batch: int = 8, seq_len: int = None,
             tiling: M.AttnTiling = None) -> EvalReport:
    """Mean cross-entropy over exactly n_batches deterministic batches
    (cursor starts at 0), so repeated calls return identical reports."""
    if n_batches < 1:
        raise ConfigInvalid("n_batches must be >= 1")
    if not split.shard_paths:
        raise SplitEmpty("evaluation split has no shards")
    seq_len = seq_len or cfg.seq_len
    cursor = 0
    total = 0.0
    tokens = 0
    for _ in range(n_batches):
        batch, cursor = next_batch(split, cursor, micro_batch, seq_len)
        logits = M.forward(params, cfg, batch.inputs, tiling)
        total += float(M.loss(logits, batch.targets).data)
        tokens += batch.inputs.size
    return EvalReport(role=split.role, batches_evaluated=n_batches,
                      mean_loss=total / n_batches, tokens_evaluated=tokens)


def generate(params: dict, cfg: M.GptConfig, vocab: BpeVocab, prompt: str,
             sample: SampleConfig = None, tiling: M.AttnTiling = None) -> str:
    """Sample text autoregressively from a prompt.

    Last-position logits are divided by temperature, optionally truncated
    to the top_k highest, renormalized, and drawn with the seeded
    generator. temperature 0 is greedy argmax. The context window slides
    (last seq_len - 1 tokens kept) once the sequence outgrows seq_len.
    Stops at EOS or max_new_tokens.
    """
    sample = sample or SampleConfig()
    ids = vocab.encode(prompt, add_bos=True)
    if len(ids) >= cfg.seq_len:
        raise PromptTooLong(f"prompt encodes to {len(ids)} tokens, "
                            f"window is {cfg.seq_len}")
    rng = np.random.default_rng(sample.seed)

    for _ in range(sample.max_new_tokens):
        context = ids[-(cfg.seq_len - 1):] if len(ids) >= cfg.seq_len else ids
        logits = M.forward(params, cfg, np.asarray([context]), tiling).data[0, -1]
        if sample.temperature == 0:
            next_id = int(np.argmax(logits))
        else:
            scaled = logits.astype(np.float64) / sample.temperature
            if sample.top_k:
                k = min(sample.top_k, scaled.size)
                keep = np.argpartition(scaled, -k)[-k:]
                mask = np.full_like(scaled, -np.inf)
                mask[keep] = scaled[keep]
                scaled = mask
            scaled -= scaled.max()
            probs = np.exp(scaled)
            probs /= probs.sum()
            next_id = int(rng.choice(scaled.size, p=probs))
        ids.append(next_id)
        if next_id == EOS_ID:
            break
    return vocab.decode(ids)
