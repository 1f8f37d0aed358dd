"""Training loop: warmup+cosine LR, AdamW, gradient accumulation,
clipping, checkpointing, and metrics logging."""

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import model as M
from . import tensor as T
from .errors import ConfigInvalid, NonFiniteGradient, StepOutOfRange
from .shards import DatasetSplit, next_batch
from .util import config_hash


@dataclass
class LrSchedule:
    max_lr: float = 6e-4
    min_lr: float = 6e-5
    warmup_steps: int = 715
    total_steps: int = 3300

    def __post_init__(self):
        if not (0 < self.min_lr <= self.max_lr):
            raise ConfigInvalid(f"need 0 < min_lr <= max_lr, got {self.min_lr}/{self.max_lr}")
        if not (0 <= self.warmup_steps < self.total_steps):
            raise ConfigInvalid(f"need 0 <= warmup_steps < total_steps, got "
                                f"{self.warmup_steps}/{self.total_steps}")


@dataclass
class OptimHyper:
    beta1: float = 0.9
    beta2: float = 0.95
    epsilon: float = 1e-8
    weight_decay: float = 0.1
    clip_norm: float = 1.0  # 0 disables

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigInvalid("betas must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ConfigInvalid("epsilon must be positive")


@dataclass
class TrainConfig:
    micro_batch: int = 8
    grad_accum: int = 64
    seq_len: int = 1024
    epochs: int = 2
    seed: int = 0
    checkpoint_every: int = 0  # 0 = final only
    log_every: int = 500
    val_batches: int = 20

    @property
    def tokens_per_step(self) -> int:
        return self.micro_batch * self.grad_accum * self.seq_len


@dataclass
class MetricsRecord:
    step: int
    train_loss: float
    val_loss: float = None
    lr: float = 0.0
    tokens_processed: int = 0
    wall_time: float = 0.0

    @property
    def perplexity(self):
        return math.exp(self.val_loss) if self.val_loss is not None else None

    CSV_HEADER = "step,train_loss,val_loss,lr,tokens,perplexity,wall_time"

    def csv_row(self) -> str:
        val = f"{self.val_loss:.6f}" if self.val_loss is not None else ""
        ppl = f"{self.perplexity:.4f}" if self.val_loss is not None else ""
        return (f"{self.step},{self.train_loss:.6f},{val},{self.lr:.8g},"
                f"{self.tokens_processed},{ppl},{self.wall_time:.3f}")


def lr_at(step: int, sched: LrSchedule) -> float:
    """Linear warmup to max_lr, then a half cosine down to min_lr."""
    if not (0 <= step < sched.total_steps):
        raise StepOutOfRange(f"step {step} outside [0, {sched.total_steps})")
    if step < sched.warmup_steps:
        return sched.max_lr * (step + 1) / sched.warmup_steps
    progress = (step - sched.warmup_steps) / (sched.total_steps - sched.warmup_steps)
    return sched.min_lr + 0.5 * (sched.max_lr - sched.min_lr) * (1 + math.cos(math.pi * progress))


@dataclass
class OptimState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    @classmethod
    def fresh(cls, params: dict) -> "OptimState":
        return cls(m={k: np.zeros_like(p.data) for k, p in params.items()},
                   v={k: np.zeros_like(p.data) for k, p in params.items()},
                   t=0)


def in_decay_set(param: np.ndarray) -> bool:
    """Decoupled decay applies to matrices/embeddings only."""
    return param.ndim >= 2


def adamw_step(params: dict, grads: dict, state: OptimState, hyper: OptimHyper,
               lr: float) -> None:
    """One AdamW update with bias correction and decoupled weight decay.

    Mutates params and state in place; aborts (state untouched) on any
    non-finite gradient.
    """
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise NonFiniteGradient(f"non-finite gradient for {name}")
    t_next = state.t + 1
    c1 = 1.0 - hyper.beta1 ** t_next
    c2 = 1.0 - hyper.beta2 ** t_next
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= hyper.beta1
        m += (1 - hyper.beta1) * g
        v *= hyper.beta2
        v += (1 - hyper.beta2) * g * g
        update = lr * (m / c1) / (np.sqrt(v / c2) + hyper.epsilon)
        if hyper.weight_decay and in_decay_set(p.data):
            update = update + lr * hyper.weight_decay * p.data
        p.data -= update.astype(p.data.dtype, copy=False)
    state.t = t_next


def clip_gradients(grads: dict, clip_norm: float) -> float:
    """Scale gradients so the global L2 norm is at most clip_norm;
    returns the pre-clip norm. clip_norm 0 disables clipping."""
    sq = 0.0
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise NonFiniteGradient(f"non-finite gradient for {name}")
        sq += float(np.sum(g.astype(np.float64) ** 2))
    norm = math.sqrt(sq)
    if clip_norm and norm > clip_norm:
        scale = clip_norm / norm
        for g in grads.values():
            g *= np.asarray(scale, dtype=g.dtype)
    return norm


def _resolved_config(cfg: M.GptConfig, run: TrainConfig, sched: LrSchedule,
                     hyper: OptimHyper) -> dict:
    out = dict(cfg.to_dict())
    out.update({
        "micro_batch": run.micro_batch, "grad_accum": run.grad_accum,
        "train_seq_len": run.seq_len, "epochs": run.epochs, "seed": run.seed,
        "max_lr": sched.max_lr, "min_lr": sched.min_lr,
        "warmup_steps": sched.warmup_steps, "total_steps": sched.total_steps,
        "beta1": hyper.beta1, "beta2": hyper.beta2, "epsilon": hyper.epsilon,
        "weight_decay": hyper.weight_decay, "clip_norm": hyper.clip_norm,
    })
    return out


def save_train_checkpoint(path, cfg: M.GptConfig, params: dict, state: OptimState,
                          cursor: int, tokens_processed: int, cfg_hash: str) -> None:
    arrays = {f"param/{k}": p for k, p in params.items()}
    arrays.update({f"adam_m/{k}": m for k, m in state.m.items()})
    arrays.update({f"adam_v/{k}": v for k, v in state.v.items()})
    meta = {str(k): str(v) for k, v in cfg.to_dict().items()}
    meta.update({"step": str(state.t), "cursor": str(cursor),
                 "tokens_processed": str(tokens_processed), "config_hash": cfg_hash})
    M.save_checkpoint(path, arrays, meta)


def load_train_checkpoint(path):
    meta, arrays = M.load_checkpoint(path)
    cfg = M.config_from_meta(meta)
    params = {}
    state = OptimState(t=int(meta["step"]))
    for name, arr in arrays.items():
        kind, _, key = name.partition("/")
        if kind == "param":
            params[key] = T.Tensor(arr, requires_grad=True)
        elif kind == "adam_m":
            state.m[key] = arr
        elif kind == "adam_v":
            state.v[key] = arr
    return (cfg, params, state, int(meta["cursor"]),
            int(meta["tokens_processed"]), meta.get("config_hash", ""))


def train(cfg: M.GptConfig, run: TrainConfig, sched: LrSchedule, hyper: OptimHyper,
          train_split: DatasetSplit, val_split: DatasetSplit = None,
          out_dir=None, resume=None, tiling: M.AttnTiling = None,
          steps: int = None) -> tuple:
    """Run the optimization loop; returns (params, state, metrics list).

    Each optimizer step consumes exactly grad_accum micro-batches, each
    micro-batch loss scaled by 1/grad_accum before backward so the
    accumulated gradient is the mean over all tokens of the step. Training
    is deterministic, so a run interrupted at a checkpoint resumes
    bit-exactly from (params, optimizer state, data cursor).
    """
    from .evaluate import evaluate  # circular at import time only

    tiling = tiling or M.AttnTiling()
    cfg_hash = config_hash(_resolved_config(cfg, run, sched, hyper))

    if resume is not None:
        ckpt_cfg, params, state, cursor, tokens_processed, saved_hash = \
            load_train_checkpoint(resume)
        if saved_hash != cfg_hash:
            raise ConfigInvalid(
                f"refusing to resume: checkpoint config hash {saved_hash} does not "
                f"match current run {cfg_hash}")
        if ckpt_cfg != cfg:
            raise ConfigInvalid("checkpoint model config differs from requested config")
    else:
        params = M.init_params(cfg, run.seed)
        state = OptimState.fresh(params)
        cursor = 0
        tokens_processed = 0

    total_steps = sched.total_steps if steps is None else min(steps + state.t, sched.total_steps)
    out_dir = Path(out_dir) if out_dir is not None else None
    metrics_path = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_path = out_dir / "metrics.csv"
        if resume is None or not metrics_path.exists():
            metrics_path.write_text(MetricsRecord.CSV_HEADER + "\n")

    metrics = []
    started = time.time()

    def log(step, train_loss):
        val_loss = None
        if val_split is not None:
            report = evaluate(params, cfg, val_split, n_batches=run.val_batches,
                              micro_batch=run.micro_batch, seq_len=run.seq_len,
                              tiling=tiling)
            val_loss = report.mean_loss
        rec = MetricsRecord(step=step, train_loss=train_loss, val_loss=val_loss,
                            lr=lr_at(step, sched) if step < sched.total_steps else sched.min_lr,
                            tokens_processed=tokens_processed,
                            wall_time=time.time() - started)
        metrics.append(rec)
        if metrics_path is not None:
            with open(metrics_path, "a") as f:
                f.write(rec.csv_row() + "\n")
        return rec

    while state.t < total_steps:
        step = state.t
        lr = lr_at(step, sched)
        step_loss = 0.0
        for p in params.values():
            p.zero_grad()
        for _ in range(run.grad_accum):
            batch, cursor = next_batch(train_split, cursor, run.micro_batch, run.seq_len)
            logits = M.forward(params, cfg, batch.inputs, tiling)
            micro_loss = M.loss(logits, batch.targets)
            step_loss += float(micro_loss.data) / run.grad_accum
            T.backward(T.mul(micro_loss, 1.0 / run.grad_accum))
        grads = {k: p.grad for k, p in params.items()}
        for k, p in params.items():
            if grads[k] is None:
                grads[k] = np.zeros_like(p.data)
        clip_gradients(grads, hyper.clip_norm)
        adamw_step(params, grads, state, hyper, lr)
        tokens_processed += run.tokens_per_step

        done = state.t
        if run.log_every and (done % run.log_every == 0 or done == total_steps):
            log(done, step_loss)
        if out_dir is not None and run.checkpoint_every and done % run.checkpoint_every == 0:
            save_train_checkpoint(out_dir / f"ckpt_{done:06d}.bin", cfg, params,
                                  state, cursor, tokens_processed, cfg_hash)

    if out_dir is not None:
        save_train_checkpoint(out_dir / "ckpt_last.bin", cfg, params, state,
                              cursor, tokens_processed, cfg_hash)
    return params, state, metrics
