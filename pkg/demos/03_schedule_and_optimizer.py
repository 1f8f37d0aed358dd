"""The training-step arithmetic: LR schedule, AdamW, clipping, accumulation.

Reproduces the reference run's numbers: linear warmup to 6e-4 over 715
steps, half-cosine decay to 6e-5 at step 3300, and an effective batch of
524,288 tokens assembled from 64 accumulated micro-batches.
"""

import math

import numpy as np

from nepgpt import tensor as T
from nepgpt.trainer import LrSchedule, OptimHyper, OptimState, TrainConfig, adamw_step, clip_gradients, lr_at

# --- learning-rate schedule ----------------------------------------------------

sched = LrSchedule()  # the reference configuration
print(f"warmup {sched.warmup_steps} steps to {sched.max_lr:g}, "
      f"cosine to {sched.min_lr:g} at step {sched.total_steps}\n")

print(f"{'step':>6} {'lr':>12}  curve")
peak = sched.max_lr
for step in (0, 178, 357, 714, 715, 1000, 1500, 2007, 2500, 3000, 3299):
    lr = lr_at(step, sched)
    bar = "#" * int(40 * lr / peak)
    print(f"{step:>6} {lr:>12.6g}  {bar}")

# --- one AdamW step, by hand ----------------------------------------------------

print("\nAdamW single step on w=1.0 with g=0.5 at lr=6e-4:")
hyper = OptimHyper()
params = {"w": T.Tensor(np.full((1, 1), 1.0), requires_grad=True, dtype=np.float64)}
state = OptimState.fresh(params)
adamw_step(params, {"w": np.full((1, 1), 0.5)}, state, hyper, lr=6e-4)
print("  m_hat = 0.5, v_hat = 0.25 after bias correction")
print("  update = lr * (0.5 / (sqrt(0.25) + 1e-8) + 0.1 * w) = 6.6e-4")
print(f"  w after the step: {float(params['w'].data[0, 0]):.6f} (expected 0.999340)")

# --- clipping -------------------------------------------------------------------

print("\ngradient clipping to global norm 1.0:")
grads = {"a": np.array([3.0]), "b": np.array([4.0])}
norm = clip_gradients(grads, clip_norm=1.0)
print(f"  pre-clip norm {norm:.1f} -> scaled to "
      f"{math.hypot(grads['a'][0], grads['b'][0]):.3f}")

# --- effective batch size -------------------------------------------------------

run = TrainConfig()  # micro 8, accumulation 64, sequence 1024
print(f"\none optimizer step consumes {run.micro_batch} x {run.grad_accum} x "
      f"{run.seq_len} = {run.tokens_per_step:,} tokens")
print("each micro-batch loss is scaled by 1/64 before backward, so the")
print("accumulated gradient equals the mean over the whole effective batch")
