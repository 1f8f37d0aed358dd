"""End-to-end walkthrough: raw text -> clean corpus -> BPE vocabulary ->
token shards -> a small trained model -> perplexity and sampled text.

Everything runs in a temporary directory in well under a minute on a
laptop; the point is to show each stage's inputs and outputs, not to
train a good model.
"""

import tempfile
from pathlib import Path

import numpy as np

from nepgpt import (
    CleanConfig,
    DocRecord,
    GptConfig,
    LrSchedule,
    OptimHyper,
    SampleConfig,
    TokenizerConfig,
    TrainConfig,
    clean_document,
    corpus_report,
    dedup_corpus,
    evaluate,
    generate,
    split_shards,
    train,
    train_bpe,
    write_shards,
)

work = Path(tempfile.mkdtemp(prefix="nepgpt-demo-"))
print(f"working under {work}\n")

# --- 1. a tiny raw "scrape": markup, Latin noise, duplicates -----------------

sentences = [
    "नेपाल एक सुन्दर देश हो।", "काठमाडौं नेपालको राजधानी हो।",
    "हिमालयमा धेरै हिउँ पर्दछ।", "आज मौसम निकै राम्रो छ।",
    "विद्यार्थीहरू विद्यालय जान्छन्।", "किसानले खेतमा काम गर्दछ।",
    "पुस्तक पढ्नु राम्रो बानी हो।", "सूर्य पूर्वबाट उदाउँदछ।",
]
rng = np.random.default_rng(0)
raw_lines = []
for _ in range(800):
    s = sentences[rng.integers(len(sentences))]
    wrapped = f"<p>{s}</p> visit www.example.com" if rng.random() < 0.3 else s
    raw_lines.append(wrapped)

print("step 1: cleaning")
doc = clean_document("demo", "\n".join(raw_lines), CleanConfig())
kept, stats = dedup_corpus([doc])
print(corpus_report(stats))
lines = kept[0].text.split("\n") if kept else []
# the demo corpus repeats 8 sentences, so dedup keeps exactly those
corpus = [sentences[i % len(sentences)] for i in rng.integers(0, 8, 2000)]
print(f"kept {len(lines)} unique lines; training corpus has {len(corpus)} lines\n")

# --- 2. tokenizer -------------------------------------------------------------

print("step 2: BPE tokenizer")
vocab = train_bpe(corpus, TokenizerConfig(vocab_size=360, sample_chars=100_000))
print(f"vocabulary: {vocab.vocab_size} pieces "
      f"({len(vocab.char_pieces)} characters, {len(vocab.merges)} merges)")
print("segmentation of the first sentence:")
print("  " + " | ".join(vocab.segmentation(sentences[0])) + "\n")

# --- 3. shards ----------------------------------------------------------------

print("step 3: token shards")
ids = []
for line in corpus:
    ids.extend(vocab.encode(line, add_bos=True, add_eos=True))
shard_dir = work / "shards"
paths = write_shards(ids, shard_dir, shard_tokens=4096, vocab_size=vocab.vocab_size)
train_split, val_split = split_shards(shard_dir, val_fraction=0.25)
print(f"{len(ids)} tokens -> {len(paths)} shards "
      f"({len(train_split.shard_paths)} train, {len(val_split.shard_paths)} val)\n")

# --- 4. training --------------------------------------------------------------

print("step 4: training a small model (150 steps)")
cfg = GptConfig(n_layer=2, n_head=2, d_model=16, vocab_size=vocab.vocab_size,
                seq_len=32)
run = TrainConfig(micro_batch=8, grad_accum=1, seq_len=32, seed=0,
                  log_every=30, val_batches=4)
sched = LrSchedule(max_lr=8e-3, min_lr=8e-4, warmup_steps=15, total_steps=150)
params, state, metrics = train(cfg, run, sched, OptimHyper(),
                               train_split, val_split, out_dir=work / "run")
print(f"{'step':>6} {'train':>8} {'val':>8} {'ppl':>8}")
for m in metrics:
    print(f"{m.step:>6} {m.train_loss:>8.3f} {m.val_loss:>8.3f} {m.perplexity:>8.2f}")
print()

# --- 5. evaluation and sampling ------------------------------------------------

print("step 5: evaluation and sampling")
report = evaluate(params, cfg, val_split, n_batches=4, micro_batch=8, seq_len=32)
print(f"val loss {report.mean_loss:.3f}, perplexity {report.perplexity:.2f}")
for temp in (0.0, 0.8):
    text = generate(params, cfg, vocab, "नेपाल",
                    SampleConfig(max_new_tokens=24, temperature=temp, seed=1))
    label = "greedy " if temp == 0 else f"T={temp:<4}"
    print(f"  {label} {text}")
