"""How the BPE tokenizer segments Nepali text.

Trains a small vocabulary on a handful of sentences, then shows the
learned merges at work: frequent words collapse into single pieces,
rarer words split into subwords, and anything outside the vocabulary
falls back to raw bytes so every string round-trips exactly.
"""

from nepgpt.tokenizer import BYTE_BASE, NUM_RESERVED, TokenizerConfig, train_bpe

corpus = [
    "नेपाल एक सुन्दर देश हो।", "नेपालको राजधानी काठमाडौं हो।",
    "नेपालमा धेरै हिमाल छन्।", "हिमालमा हिउँ पर्दछ।",
    "काठमाडौं ठूलो शहर हो।", "शहरमा धेरै मानिस बस्छन्।",
    "मानिसहरू काम गर्दछन्।", "विद्यार्थीहरू पुस्तक पढ्दछन्।",
] * 40

vocab = train_bpe(corpus, TokenizerConfig(vocab_size=320, sample_chars=100_000))
print(f"trained {vocab.vocab_size} pieces: 4 specials, 256 bytes, "
      f"{len(vocab.char_pieces)} characters, {len(vocab.merges)} merges\n")

print("first merges, by frequency:")
for rank in range(8):
    left, right = vocab.merges[rank]
    out_id = NUM_RESERVED + len(vocab.char_pieces) + rank
    print(f"  {rank:>2}: {vocab.piece_text(left)!r} + {vocab.piece_text(right)!r}"
          f" -> {vocab.piece_text(out_id)!r} (seen {vocab.merge_frequencies[rank]}x)")

print("\nsegmentations (the marker ▁ opens each word):")
for text in ["नेपाल सुन्दर देश हो।",          # all frequent words
             "हिमालको हिउँ",                  # inflected forms split
             "नेपाल र japan मित्र हुन्"]:       # Latin falls back to bytes
    ids = vocab.encode(text)
    pieces = " | ".join(vocab.piece_text(i) for i in ids)
    n_bytes = sum(1 for i in ids if BYTE_BASE <= i < NUM_RESERVED)
    print(f"  {text}")
    print(f"    {len(ids)} pieces ({n_bytes} byte fallbacks): {pieces}")
    assert vocab.decode(ids) == text  # lossless round trip
print("\nevery segmentation above decoded back to its exact input")
