"""Shared corpus builders for the test suite."""

import numpy as np
import pytest

CONSONANTS = [chr(c) for c in range(0x0915, 0x0939)]
VOWEL_SIGNS = ["", "ा", "ि", "ी", "ु", "े", "ो"]


def synthetic_words(n_words: int, seed: int = 11) -> list[str]:
    """Deterministic pool of pronounceable Devanagari nonsense words."""
    rng = np.random.default_rng(seed)

    def syllable():
        return (CONSONANTS[rng.integers(len(CONSONANTS))]
                + VOWEL_SIGNS[rng.integers(len(VOWEL_SIGNS))])

    return ["".join(syllable() for _ in range(rng.integers(2, 5)))
            for _ in range(n_words)]


def synthetic_lines(n_lines: int, n_words: int = 160, n_sentences: int = 0,
                    seed: int = 11) -> list[str]:
    """Devanagari corpus lines. With n_sentences > 0 the lines are drawn
    from a fixed sentence bank, making the text highly repetitive."""
    rng = np.random.default_rng(seed)
    words = synthetic_words(n_words, seed=seed)

    def sentence():
        n = rng.integers(4, 9)
        return " ".join(words[rng.integers(len(words))] for _ in range(n)) + "।"

    if n_sentences:
        bank = [sentence() for _ in range(n_sentences)]
        return [bank[i] for i in rng.integers(0, len(bank), size=n_lines)]
    return [sentence() for _ in range(n_lines)]


@pytest.fixture(scope="session")
def corpus_lines():
    return synthetic_lines(400)
