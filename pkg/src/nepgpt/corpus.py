"""Corpus cleaning: raw scraped text -> deduplicated Devanagari-only lines.

The cleaning pass strips markup, URLs and Latin-script words, maps or drops
digits, filters everything outside a configured set of Unicode codepoint
ranges, and normalizes to composed (NFC) form with collapsed whitespace.
Deduplication is exact (first occurrence wins) with length bounds and an
optional fragment heuristic.
"""

import re
import unicodedata
from dataclasses import dataclass, field

from .errors import ConfigInvalid
from .util import checksum64

DEVANAGARI_BLOCK = (0x0900, 0x097F)
DEVANAGARI_EXTENDED = (0xA8E0, 0xA8FF)
ASCII_DIGITS = (0x30, 0x39)
# tab, newline, space
WHITESPACE_RANGES = [(0x09, 0x0A), (0x20, 0x20)]

DIGIT_POLICIES = ("keep_ascii", "map_to_devanagari", "drop")

# Devanagari digits start at U+0966
_DIGIT_MAP = {ord("0") + i: chr(0x0966 + i) for i in range(10)}

_SCRIPT_RE = re.compile(r"<(script|style)\b[^>]*>.*?</\1\s*>", re.IGNORECASE | re.DOTALL)
_TAG_RE = re.compile(r"<[^>]*>")
_URL_RE = re.compile(r"(?:[a-zA-Z][a-zA-Z0-9+.\-]*://|www\.)\S+")
_LATIN_RE = re.compile(r"[A-Za-z]+")

# sentence-final marks accepted by the fragment heuristic
_SENTENCE_END = ("।", "॥", "?", "”", '"', "'")
_FRAGMENT_MAX_CHARS = 48


def default_keep_ranges(digit_policy: str = "map_to_devanagari") -> list[tuple[int, int]]:
    ranges = list(WHITESPACE_RANGES) + [DEVANAGARI_BLOCK, DEVANAGARI_EXTENDED]
    if digit_policy == "keep_ascii":
        ranges.append(ASCII_DIGITS)
    return sorted(ranges)


@dataclass
class CleanConfig:
    digit_policy: str = "map_to_devanagari"
    keep_ranges: list[tuple[int, int]] = field(default=None)
    min_sentence_chars: int = 12
    max_sentence_chars: int = 8192
    dedup_scope: str = "exact_line"
    drop_fragments: bool = False

    def __post_init__(self):
        if self.keep_ranges is None:
            self.keep_ranges = default_keep_ranges(self.digit_policy)
        self.validate()

    def validate(self):
        if self.digit_policy not in DIGIT_POLICIES:
            raise ConfigInvalid(f"unknown digit_policy: {self.digit_policy!r}")
        if self.dedup_scope not in ("exact_line", "exact_document"):
            raise ConfigInvalid(f"unknown dedup_scope: {self.dedup_scope!r}")
        if not (0 < self.min_sentence_chars < self.max_sentence_chars):
            raise ConfigInvalid(
                f"need 0 < min_sentence_chars < max_sentence_chars, got "
                f"{self.min_sentence_chars} / {self.max_sentence_chars}"
            )
        last_hi = -1
        for lo, hi in self.keep_ranges:
            if lo > hi or lo <= last_hi:
                raise ConfigInvalid("keep_ranges must be sorted and disjoint")
            last_hi = hi


@dataclass
class DocRecord:
    source_id: str
    text: str
    line_count: int = 0
    char_count: int = 0

    def __post_init__(self):
        if self.line_count == 0 and self.text:
            self.line_count = self.text.count("\n") + 1
        if self.char_count == 0:
            self.char_count = len(self.text)


@dataclass
class CorpusStats:
    input_bytes: int = 0
    output_bytes: int = 0
    lines_in: int = 0
    lines_out: int = 0
    duplicates_removed: int = 0
    docs_dropped: int = 0

    FIELDS = ("input_bytes", "output_bytes", "lines_in", "lines_out",
              "duplicates_removed", "docs_dropped")

    def check(self) -> list[str]:
        """Return human-readable warnings for violated accounting invariants."""
        warnings = []
        if self.lines_out + self.duplicates_removed + self.docs_dropped > self.lines_in:
            warnings.append("line accounting exceeds input line count")
        if self.output_bytes > self.input_bytes:
            warnings.append("output larger than input (filter-only run should shrink)")
        return warnings


def _in_ranges(cp: int, ranges: list[tuple[int, int]]) -> bool:
    for lo, hi in ranges:
        if lo <= cp <= hi:
            return True
        if cp < lo:
            return False
    return False


def clean_text(raw: str, cfg: CleanConfig = None) -> str:
    """Clean one document. Worst case returns the empty string."""
    cfg = cfg or CleanConfig()
    text = unicodedata.normalize("NFC", raw)
    # markup first, then URLs, then scripts: removing codepoints earlier
    # would corrupt the tag/URL patterns
    text = _SCRIPT_RE.sub(" ", text)
    text = _TAG_RE.sub(" ", text)
    text = _URL_RE.sub(" ", text)
    text = _LATIN_RE.sub(" ", text)
    if cfg.digit_policy == "map_to_devanagari":
        text = text.translate(_DIGIT_MAP)
    elif cfg.digit_policy == "drop":
        text = re.sub(r"[0-9]+", "", text)
    text = "".join(c if _in_ranges(ord(c), cfg.keep_ranges) else " " for c in text)
    # filtering can leave previously-separated marks adjacent; recompose
    text = unicodedata.normalize("NFC", text)
    lines = [" ".join(line.split()) for line in text.split("\n")]
    return "\n".join(line for line in lines if line)


def clean_document(source_id: str, raw: str, cfg: CleanConfig = None) -> DocRecord:
    return DocRecord(source_id=source_id, text=clean_text(raw, cfg))


def _is_fragment(line: str) -> bool:
    return len(line) < _FRAGMENT_MAX_CHARS and not line.endswith(_SENTENCE_END)


def dedup_corpus(docs, cfg: CleanConfig = None):
    """Exact deduplication with length bounds.

    Returns (retained docs, CorpusStats). Under exact_line scope every
    retained line is the first occurrence of its exact text across the
    whole stream; exact_document scope dedups whole documents. Retained
    lines keep their input order.
    """
    cfg = cfg or CleanConfig()
    stats = CorpusStats()
    # 64-bit content hash -> first line seen with that hash; the stored
    # text is compared on hash hit so collisions cannot drop unique lines
    seen: dict[int, str] = {}
    out_docs = []

    for doc in docs:
        stats.input_bytes += len(doc.text.encode("utf-8"))
        lines = doc.text.split("\n") if doc.text else []
        stats.lines_in += len(lines)

        if cfg.dedup_scope == "exact_document":
            key = checksum64(doc.text.encode("utf-8"))
            if key in seen and seen[key] == doc.text:
                stats.duplicates_removed += len(lines)
                continue
            seen[key] = doc.text

        kept = []
        for line in lines:
            n = len(line)
            if n < cfg.min_sentence_chars or n > cfg.max_sentence_chars:
                stats.docs_dropped += 1
                continue
            if cfg.drop_fragments and _is_fragment(line):
                stats.docs_dropped += 1
                continue
            if cfg.dedup_scope == "exact_line":
                key = checksum64(line.encode("utf-8"))
                if key in seen and seen[key] == line:
                    stats.duplicates_removed += 1
                    continue
                seen[key] = line
            kept.append(line)

        if kept:
            text = "\n".join(kept)
            stats.lines_out += len(kept)
            stats.output_bytes += len(text.encode("utf-8"))
            out_docs.append(DocRecord(source_id=doc.source_id, text=text))

    return out_docs, stats


def corpus_report(stats: CorpusStats) -> str:
    lines = ["corpus cleaning report"]
    for name in CorpusStats.FIELDS:
        lines.append(f"  {name:20s} {getattr(stats, name)}")
    for warning in stats.check():
        lines.append(f"  WARNING: {warning}")
    return "\n".join(lines)


def stats_csv(stats: CorpusStats) -> str:
    header = ",".join(CorpusStats.FIELDS)
    row = ",".join(str(getattr(stats, f)) for f in CorpusStats.FIELDS)
    return f"{header}\n{row}\n"
