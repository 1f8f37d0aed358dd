import unicodedata

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nepgpt.corpus import (
    CleanConfig,
    CorpusStats,
    DocRecord,
    clean_text,
    corpus_report,
    dedup_corpus,
    stats_csv,
)
from nepgpt.errors import ConfigInvalid


def _allowed(cfg: CleanConfig):
    def ok(ch):
        return any(lo <= ord(ch) <= hi for lo, hi in cfg.keep_ranges)
    return ok


class TestCleanText:
    def test_strips_markup_and_latin(self):
        assert clean_text("<p>नेपाल hello</p>") == "नेपाल"

    def test_strips_script_blocks(self):
        raw = "<script>var x = 'नेपाल';</script>काठमाडौं"
        assert clean_text(raw) == "काठमाडौं"

    def test_strips_urls(self):
        assert clean_text("हेर्नुहोस् https://example.com/a?b=1 यहाँ") == "हेर्नुहोस् यहाँ"
        assert clean_text("www.example.com नेपाल") == "नेपाल"

    def test_whitespace_collapse(self):
        assert clean_text("नेपाल   \t  देश") == "नेपाल देश"
        assert clean_text("\n\nनेपाल\n\n\nदेश\n") == "नेपाल\nदेश"

    def test_digit_map_to_devanagari(self):
        assert clean_text("सन् 2023 मा") == "सन् २०२३ मा"

    def test_digit_drop(self):
        cfg = CleanConfig(digit_policy="drop")
        assert clean_text("सन् 2023 मा", cfg) == "सन् मा"

    def test_digit_keep_ascii(self):
        cfg = CleanConfig(digit_policy="keep_ascii")
        assert clean_text("सन् 2023 मा", cfg) == "सन् 2023 मा"

    def test_emoji_and_foreign_scripts_removed(self):
        assert clean_text("नेपाल 🎉 中文 देश") == "नेपाल देश"

    def test_empty_input(self):
        assert clean_text("") == ""
        assert clean_text("hello world 123 <b>x</b>", CleanConfig(digit_policy="drop")) == ""

    def test_nfc_normalization(self):
        # ka + nukta is composition-excluded: NFC keeps the two codepoints,
        # and cleaning must agree with NFC rather than invent its own form
        decomposed = "\u0915\u093c"
        out = clean_text(decomposed)
        assert out == unicodedata.normalize("NFC", decomposed) == decomposed


class TestCleanConfig:
    def test_bad_digit_policy(self):
        with pytest.raises(ConfigInvalid):
            CleanConfig(digit_policy="remove")

    def test_bad_length_bounds(self):
        with pytest.raises(ConfigInvalid):
            CleanConfig(min_sentence_chars=100, max_sentence_chars=10)

    def test_unsorted_keep_ranges(self):
        with pytest.raises(ConfigInvalid):
            CleanConfig(keep_ranges=[(0x900, 0x97F), (0x20, 0x20)])


class TestDedup:
    def test_exact_line_dedup(self):
        line = "नेपाल एक सुन्दर देश हो।"
        docs = [DocRecord("a", line), DocRecord("b", line + "\n" + line)]
        kept, stats = dedup_corpus(docs)
        assert [d.text for d in kept] == [line]
        assert stats.duplicates_removed == 2
        assert stats.lines_out == 1

    def test_first_occurrence_wins(self):
        docs = [DocRecord("a", "काठमाडौं नेपालको राजधानी हो।"),
                DocRecord("b", "हिमालयमा धेरै हिउँ पर्दछ।"),
                DocRecord("c", "काठमाडौं नेपालको राजधानी हो।")]
        kept, _ = dedup_corpus(docs)
        assert [d.source_id for d in kept] == ["a", "b"]

    def test_length_bounds(self):
        cfg = CleanConfig(min_sentence_chars=12, max_sentence_chars=30)
        docs = [DocRecord("a", "छोटो।"),                      # below minimum
                DocRecord("b", "यो वाक्य ठीक लम्बाइको छ।"),     # in range
                DocRecord("c", "ल" * 40)]                     # above maximum
        kept, stats = dedup_corpus(docs, cfg)
        assert len(kept) == 1 and kept[0].source_id == "b"
        assert stats.docs_dropped == 2

    def test_fragment_heuristic(self):
        cfg = CleanConfig(drop_fragments=True)
        docs = [DocRecord("a", "शीर्षक मात्र भएको खण्ड"),        # short, no terminator
                DocRecord("b", "यो वाक्य दण्डसहित सकिन्छ।")]
        kept, _ = dedup_corpus(docs, cfg)
        assert [d.source_id for d in kept] == ["b"]

    def test_document_scope(self):
        text = "पहिलो वाक्य यहाँ छ।\nदोस्रो वाक्य यहाँ छ।"
        docs = [DocRecord("a", text), DocRecord("b", text)]
        kept, stats = dedup_corpus(docs, CleanConfig(dedup_scope="exact_document"))
        assert len(kept) == 1
        assert stats.duplicates_removed == 2

    def test_stats_accounting(self):
        docs = [DocRecord("a", "नेपाल एक सुन्दर देश हो।\nनेपाल एक सुन्दर देश हो।\nसानो।")]
        _, stats = dedup_corpus(docs)
        assert stats.lines_in == 3
        assert stats.lines_out + stats.duplicates_removed + stats.docs_dropped == 3
        assert stats.check() == []

    def test_report_and_csv(self):
        stats = CorpusStats(input_bytes=100, output_bytes=50, lines_in=4,
                            lines_out=2, duplicates_removed=1, docs_dropped=1)
        report = corpus_report(stats)
        assert "duplicates_removed" in report and "WARNING" not in report
        csv = stats_csv(stats)
        assert csv.splitlines()[1] == "100,50,4,2,1,1"

    def test_report_flags_bad_accounting(self):
        stats = CorpusStats(lines_in=1, lines_out=5)
        assert "WARNING" in corpus_report(stats)


class TestIdempotenceAndClosure:
    @settings(max_examples=500, deadline=None)
    @given(st.text(max_size=200))
    def test_fuzzed_unicode(self, raw):
        cfg = CleanConfig()
        out = clean_text(raw, cfg)
        assert clean_text(out, cfg) == out
        ok = _allowed(cfg)
        assert all(ok(ch) for ch in out)

    @settings(max_examples=200, deadline=None)
    @given(st.text(alphabet=st.characters(min_codepoint=0x0900, max_codepoint=0x097F),
                   max_size=100))
    def test_devanagari_closure(self, raw):
        out = clean_text(raw)
        assert clean_text(out) == out
        # no leading/trailing/doubled spaces and no empty lines survive
        if out:
            for line in out.split("\n"):
                assert line == " ".join(line.split()) and line
