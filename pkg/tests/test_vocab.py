import numpy as np
import pytest

from mtner.vocab import (
    SPACE_CHAR,
    UNK_TOKEN,
    EmbeddingTable,
    build_vocab,
    load_pretrained,
    lookup_char,
    lookup_word,
)


def _corpus(*sentences):
    return [[list(s.split()) for s in sentences]]


class TestBuildVocab:
    def test_frequency_threshold_keeps(self):
        corpora = _corpus(*["RING1 binds"] * 6)
        v = build_vocab(corpora, min_freq=5)
        assert "RING1" in v.word_to_id
        assert lookup_word(v, "RING1") != v.unk_id

    def test_frequency_threshold_drops(self):
        corpora = _corpus(*["RING1 binds ok ok ok"] * 4 + ["ok"])
        v = build_vocab(corpora, min_freq=5)
        assert "RING1" not in v.word_to_id
        assert lookup_word(v, "RING1") == v.unk_id
        assert "ok" in v.word_to_id  # 13 occurrences

    def test_min_freq_one_keeps_everything(self):
        corpora = _corpus("a b c", "d e")
        v = build_vocab(corpora, min_freq=1)
        for tok in "abcde":
            assert lookup_word(v, tok) != v.unk_id

    def test_unk_pinned_at_zero(self):
        v = build_vocab(_corpus("x y"), min_freq=1)
        assert v.word_to_id[UNK_TOKEN] == 0
        assert v.unk_id == 0

    def test_id_order_frequency_then_lexicographic(self):
        v = build_vocab(_corpus("b b b a a c c z"), min_freq=1)
        # b freq 3 first; a and c tie at 2, alphabetical; z last
        assert v.word_to_id["b"] == 1
        assert v.word_to_id["a"] == 2
        assert v.word_to_id["c"] == 3
        assert v.word_to_id["z"] == 4

    def test_rebuild_deterministic(self):
        corpora = _corpus("gene binds promoter", "gene was expressed")
        a = build_vocab(corpora, min_freq=1)
        b = build_vocab(corpora, min_freq=1)
        assert a.word_to_id == b.word_to_id
        assert a.char_to_id == b.char_to_id

    def test_union_across_corpora(self):
        # 3 + 2 occurrences only crosses min_freq=5 when corpora are pooled
        corpora = [[["deep"]] * 3, [["deep"]] * 2]
        v = build_vocab(corpora, min_freq=5)
        assert "deep" in v.word_to_id

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="nonempty"):
            build_vocab([[]])

    def test_bad_token_rejected(self):
        with pytest.raises(ValueError, match="bad token"):
            build_vocab([[["ok", ""]]])


class TestCharVocab:
    def test_space_and_unseen_ids(self):
        v = build_vocab(_corpus("ab ba"), min_freq=1)
        assert v.char_to_id[SPACE_CHAR] == 1
        assert lookup_char(v, "a") >= 2
        assert lookup_char(v, "Z") == v.unk_char_id == 0

    def test_char_size_counts_unk_slot(self):
        v = build_vocab(_corpus("ab"), min_freq=1)
        # space + a + b mapped, plus the reserved unseen slot
        assert v.char_size == 4

    def test_chars_from_rare_words_kept(self):
        v = build_vocab(_corpus("qqq unusual"), min_freq=5)
        assert lookup_word(v, "unusual") == v.unk_id
        for ch in "unusal":
            assert lookup_char(v, ch) != v.unk_char_id


class TestLookupTotality:
    def test_any_string_resolves(self):
        v = build_vocab(_corpus("a b"), min_freq=1)
        assert lookup_word(v, "XYZZY42") == v.unk_id
        assert lookup_word(v, "") == v.unk_id


def _write_vectors(path, rows, dim):
    lines = [f"{len(rows)} {dim}"]
    for tok, vec in rows:
        lines.append(tok + " " + " ".join(str(x) for x in vec))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


class TestLoadPretrained:
    def test_round_trip_rows(self, tmp_path):
        v = build_vocab(_corpus("alpha beta"), min_freq=1)
        f = tmp_path / "vecs.txt"
        _write_vectors(f, [("alpha", [1.0, 2.0, 3.0]), ("beta", [4.0, 5.0, 6.0])], 3)
        table, cov = load_pretrained(f, v, expected_dim=3, seed_or_rng=0)
        np.testing.assert_array_equal(table.vectors[v.word_to_id["alpha"]],
                                      [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(table.vectors[v.word_to_id["beta"]],
                                      [4.0, 5.0, 6.0])
        assert cov.found == 2 and cov.missing == 0

    def test_found_rows_frozen_missing_trainable(self, tmp_path):
        v = build_vocab(_corpus("alpha beta"), min_freq=1)
        f = tmp_path / "vecs.txt"
        _write_vectors(f, [("alpha", [1.0, 2.0])], 2)
        table, cov = load_pretrained(f, v, expected_dim=2)
        assert not table.trainable_mask[v.word_to_id["alpha"]]
        assert table.trainable_mask[v.word_to_id["beta"]]
        assert table.trainable_mask[v.unk_id]
        assert cov.missing == 1

    def test_case_sensitive(self, tmp_path):
        v = build_vocab(_corpus("Ring1 ring1"), min_freq=1)
        f = tmp_path / "vecs.txt"
        _write_vectors(f, [("ring1", [9.0, 9.0])], 2)
        table, cov = load_pretrained(f, v, expected_dim=2)
        assert cov.found == 1
        np.testing.assert_array_equal(table.vectors[v.word_to_id["ring1"]],
                                      [9.0, 9.0])
        assert table.trainable_mask[v.word_to_id["Ring1"]]

    def test_malformed_line_reports_lineno(self, tmp_path):
        f = tmp_path / "vecs.txt"
        f.write_text("2 2\ngood 1.0 2.0\nbad 1.0\n", encoding="utf-8")
        v = build_vocab(_corpus("good bad"), min_freq=1)
        with pytest.raises(ValueError, match=r":3:"):
            load_pretrained(f, v)

    def test_non_numeric_reports_lineno(self, tmp_path):
        f = tmp_path / "vecs.txt"
        f.write_text("1 2\nword 1.0 oops\n", encoding="utf-8")
        v = build_vocab(_corpus("word"), min_freq=1)
        with pytest.raises(ValueError, match=r":2:.*non-numeric"):
            load_pretrained(f, v)

    def test_dim_mismatch_rejected(self, tmp_path):
        f = tmp_path / "vecs.txt"
        _write_vectors(f, [("w", [1.0, 2.0])], 2)
        v = build_vocab(_corpus("w"), min_freq=1)
        with pytest.raises(ValueError, match="dim"):
            load_pretrained(f, v, expected_dim=5)

    def test_header_count_mismatch_rejected(self, tmp_path):
        f = tmp_path / "vecs.txt"
        f.write_text("3 2\nw 1.0 2.0\n", encoding="utf-8")
        v = build_vocab(_corpus("w"), min_freq=1)
        with pytest.raises(ValueError, match="header"):
            load_pretrained(f, v)

    def test_deterministic_given_seed(self, tmp_path):
        v = build_vocab(_corpus("alpha beta"), min_freq=1)
        f = tmp_path / "vecs.txt"
        _write_vectors(f, [("alpha", [1.0, 2.0])], 2)
        t1, _ = load_pretrained(f, v, seed_or_rng=5)
        t2, _ = load_pretrained(f, v, seed_or_rng=5)
        assert np.array_equal(t1.vectors, t2.vectors)


class TestEmbeddingTable:
    def test_random_all_trainable(self):
        t = EmbeddingTable.random(4, 3, 0)
        assert t.size == 4 and t.dim == 3
        assert t.trainable_mask.all()

    def test_random_deterministic(self):
        assert np.array_equal(EmbeddingTable.random(4, 3, 9).vectors,
                              EmbeddingTable.random(4, 3, 9).vectors)
