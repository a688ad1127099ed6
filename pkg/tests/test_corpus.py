"""Tests for corpus ingestion, vocabularies, synthetic data, and batching."""

import json
from collections import Counter

import numpy as np
import pytest

from editrep.alignment import PHI, EditTag, align
from editrep.corpus import (
    BOS_ID,
    EOS_ID,
    PAD_ID,
    PHI_ID,
    RULE_CLASSES,
    SYNONYMS,
    UNK_ID,
    EditExample,
    Vocabulary,
    build_vocab,
    encode_batch,
    gen_synthetic,
    load_jsonl,
    make_batches,
    save_jsonl,
    split,
    stream_rng,
)


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


class TestLoadJsonl:
    def test_round_trip(self, tmp_path):
        p = tmp_path / "edits.jsonl"
        rows = [
            {"src": ["a", "b"], "tgt": ["a", "c"], "labels": ["X"]},
            {"src": ["q", "r", "s"], "tgt": ["q", "s"]},
        ]
        write_jsonl(p, rows)
        got = load_jsonl(p)
        assert len(got) == 2
        assert got[0].src == ("a", "b") and got[0].labels == frozenset({"X"})
        assert got[1].labels == frozenset()

    def test_drops_identity_pairs(self, tmp_path):
        p = tmp_path / "edits.jsonl"
        write_jsonl(p, [
            {"src": ["a"], "tgt": ["a"]},
            {"src": ["a"], "tgt": ["b"]},
        ])
        got = load_jsonl(p)
        assert len(got) == 1 and got[0].tgt == ("b",)

    def test_length_filters(self, tmp_path):
        p = tmp_path / "edits.jsonl"
        write_jsonl(p, [
            {"src": ["a"], "tgt": ["b"]},
            {"src": ["a", "b", "c"], "tgt": ["a", "b", "d"]},
        ])
        got = load_jsonl(p, min_len=2, max_len=10)
        assert len(got) == 1 and len(got[0].src) == 3

    def test_malformed_json_reports_line(self, tmp_path):
        p = tmp_path / "bad.jsonl"
        p.write_text('{"src": ["a"], "tgt": ["b"]}\nnot json\n')
        with pytest.raises(ValueError, match="line 2"):
            load_jsonl(p)

    def test_missing_field_reports_line(self, tmp_path):
        p = tmp_path / "bad.jsonl"
        p.write_text('{"src": ["a"]}\n')
        with pytest.raises(ValueError, match="line 1"):
            load_jsonl(p)

    def test_rejects_pad_token(self, tmp_path):
        p = tmp_path / "bad.jsonl"
        write_jsonl(p, [{"src": ["a", PHI], "tgt": ["b"]}])
        with pytest.raises(ValueError, match="reserved"):
            load_jsonl(p)

    def test_save_then_load(self, tmp_path):
        exs = gen_synthetic(20, seed=3)
        p = tmp_path / "gen.jsonl"
        save_jsonl(p, exs)
        back = load_jsonl(p)
        assert back == exs

    def test_order_preserved(self, tmp_path):
        p = tmp_path / "edits.jsonl"
        rows = [{"src": ["w", str(i)], "tgt": ["w", str(i), "x"]} for i in range(9)]
        write_jsonl(p, rows)
        got = load_jsonl(p)
        assert [e.src[1] for e in got] == [str(i) for i in range(9)]


class TestVocabulary:
    def test_reserved_ids(self):
        v = build_vocab([EditExample(("a",), ("b",), frozenset())], "source")
        assert v.id("<pad>") == PAD_ID == 0
        assert v.id("<unk>") == UNK_ID == 1
        assert v.id("<s>") == BOS_ID == 2
        assert v.id("</s>") == EOS_ID == 3
        assert v.id(PHI) == PHI_ID == 4

    def test_min_freq_filters(self):
        ex = EditExample(("a", "a", "b"), ("a",), frozenset())
        v = build_vocab([ex], "source", min_freq=2)
        assert "a" in v and "b" not in v
        assert len(v) == 6

    def test_min_freq_one_keeps_all(self):
        ex = EditExample(("a", "a", "b"), ("a",), frozenset())
        v = build_vocab([ex], "source", min_freq=1)
        assert "a" in v and "b" in v

    def test_frequency_then_lexicographic_order(self):
        exs = [
            EditExample(("a", "a", "b"), ("z",), frozenset()),
            EditExample(("a", "c"), ("z",), frozenset()),
        ]
        v = build_vocab(exs, "source")
        assert v.id("a") < v.id("b") < v.id("c")

    def test_side_selects_tokens(self):
        exs = [EditExample(("s1",), ("t1",), frozenset())]
        assert "s1" in build_vocab(exs, "source")
        assert "t1" not in build_vocab(exs, "source")
        assert "t1" in build_vocab(exs, "target")

    def test_encode_decode(self):
        v = build_vocab([EditExample(("a", "b"), ("a",), frozenset())], "source")
        ids = v.encode(["a", "zzz", "b"])
        assert ids[1] == UNK_ID
        assert v.decode(ids) == ["a", "<unk>", "b"]

    def test_content_hash_stable_and_sensitive(self):
        ex = EditExample(("a", "b"), ("a",), frozenset())
        v1 = build_vocab([ex], "source")
        v2 = build_vocab([ex], "source")
        assert v1.content_hash() == v2.content_hash()
        v3 = build_vocab([EditExample(("a", "c"), ("a",), frozenset())], "source")
        assert v1.content_hash() != v3.content_hash()


class TestGenSynthetic:
    def test_deterministic(self):
        assert gen_synthetic(50, seed=11) == gen_synthetic(50, seed=11)
        assert gen_synthetic(50, seed=11) != gen_synthetic(50, seed=12)

    def test_empty_classes_error(self):
        with pytest.raises(ValueError):
            gen_synthetic(5, classes=(), seed=0)

    def test_unknown_class_error(self):
        with pytest.raises(ValueError):
            gen_synthetic(5, classes=("NOPE",), seed=0)

    def test_single_class_tag_profile(self):
        ex = gen_synthetic(1, classes=("DROP_TOKEN",), seed=5)[0]
        tags = align(list(ex.src), list(ex.tgt)).tags
        counts = Counter(tags)
        assert counts[EditTag.DELETE] == 1
        assert counts[EditTag.INSERT] == counts[EditTag.REPLACE] == 0

    def test_histogram_near_uniform(self):
        exs = gen_synthetic(1000, seed=7)
        counts = Counter(next(iter(e.labels)) for e in exs)
        assert set(counts) == set(RULE_CLASSES)
        for c in RULE_CLASSES:
            assert abs(counts[c] / 1000 - 0.2) <= 0.05

    def test_sentence_shape(self):
        for ex in gen_synthetic(200, seed=2):
            assert 5 <= len(ex.src) <= 20
            assert ex.src != ex.tgt
            assert ex.src[0][0].isupper()
            assert ex.src[-1] in {".", ",", "!"}

    def test_labels_faithful_to_edit(self):
        # every generated label must be recoverable from the aligned pair
        for ex in gen_synthetic(400, seed=13):
            label = next(iter(ex.labels))
            edit = align(list(ex.src), list(ex.tgt))
            non_equal = [
                (tag, s, t)
                for tag, s, t in zip(edit.tags, edit.src_padded, edit.tgt_padded)
                if tag is not EditTag.EQUAL
            ]
            assert len(non_equal) == 1
            tag, s, t = non_equal[0]
            if label == "DROP_TOKEN":
                assert tag is EditTag.DELETE
            elif label == "DUP_TOKEN":
                assert tag is EditTag.INSERT
            elif label == "LOWERCASE_FIRST":
                assert tag is EditTag.REPLACE and s == t.capitalize()
            elif label == "SWAP_PUNCT":
                assert tag is EditTag.REPLACE and {s, t} == {".", "!"}
            else:
                assert tag is EditTag.REPLACE and SYNONYMS.get(s) == t

    def test_base_vocab_size_limits_pool(self):
        exs = gen_synthetic(100, classes=("DROP_TOKEN",), seed=1, base_vocab_size=10)
        body = {w for e in exs for w in e.src[1:-1]}
        assert len(body) <= 10

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            gen_synthetic(0, seed=0)
        with pytest.raises(ValueError):
            gen_synthetic(1, seed=0, base_vocab_size=0)


class TestSplit:
    def test_sizes(self):
        exs = gen_synthetic(10, seed=0)
        tr, va, te = split(exs, (0.8, 0.1, 0.1), seed=0)
        assert (len(tr), len(va), len(te)) == (8, 1, 1)

    def test_partition(self):
        exs = gen_synthetic(37, seed=0)
        tr, va, te = split(exs, (0.6, 0.2, 0.2), seed=4)
        rebuilt = sorted(tr + va + te, key=lambda e: (e.src, e.tgt))
        assert rebuilt == sorted(exs, key=lambda e: (e.src, e.tgt))

    def test_deterministic_and_seed_sensitive(self):
        exs = gen_synthetic(30, seed=0)
        a = split(exs, (0.8, 0.1, 0.1), seed=1)
        b = split(exs, (0.8, 0.1, 0.1), seed=1)
        c = split(exs, (0.8, 0.1, 0.1), seed=2)
        assert a == b
        assert a != c

    def test_bad_ratios(self):
        exs = gen_synthetic(5, seed=0)
        with pytest.raises(ValueError):
            split(exs, (0.5, 0.2, 0.2), seed=0)
        with pytest.raises(ValueError):
            split(exs, (1.0, 0.0, 0.0), seed=0)


class TestBatching:
    @pytest.fixture()
    def small(self):
        exs = gen_synthetic(24, seed=9)
        sv = build_vocab(exs, "source")
        tv = build_vocab(exs, "target")
        return exs, sv, tv

    def test_every_example_once(self, small):
        exs, sv, tv = small
        batches = make_batches(exs, sv, tv, batch_size=5, seed=1)
        assert sorted(len(b.examples) for b in batches) == [4, 5, 5, 5, 5]
        seen = [e for b in batches for e in b.examples]
        assert sorted(seen, key=lambda e: (e.src, e.tgt)) == sorted(
            exs, key=lambda e: (e.src, e.tgt))

    def test_single_batch_when_large(self, small):
        exs, sv, tv = small
        assert len(make_batches(exs, sv, tv, batch_size=100)) == 1

    def test_shapes_and_lengths(self, small):
        exs, sv, tv = small
        b = make_batches(exs, sv, tv, batch_size=8, seed=0)[0]
        n = len(b.examples)
        assert b.edit_src.shape == b.edit_tgt.shape == b.edit_tags.shape
        assert b.edit_src.shape[0] == n
        assert b.edit_src.shape[1] == b.edit_len.max()
        assert b.doc.shape[1] == b.doc_len.max()
        assert b.dec_in.shape == b.dec_out.shape
        for i, ex in enumerate(b.examples):
            edit = b.edits[i]
            assert b.edit_len[i] == edit.m
            assert b.doc_len[i] == len(ex.src)
            assert b.dec_len[i] == len(ex.tgt) + 1

    def test_teacher_forcing_layout(self, small):
        exs, sv, tv = small
        b = encode_batch(exs[:3], sv, tv)
        for i, ex in enumerate(exs[:3]):
            L = len(ex.tgt)
            assert b.dec_in[i, 0] == BOS_ID
            assert list(b.dec_in[i, 1:L + 1]) == list(b.dec_out[i, :L])
            assert b.dec_out[i, L] == EOS_ID
            assert (b.dec_in[i, L + 1:] == PAD_ID).all()

    def test_pad_positions(self, small):
        exs, sv, tv = small
        b = encode_batch(exs, sv, tv)
        for i in range(len(exs)):
            assert (b.doc[i, b.doc_len[i]:] == PAD_ID).all()
            assert (b.edit_src[i, b.edit_len[i]:] == PAD_ID).all()
            assert (b.edit_tags[i, b.edit_len[i]:] == 0).all()

    def test_phi_positions_encoded(self, small):
        exs, sv, tv = small
        b = encode_batch(exs[:8], sv, tv)
        for i in range(8):
            edit = b.edits[i]
            for j, tok in enumerate(edit.src_padded):
                if tok == PHI:
                    assert b.edit_src[i, j] == PHI_ID

    def test_bucketing_reduces_padding(self):
        # skewed lengths: bucketing should waste less padding than identity order
        exs = gen_synthetic(120, seed=21)
        sv = build_vocab(exs, "source")
        tv = build_vocab(exs, "target")

        def waste(batches):
            return sum(
                b.edit_src.shape[1] * len(b.examples) - int(b.edit_len.sum())
                for b in batches)

        bucketed = make_batches(exs, sv, tv, batch_size=16, seed=0)
        plain = make_batches(exs, sv, tv, batch_size=16,
                             bucket_by_length=False, seed=0)
        assert waste(bucketed) <= waste(plain)

    def test_xdelta_column(self, small):
        exs, sv, tv = small
        b = encode_batch(exs[:6], sv, tv)
        from editrep.alignment import changed_tokens
        for i in range(6):
            toks = changed_tokens(b.edits[i])
            assert b.xdelta_len[i] == len(toks)
            ids = [tv.id(t) if t in tv else UNK_ID for t in toks]
            assert list(b.xdelta[i, :len(toks)]) == ids


class TestStreamRng:
    def test_named_streams_differ(self):
        a = stream_rng(0, "alpha").random(4)
        b = stream_rng(0, "beta").random(4)
        assert not np.allclose(a, b)

    def test_same_name_same_stream(self):
        assert np.allclose(stream_rng(5, "x").random(8), stream_rng(5, "x").random(8))

    def test_seed_changes_stream(self):
        assert not np.allclose(stream_rng(1, "x").random(8),
                               stream_rng(2, "x").random(8))
