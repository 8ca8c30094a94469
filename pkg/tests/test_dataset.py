import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affectrec.data import (
    REALEYES_FRAME_COUNTS,
    AffectTrace,
    Appearance,
    Dataset,
    DatasetExistsError,
    SynthConfig,
    VideoRecord,
    Window,
    agreement_weights,
    apply_params,
    augment,
    augment_clip,
    centre_params,
    frame_counts,
    fuse_annotations,
    fuse_vote_indices,
    gold_standard,
    load_dataset,
    oversample,
    paper_oversample_multipliers,
    realeyes_mixture,
    resample_trace,
    subject_split,
    synth_generate,
    synth_videos,
    window_dataset,
)
from affectrec.engine import ContractError
from affectrec.objectives import EMOTIONS

IDX = {e: i for i, e in enumerate(EMOTIONS)}


def votes_for(**counts):
    rows = []
    for name, n in counts.items():
        for _ in range(n):
            row = np.zeros(8, dtype=int)
            row[IDX[name]] = 1
            rows.append(row)
    return np.array(rows)


def video(video_id, subject, n, label_states=None):
    states = np.zeros(n, dtype=np.uint8) if label_states is None else np.asarray(label_states, dtype=np.uint8)
    return VideoRecord(video_id, subject, None, votes=states[:, None])


class TestFusion:
    def test_majority(self):
        assert np.flatnonzero(fuse_annotations(votes_for(happy=4, neutral=3))).tolist() == [IDX["happy"]]

    def test_tie_keeps_both(self):
        label = fuse_annotations(votes_for(happy=3, confusion=3, neutral=1))
        assert set(np.flatnonzero(label)) == {IDX["happy"], IDX["confusion"]}

    def test_unanimous(self):
        assert np.flatnonzero(fuse_annotations(votes_for(neutral=7))).tolist() == [0]

    def test_malformed(self):
        with pytest.raises(ContractError):
            fuse_annotations(np.ones((7, 8)))
        with pytest.raises(ContractError):
            fuse_annotations(np.zeros((7, 5)))

    @given(st.lists(st.integers(0, 7), min_size=1, max_size=9), st.randoms())
    def test_order_invariant(self, choices, rnd):
        m = np.eye(8, dtype=int)[choices]
        shuffled = m[rnd.sample(range(len(choices)), len(choices))]
        assert fuse_annotations(m).tolist() == fuse_annotations(shuffled).tolist()

    @given(st.lists(st.lists(st.integers(0, 7), min_size=7, max_size=7), min_size=1, max_size=10))
    def test_vectorised_matches_single(self, frames):
        votes = np.array(frames)
        fused = fuse_vote_indices(votes)
        for t, row in enumerate(votes):
            assert fused[t].tolist() == fuse_annotations(np.eye(8, dtype=int)[row]).tolist()


class TestGoldStandard:
    def test_single_rater_identity(self):
        tr = AffectTrace(np.random.default_rng(0).normal(size=(10, 2)))
        np.testing.assert_array_equal(gold_standard([tr]).values, tr.values)

    def test_opposed_raters_cancel(self):
        v = np.random.default_rng(1).normal(size=(10, 2))
        assert np.all(gold_standard([AffectTrace(v), AffectTrace(-v)]).values == 0)

    def test_agreement_down_weights_outlier(self):
        rng = np.random.default_rng(2)
        base = np.sin(np.linspace(0, 6, 50))
        raters = np.stack([base + 0.05 * rng.normal(size=50), base + 0.05 * rng.normal(size=50), -base])
        w = agreement_weights(raters)
        assert w[2] < min(w[0], w[1])
        traces = [AffectTrace(np.stack([r, r], axis=1)) for r in raters]
        fused = gold_standard(traces, mode="agreement").values[:, 0]
        mean = gold_standard(traces).values[:, 0]
        assert np.abs(fused - base).mean() < np.abs(mean - base).mean()

    def test_length_mismatch(self):
        with pytest.raises(ContractError):
            gold_standard([AffectTrace(np.zeros((4, 2))), AffectTrace(np.zeros((5, 2)))])

    @given(st.permutations(range(4)))
    @settings(max_examples=24)
    def test_rater_order_invariant(self, perm):
        rng = np.random.default_rng(3)
        traces = [AffectTrace(rng.normal(size=(12, 2))) for _ in range(4)]
        a = gold_standard(traces, "agreement").values
        b = gold_standard([traces[i] for i in perm], "agreement").values
        np.testing.assert_allclose(a, b, atol=1e-12)


class TestResample:
    def test_same_period_identity(self):
        tr = AffectTrace(np.random.default_rng(0).normal(size=(17, 2)))
        out = tr
        for _ in range(5):
            out = resample_trace(out, 0.04)
        np.testing.assert_array_equal(out.values, tr.values)

    def test_halving(self):
        tr = AffectTrace(np.arange(10.0).repeat(2).reshape(10, 2), period=0.02)
        np.testing.assert_array_equal(resample_trace(tr, 0.04).values[:, 0], [0, 2, 4, 6, 8])

    def test_thirty_to_forty(self):
        src = np.arange(40.0)
        tr = AffectTrace(np.stack([src, src], 1), period=0.03)
        out = resample_trace(tr, 0.04).values[:, 0]
        expected = [src[int(np.floor(40 * k / 30 + 0.5))] for k in range(len(out))]
        np.testing.assert_array_equal(out, expected)
        assert len(out) == int((39 * 0.03) // 0.04) + 1

    def test_bad_period(self):
        with pytest.raises(ContractError):
            resample_trace(AffectTrace(np.zeros((3, 2))), 0.0)


class TestWindows:
    @pytest.mark.parametrize("n,count", [(300, 2), (149, 0), (380, 2)])
    def test_counts(self, n, count):
        ws = window_dataset([video("v", "s", n)], 150, 150)
        assert len(ws) == count
        assert n - sum(w.length for w in ws) == {300: 0, 149: 149, 380: 80}[n]

    def test_overlap_stride(self):
        ws = window_dataset([video("v", "s", 20)], 8, 4)
        assert [w.start for w in ws] == [0, 4, 8, 12]

    def test_bad_length(self):
        with pytest.raises(ContractError):
            window_dataset([video("v", "s", 5)], 0)


class TestOversample:
    def _corpus(self):
        states = [0] * 8 + [1] * 8 + [0] * 8
        videos = [video("a", "s", 24, states)]
        labels = {"a": fuse_vote_indices(videos[0].votes)}
        return window_dataset(videos, 8), labels

    def test_no_rare_frames_unchanged(self):
        videos = [video("a", "s", 16)]
        labels = {"a": fuse_vote_indices(videos[0].votes)}
        ws = window_dataset(videos, 8)
        res = oversample(ws, labels)
        assert res.windows == ws

    def test_all_happy_window_tripled(self):
        ws, labels = self._corpus()
        res = oversample(ws, labels, rare=["happy"], multiplier=3.0)
        assert sum(w.start == 8 for w in res.windows) == 3
        assert res.added == 2

    def test_window_with_neutral_ineligible(self):
        videos = [video("a", "s", 8, [0] * 4 + [1] * 4)]
        labels = {"a": fuse_vote_indices(videos[0].votes)}
        res = oversample(window_dataset(videos, 8), labels, rare=["happy"], multiplier=3.0)
        assert res.added == 0
        assert res.warnings == ["no eligible window for happy"]

    def test_overlapping_sets_rejected(self):
        ws, labels = self._corpus()
        with pytest.raises(ContractError):
            oversample(ws, labels, rare=["happy"], frequent=["happy"])

    @given(st.lists(st.lists(st.integers(0, 7), min_size=16, max_size=16), min_size=1, max_size=4), st.integers(0, 99))
    @settings(max_examples=40, deadline=None)
    def test_invariants(self, state_lists, seed):
        videos = [video(f"v{i}", "s", 16, s) for i, s in enumerate(state_lists)]
        labels = {v.video_id: fuse_vote_indices(v.votes) for v in videos}
        ws = window_dataset(videos, 4)
        res = oversample(ws, labels, multiplier=paper_oversample_multipliers(), seed=seed)
        assert res.windows[: len(ws)] == ws
        assert len(res.windows) >= len(ws)
        for w in res.windows[len(ws):]:
            lab = labels[w.video_id][w.start : w.stop]
            assert w.provenance == "resampled"
            assert lab[:, 0].sum() == 0 and lab[:, 1:7].sum() > 0
        np.testing.assert_array_equal(res.counts_after, frame_counts(res.windows, labels))

    def test_multipliers_from_counts(self):
        m = paper_oversample_multipliers()
        assert m["happy"] == pytest.approx(298_222 / 60_179)
        assert set(m) == {"happy", "surprise", "disgust", "confusion", "empathy", "contempt"}


class TestSplit:
    def _videos(self, n_subjects, per=2):
        return [video(f"s{s}_v{j}", f"s{s}", 4) for s in range(n_subjects) for j in range(per)]

    def test_ten_subjects(self):
        train, val = subject_split(self._videos(10))
        assert len({v.subject_id for v in train}) == 8
        assert len({v.subject_id for v in val}) == 2

    def test_deterministic(self):
        a = subject_split(self._videos(7), seed=4)
        b = subject_split(self._videos(7), seed=4)
        assert [v.video_id for v in a[1]] == [v.video_id for v in b[1]]

    def test_too_few_subjects(self):
        with pytest.raises(ContractError):
            subject_split(self._videos(1))

    @given(st.integers(2, 30), st.integers(1, 3), st.floats(0.05, 0.95), st.integers(0, 10**6))
    @settings(max_examples=100)
    def test_disjoint_and_covering(self, n, per, frac, seed):
        videos = self._videos(n, per)
        train, val = subject_split(videos, frac, seed)
        assert {v.subject_id for v in train}.isdisjoint({v.subject_id for v in val})
        assert sorted(v.video_id for v in train + val) == sorted(v.video_id for v in videos)
        assert train and val


class TestAugment:
    def test_disabled_identity(self):
        f = np.random.default_rng(0).uniform(size=(3, 16, 16))
        assert augment(f, np.random.default_rng(1), enabled=False) is f
        assert augment(f, None) is f

    def test_range_and_shape(self):
        f = np.random.default_rng(0).uniform(size=(3, 32, 32)).astype(np.float32)
        out = augment(f, np.random.default_rng(2))
        assert out.shape == f.shape and out.dtype == f.dtype
        assert out.min() >= 0 and out.max() <= 1

    def test_clip_shares_params(self):
        frame = np.random.default_rng(0).uniform(size=(3, 16, 16))
        clip = np.stack([frame, frame])
        out = augment_clip(clip, np.random.default_rng(5))
        np.testing.assert_array_equal(out[0], out[1])

    def test_centre_crop_of_constant(self):
        f = np.full((3, 20, 20), 0.4)
        np.testing.assert_allclose(apply_params(f, centre_params(f.shape)), 0.4)


class TestSynth:
    def test_appearance_varies_by_subject(self):
        cfg = SynthConfig(subjects=2)
        rng = np.random.default_rng(0)
        a, b = Appearance.sample(cfg, rng), Appearance.sample(cfg, rng)
        assert a.gain != b.gain
        assert not np.array_equal(a.identity, b.identity)

    def test_categorical_marginals(self):
        cfg = SynthConfig.preset("categorical-desk", seed=1, subjects=40, frames_per_video=200)
        ds = Dataset("categorical", synth_videos(cfg))
        counts = np.zeros(8)
        for v in ds.videos:
            majority = np.array([np.bincount(row, minlength=8).argmax() for row in v.votes])
            counts += np.bincount(majority, minlength=8)
        share = counts / counts.sum()
        assert np.abs(share - realeyes_mixture()).max() < 0.05

    def test_dimensional_layout(self):
        ds = Dataset("dimensional", synth_videos(SynthConfig.preset("dimensional-desk", seed=2)))
        v = ds.videos[0]
        assert v.votes is None and v.traces.shape == (6, 96, 2)
        assert v.frames.shape == (96, 3, 32, 32)
        assert {x.partition for x in ds.videos} == {"train", "devel", "test"}
        assert np.abs(ds.gold[v.video_id]).max() <= 1

    def test_frames_in_unit_range(self, tiny_categorical):
        for v in tiny_categorical.videos:
            assert v.frames.min() >= 0 and v.frames.max() <= 1

    def test_bad_preset(self):
        with pytest.raises(ValueError):
            SynthConfig.preset("nope")

    def test_byte_identical(self, tmp_path):
        cfg = SynthConfig.preset("categorical-desk", seed=7, subjects=2, frames_per_video=8)
        synth_generate(cfg, tmp_path / "a")
        synth_generate(cfg, tmp_path / "b")
        files = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert files == sorted(p.name for p in (tmp_path / "b").iterdir())
        for name in files:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_refuses_existing(self, tmp_path):
        cfg = SynthConfig.preset("dimensional-desk", subjects=3, frames_per_video=8)
        synth_generate(cfg, tmp_path / "d")
        with pytest.raises(DatasetExistsError):
            synth_generate(cfg, tmp_path / "d")
        synth_generate(cfg, tmp_path / "d", force=True)

    def test_load_round_trip(self, tmp_path):
        cfg = SynthConfig.preset("dimensional-desk", seed=3, subjects=3, frames_per_video=8)
        videos = synth_videos(cfg)
        loaded = load_dataset(synth_generate(cfg, tmp_path / "d"))
        assert loaded.kind == "dimensional"
        assert json.loads((tmp_path / "d" / "manifest.json").read_text())["generator"]["seed"] == 3
        for a, b in zip(videos, loaded.videos):
            assert a.frames.tobytes() == b.frames.tobytes()
            assert a.traces.tobytes() == b.traces.tobytes()
            assert a.partition == b.partition

    def test_corpus_statistics(self):
        assert REALEYES_FRAME_COUNTS["contempt"] == 8_581
        assert realeyes_mixture()[0] == pytest.approx(0.7934, abs=1e-3)
