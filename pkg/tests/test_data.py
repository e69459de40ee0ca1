import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gaitmixer import data as D
from gaitmixer.errors import ConfigError, DataError, ParseError, SequenceTooShort


def make_seq(T=60, seed=0, **kw):
    kp = np.random.default_rng(seed).uniform(0, 320, size=(T, 17, 2))
    return D.SkeletonSequence(kp, kw.pop("subject", "001"), **kw)


def test_csv_load_60_frames(tmp_path):
    seq = make_seq(60)
    path = tmp_path / "007-bg-02-036.csv"
    np.savetxt(path, seq.keypoints.reshape(60, 34), delimiter=",", fmt="%.17g")
    back = D.load_sequence(path)
    assert back.frames == 60
    assert (back.subject_id, back.condition, back.seq_index, back.view_deg) == ("007", "BG", 2, 36)
    assert np.array_equal(back.keypoints, seq.keypoints)


def test_sixteen_joints_reports_line(tmp_path):
    path = tmp_path / "001-nm-01-000.csv"
    rows = ["," .join(["1.0"] * 34)] * 3 + ["," .join(["1.0"] * 32)]
    path.write_text("\n".join(rows) + "\n")
    with pytest.raises(ParseError) as err:
        D.load_sequence(path)
    assert err.value.line == 4 and "17 joints" in str(err.value)


def test_non_finite_value_is_rejected(tmp_path):
    path = tmp_path / "001-nm-01-000.csv"
    rows = [",".join(["1.0"] * 34), ",".join(["nan"] + ["1.0"] * 33)]
    path.write_text("\n".join(rows))
    with pytest.raises(ParseError, match=":2:"):
        D.load_sequence(path)


@pytest.mark.parametrize("fmt", ["json", "csv"])
def test_write_load_round_trip(tmp_path, fmt):
    seq = make_seq(75, subject="042", condition="CL", view_deg=126, seq_index=2)
    path = D.write_sequence(seq, tmp_path / f"042-cl-02-126.{fmt}")
    back = D.load_sequence(path)
    assert np.array_equal(back.keypoints, seq.keypoints)
    assert back.labels() == seq.labels()


def test_json_requires_frames(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"subject": "1", "condition": "NM", "view": 0, "seq_index": 1}))
    with pytest.raises(ParseError, match="frames"):
        D.load_sequence(path)


def test_normalize_examples():
    kp = np.zeros((1, 17, 2))
    kp[0, 0] = (320.0, 160.0)
    seq = D.SkeletonSequence(kp, "1")
    assert D.normalize(seq).keypoints[0, 0].tolist() == [1.0, 0.5]
    assert not D.normalize(D.SkeletonSequence(np.zeros((2, 17, 2)), "1")).keypoints.any()
    s = make_seq(10)
    assert np.allclose(D.denormalize(D.normalize(s)).keypoints, s.keypoints, atol=1e-12)
    with pytest.raises(ConfigError):
        D.normalize(s, 0.0)


def test_center_crop_examples():
    assert np.array_equal(D.center_crop(D.normalize(make_seq(60))).window,
                          D.normalize(make_seq(60)).keypoints)
    seq = D.normalize(make_seq(100))
    assert np.array_equal(D.center_crop(seq).window, seq.keypoints[20:80])
    with pytest.raises(SequenceTooShort):
        D.center_crop(make_seq(59))


def test_sanity_band_guards_unnormalised_windows():
    with pytest.raises(DataError, match="sanity band"):
        D.center_crop(make_seq(60))


def test_mirror_matches_coco_swap_table():
    names = D.JOINT_NAMES
    oracle = [names.index("right_" + n[5:]) if n.startswith("left_") else
              names.index("left_" + n[6:]) if n.startswith("right_") else i
              for i, n in enumerate(names)]
    assert oracle != list(range(17))
    w = np.random.default_rng(0).uniform(0, 1, (60, 17, 2))
    m = D.mirror(w)
    assert np.array_equal(m[:, :, 1], w[:, oracle, 1])
    assert np.array_equal(m[:, :, 0], 1.0 - w[:, oracle, 0])
    assert np.allclose(D.mirror(m), w, atol=1e-15)


def test_null_policy_is_identity():
    seq = D.normalize(make_seq(90))
    s = D.augment(seq, np.random.default_rng(0), D.AugmentPolicy.null())
    assert np.array_equal(s.window, D.center_crop(seq).window)


def test_augment_is_deterministic_per_generator():
    seq = D.normalize(make_seq(90))
    a = D.augment(seq, np.random.default_rng(5), D.AugmentPolicy())
    b = D.augment(seq, np.random.default_rng(5), D.AugmentPolicy())
    assert np.array_equal(a.window, b.window) and a.window.shape == (60, 17, 2)


def test_reference_batch_shape():
    labels = [f"{s:03d}" for s in range(74) for _ in range(10)]
    batch = D.epoch_batches(labels, 74, 4, np.random.default_rng(0))[0]
    assert len(batch) == 296 and len({labels[i] for i in batch}) == 74


def test_two_subjects_one_each():
    labels = ["a", "b", "b"]
    for e in range(5):
        (batch,) = D.epoch_batches(labels, 2, 1, np.random.default_rng(e))
        assert sorted(labels[i] for i in batch) == ["a", "b"]


def test_too_many_subjects_requested():
    with pytest.raises(ConfigError):
        D.epoch_batches(["a"] * 5 + ["b"] * 5, 3, 2, np.random.default_rng(0))


def test_subject_frequency_is_uniform():
    labels = [s for s in range(10) for _ in range(3)]
    stream = D.balanced_batches(labels, 3, 4, np.random.default_rng(0))
    counts = Counter()
    for _ in range(1000):
        batch = next(stream)
        assert len(batch) == 12
        counts.update({labels[i] for i in batch})
    expected = 1000 * 3 / 10
    assert all(abs(c - expected) / expected < 0.05 for c in counts.values())


@given(st.integers(1, 12), st.integers(1, 5), st.integers(0, 10**6))
@settings(max_examples=40, deadline=None)
def test_every_batch_has_p_times_k(n_subj, k, seed):
    rng = np.random.default_rng(seed)
    labels = [s for s in range(n_subj) for _ in range(int(rng.integers(1, 6)))]
    p = int(rng.integers(1, n_subj + 1))
    for batch in D.epoch_batches(labels, p, k, rng):
        assert len(batch) == p * k
        assert len({labels[i] for i in batch}) == p


def test_manifest_split_is_disjoint(small_manifest):
    m = small_manifest.split_first(3)
    assert set(m.train_subjects).isdisjoint(m.test_subjects)
    assert len(m.train_records()) == 12 and len(m.test_records()) == 4
    with pytest.raises(ConfigError):
        D.DatasetManifest([], ("1",), ("1",))


def test_synth_same_subject_shares_latent(small_manifest):
    by_subject = {}
    for r in small_manifest.records:
        by_subject.setdefault(r.subject, []).append(r)
    for recs in by_subject.values():
        assert all(r.meta["latent"] == recs[0].meta["latent"] for r in recs)
        assert not np.array_equal(recs[0].sequence.keypoints, recs[1].sequence.keypoints)


def test_synth_subjects_are_separated():
    spec = D.SynthSpec()
    lats = D.sample_subject_latents(20, np.random.default_rng(3), spec)
    vecs = np.stack([D.latent_vector(l) for l in lats])
    dist = np.linalg.norm(vecs[:, None] - vecs[None], axis=-1)
    assert dist[~np.eye(20, dtype=bool)].min() >= spec.min_separation


def test_period_15_gives_four_cycles_per_window():
    spec = D.SynthSpec(period_range=(15.0, 15.0), noise_px=0.0, drift_px=0.0, views=(90,))
    m = D.synthesize_gait(1, 1, np.random.default_rng(0), spec)
    w = D.center_crop(D.normalize(m.records[0].sequence)).window
    for j in (9, 10, 15, 16):  # wrists and ankles
        x = w[:, j, 0] - w[:, j, 0].mean()
        assert int(np.argmax(np.abs(np.fft.rfft(x))[1:])) + 1 == 4


def test_dataset_files_round_trip(tmp_path, small_manifest):
    path = D.write_dataset(small_manifest, tmp_path / "ds")
    m = D.DatasetManifest.read(path)
    assert len(m.records) == len(small_manifest.records)
    for a, b in zip(m.records, small_manifest.records):
        assert np.array_equal(m.load(a).keypoints, b.sequence.keypoints)


def test_casia_schedule_order():
    assert D.casia_schedule(10) == [("NM", i) for i in range(1, 7)] + [("BG", 1), ("BG", 2),
                                                                       ("CL", 1), ("CL", 2)]


def test_bad_manifest_line(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text('{"path": "a", "subject": "1", "condition": "NM", "view": 0, "seq_index": 1}\n{oops\n')
    with pytest.raises(ParseError, match=":2:"):
        D.DatasetManifest.read(p)


def test_load_windows_skips_short(small_manifest):
    recs = list(small_manifest.records[:2])
    short = D.SequenceRecord(None, "009", "NM", 0, 1, sequence=make_seq(30, subject="009"))
    arr, kept, skipped = D.load_windows(small_manifest, recs + [short])
    assert arr.shape == (2, 60, 17, 2) and skipped == [short]
