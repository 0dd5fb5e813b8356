import numpy as np
import pytest

from ibcaan.errors import DataError, ParseError
from ibcaan.metrics import eer_from_scores
from ibcaan.shiftbench import (
    SyntheticSpec,
    generate_dataset,
    read_dataset,
    shared_cue_eer,
    write_dataset,
)

SMALL = SyntheticSpec(n_train=400, n_val=100, n_test_seen=100, n_test_unseen=100)


@pytest.fixture(scope="module")
def default_ds():
    return generate_dataset(SyntheticSpec())


def test_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(s_shared=3.0, s_attack=1.0).validate()
    with pytest.raises(ValueError):
        generate_dataset(SyntheticSpec(input_dim=6))  # needs 1 + 3 + 2 + 1 = 7
    generate_dataset(SyntheticSpec(input_dim=7, n_train=10, n_val=10, n_test_seen=10, n_test_unseen=10))


def test_cues_are_orthonormal(default_ds):
    basis = np.vstack([default_ds.u, default_ds.v, default_ds.w])
    assert np.max(np.abs(basis @ basis.T - np.eye(len(basis)))) < 1e-10


def test_split_structure(default_ds):
    K = default_ds.spec.n_train_attacks
    for name, s in default_ds.splits.items():
        assert np.all((s.a == -1) == (s.y == 0))
        assert abs(np.mean(s.y) - 0.5) < 1e-12
        attacks = s.a[s.y == 1]
        if name == "test_unseen":
            assert attacks.min() >= K
        else:
            assert attacks.max() < K
            counts = np.bincount(attacks, minlength=K) / attacks.size
            assert np.all(np.abs(counts - 1 / K) < 0.05)


def test_class_mean_difference_along_shared_cue(default_ds):
    s = default_ds.splits["train"]
    proj = s.x @ default_ds.u
    b, p = proj[s.y == 0], proj[s.y == 1]
    se = np.sqrt(b.var(ddof=1) / b.size + p.var(ddof=1) / p.size)
    assert abs((p.mean() - b.mean()) - default_ds.spec.s_shared) < 3 * se


def test_covariate_shift_is_along_w_only(default_ds):
    tr, te = default_ds.splits["train"], default_ds.splits["test_seen"]
    bona_shift = te.x[te.y == 0].mean(0) - tr.x[tr.y == 0].mean(0)
    assert bona_shift @ default_ds.w == pytest.approx(default_ds.spec.shift, abs=0.2)
    assert abs(bona_shift @ default_ds.u) < 0.2


def test_no_shift_case_matches_train_generative_parameters():
    spec = SyntheticSpec(n_test_attacks=0, shift=0.0, n_train=4000, n_test_seen=4000)
    ds = generate_dataset(spec)
    assert len(ds.splits["test_unseen"]) == 0
    tr, te = ds.splits["train"], ds.splits["test_seen"]
    for cls in (0, 1):
        d = te.x[te.y == cls].mean(0) - tr.x[tr.y == cls].mean(0)
        assert np.max(np.abs(d)) < 0.15


def test_shared_cue_detector_matches_closed_form():
    spec = SyntheticSpec(n_train=2, n_val=2, n_test_seen=2, n_test_unseen=100_000)
    ds = generate_dataset(spec)
    s = ds.splits["test_unseen"]
    scores = -(s.x @ ds.u)  # higher = more bonafide
    brute = eer_from_scores(scores[s.y == 0], scores[s.y == 1])
    assert shared_cue_eer(spec) == pytest.approx(0.308537538725986896, abs=1e-15)
    assert abs(brute - shared_cue_eer(spec)) < 0.01


def test_round_trip_and_determinism(tmp_path):
    ds = generate_dataset(SMALL)
    p1, p2 = tmp_path / "a.tsv", tmp_path / "b.tsv"
    write_dataset(ds, p1)
    write_dataset(generate_dataset(SMALL), p2)
    assert p1.read_bytes() == p2.read_bytes()

    back = read_dataset(p1)
    assert back.spec == ds.spec
    assert np.array_equal(back.u, ds.u) and np.array_equal(back.v, ds.v) and np.array_equal(back.w, ds.w)
    for name, s in ds.splits.items():
        t = back.splits[name]
        assert np.array_equal(s.x, t.x) and np.array_equal(s.y, t.y) and np.array_equal(s.a, t.a)
    ex = next(back.examples("train"))
    assert ex.split == "train" and (ex.a is None) == (ex.y == 0)


def test_truncated_file_names_line(tmp_path):
    p = tmp_path / "d.tsv"
    write_dataset(generate_dataset(SMALL), p)
    text = p.read_text()
    p.write_text(text[: len(text) - 40])
    with pytest.raises(ParseError) as err:
        read_dataset(p)
    assert err.value.line == text.count("\n")


def test_row_count_mismatch(tmp_path):
    p = tmp_path / "d.tsv"
    write_dataset(generate_dataset(SMALL), p)
    lines = p.read_text().splitlines(keepends=True)
    p.write_text("".join(lines[:-1]))
    with pytest.raises(DataError, match="test_unseen"):
        read_dataset(p)
