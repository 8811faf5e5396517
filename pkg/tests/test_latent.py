import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ransomlab.errors import BadRank, ShapeError
from ransomlab.latent import (
    blind_spot_diagnostic,
    cross_distances,
    latent_study,
    pairwise_l2,
    pca_project,
)


def brute_mean(A, B):
    total = 0.0
    for a in A:
        for b in B:
            total += float(np.sqrt(np.sum((a - b) ** 2)))
    return total / (len(A) * len(B))


def test_three_four_five():
    st_ = cross_distances([[0.0, 0.0]], [[3.0, 4.0]])
    assert st_.distances.tolist() == [5.0]
    assert st_.mean == 5.0


def test_single_point_zero():
    st_ = cross_distances([[1.0, 2.0, 3.0]], [[1.0, 2.0, 3.0]])
    assert st_.distances.tolist() == [0.0] and st_.mean == 0.0
    assert st_.counts.sum() == 1


def test_mean_matches_two_loop_oracle():
    rng = np.random.default_rng(0)
    for _ in range(5):
        A = rng.normal(size=(int(rng.integers(1, 12)), 6))
        B = rng.normal(size=(int(rng.integers(1, 12)), 6))
        assert cross_distances(A, B).mean == pytest.approx(brute_mean(A, B), rel=1e-12)


def test_pairwise_blocking_is_exact():
    rng = np.random.default_rng(1)
    A, B = rng.normal(size=(37, 5)), rng.normal(size=(11, 5))
    assert np.array_equal(pairwise_l2(A, B, block=4), pairwise_l2(A, B, block=512))


def test_dimension_mismatch():
    with pytest.raises(ShapeError):
        cross_distances(np.zeros((2, 3)), np.zeros((2, 4)))
    with pytest.raises(ShapeError):
        cross_distances(np.zeros((0, 3)), np.zeros((2, 3)))


def test_histogram_csv_has_fifty_bins():
    rng = np.random.default_rng(2)
    st_ = cross_distances(rng.normal(size=(20, 3)), rng.normal(size=(30, 3)))
    lines = st_.histogram_csv().splitlines()
    assert lines[0] == "bin_lo,bin_hi,count,density"
    assert len(lines) == 51
    assert sum(int(l.split(",")[2]) for l in lines[1:]) == 600


small = arrays(np.float64, st.tuples(st.integers(1, 6), st.just(3)),
               elements=st.floats(-100, 100, allow_nan=False))


@settings(max_examples=50, deadline=None)
@given(small, small)
def test_symmetric_multiset(A, B):
    ab = np.sort(cross_distances(A, B).distances)
    ba = np.sort(cross_distances(B, A).distances)
    assert np.allclose(ab, ba, rtol=0, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(small, small, st.sampled_from([0.5, 2.0, 4.0]))
def test_scaling_by_power_of_two_is_exact(A, B, c):
    # powers of two scale floating point values without rounding
    d = cross_distances(A, B).distances
    assert np.array_equal(cross_distances(A * c, B * c).distances, d * c)


# -- PCA ------------------------------------------------------------------------------

def _plane_points(rng, n=50, d=32):
    basis, _ = np.linalg.qr(rng.normal(size=(d, 2)))
    return rng.normal(size=(n, 2)) * [3.0, 1.0] @ basis.T + rng.normal(size=d)


def test_pca_plane_explains_everything():
    X = _plane_points(np.random.default_rng(3))
    proj = pca_project(X, 2)
    assert abs(proj.explained_variance_ratio.sum() - 1.0) < 1e-8
    assert np.max(np.abs(proj.reconstruct() - X)) < 1e-8


def test_pca_axes_orthonormal_and_ratios_sorted():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(200, 8)) * np.arange(1, 9)
    proj = pca_project(X, 5)
    assert np.allclose(proj.components @ proj.components.T, np.eye(5), atol=1e-10)
    assert np.all(np.diff(proj.explained_variance_ratio) <= 0)


def test_pca_isotropic_ratios_roughly_equal():
    X = np.random.default_rng(5).normal(size=(20000, 4))
    r = pca_project(X, 4).explained_variance_ratio
    assert np.all(np.abs(r - 0.25) < 0.02)


def test_pca_sign_convention_and_permutation_invariance():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(60, 5)) * [5, 3, 2, 1, 0.5]
    p1 = pca_project(X, 3)
    p2 = pca_project(X[rng.permutation(60)], 3)
    assert np.allclose(p1.components, p2.components, atol=1e-10)
    for row in p1.components:
        assert row[np.argmax(np.abs(row))] > 0
    assert np.allclose(p1.transform(X), p1.coordinates, atol=1e-10)


def test_pca_bad_rank():
    with pytest.raises(BadRank):
        pca_project(np.zeros((10, 3)), 4)
    with pytest.raises(BadRank):
        pca_project(np.zeros((2, 3)), 2)


# -- blind spot ---------------------------------------------------------------------

def _constructed_groups():
    raw = {"generated": np.array([[1.0, 0.0]]),
           "train_malicious": np.array([[1.1, 0.0]]),
           "train_benign": np.array([[-5.0, 0.0]])}
    latent = {"generated": np.array([[0.0, 1.0]]),
              "train_malicious": np.array([[0.0, 9.0]]),
              "train_benign": np.array([[0.0, 1.5]])}
    return raw, latent


def test_blind_spot_constructed_true():
    raw, latent = _constructed_groups()
    v = blind_spot_diagnostic(raw, latent)
    assert v.verdict
    assert v.raw_gen_to_malicious == pytest.approx(0.1)
    assert v.latent_gen_to_benign == pytest.approx(0.5)


def test_blind_spot_swapped_false():
    raw, latent = _constructed_groups()
    swap = lambda g: {"generated": g["generated"], "train_malicious": g["train_benign"],
                      "train_benign": g["train_malicious"]}
    assert not blind_spot_diagnostic(swap(raw), swap(latent)).verdict
    assert not blind_spot_diagnostic(raw, swap(latent)).verdict


def test_latent_study_writes_outputs(tmp_path):
    rng = np.random.default_rng(7)
    groups = ("generated", "train_malicious", "train_benign", "test_malicious")
    raw = {g: rng.normal(size=(6, 10)) for g in groups}
    latent = {g: rng.normal(size=(6, 4)) for g in groups}
    res = latent_study(raw, latent, tmp_path, k=3)
    assert len(res["studies"]) == 8
    files = sorted(p.name for p in tmp_path.iterdir())
    assert "pca.csv" in files and "verdict.json" in files
    assert "distances_latent_g__tr_b.csv" in files
    summary = json.loads((tmp_path / "verdict.json").read_text())
    assert set(summary) >= {"verdict", "raw_gen_to_malicious", "explained_variance_ratio"}
    assert len((tmp_path / "pca.csv").read_text().splitlines()) == 1 + 24
