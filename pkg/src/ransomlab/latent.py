"""Distance and projection analysis of raw and Text-CNN latent feature spaces."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .errors import BadRank, ShapeError

N_BINS = 50


def _matrix(vectors, what):
    A = np.asarray(vectors, dtype=np.float64)
    if A.ndim == 1:
        A = A[None, :]
    if A.ndim != 2 or A.shape[0] == 0:
        raise ShapeError(("N>0", "d"), A.shape, what)
    return A


def pairwise_l2(A, B, block=512) -> np.ndarray:
    """``|A| x |B|`` Euclidean distances (exact differences, blocked over rows of A)."""
    out = np.empty((A.shape[0], B.shape[0]))
    for s in range(0, A.shape[0], block):
        diff = A[s:s + block, None, :] - B[None, :, :]
        out[s:s + block] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out


@dataclass
class DistanceStudy:
    space: str
    pair: tuple
    distances: np.ndarray  # flat, row-major over (A, B)
    mean: float
    bin_edges: np.ndarray
    counts: np.ndarray

    def histogram_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count", "density"])
        widths = np.diff(self.bin_edges)
        total = self.counts.sum()
        for lo, hi, c, wd in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts, widths):
            dens = c / (total * wd) if total and wd > 0 else 0.0
            w.writerow([f"{lo:.6g}", f"{hi:.6g}", int(c), f"{dens:.6g}"])
        return buf.getvalue()


def cross_distances(A, B, space="raw", pair=("A", "B"), bins=N_BINS) -> DistanceStudy:
    A, B = _matrix(A, "A"), _matrix(B, "B")
    if A.shape[1] != B.shape[1]:
        raise ShapeError(("N", A.shape[1]), B.shape, "B")
    d = pairwise_l2(A, B).ravel()
    top = float(d.max()) if d.max() > 0 else 1.0
    counts, edges = np.histogram(d, bins=bins, range=(0.0, top))
    return DistanceStudy(space, tuple(pair), d, float(d.mean()), edges, counts)


@dataclass
class Projection:
    components: np.ndarray        # k x d, orthonormal rows
    coordinates: np.ndarray       # n x k
    explained_variance_ratio: np.ndarray
    mean: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.coordinates @ self.components + self.mean

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) @ self.components.T


def pca_project(vectors, k: int) -> Projection:
    """Top-``k`` principal axes from the eigendecomposition of the sample covariance.

    Each axis is signed so that its largest-magnitude coordinate is positive.
    """
    X = _matrix(vectors, "vectors")
    n, d = X.shape
    if k > d or k < 1:
        raise BadRank(f"k={k} must lie in 1..{d}")
    if n < k + 1:
        raise BadRank(f"need at least {k + 1} vectors for k={k}, got {n}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (n - 1)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals, vecs = np.clip(vals[order], 0.0, None), vecs[:, order]
    comps = vecs[:, :k].T.copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    total = vals.sum()
    ratio = vals[:k] / total if total > 0 else np.zeros(k)
    return Projection(comps, Xc @ comps.T, ratio, mean)


@dataclass
class BlindSpotVerdict:
    raw_gen_to_malicious: float
    raw_gen_to_benign: float
    latent_gen_to_malicious: float
    latent_gen_to_benign: float

    @property
    def verdict(self) -> bool:
        return (self.raw_gen_to_malicious < self.raw_gen_to_benign
                and self.latent_gen_to_benign < self.latent_gen_to_malicious)

    def to_json(self) -> dict:
        return {"verdict": self.verdict,
                "raw_gen_to_malicious": self.raw_gen_to_malicious,
                "raw_gen_to_benign": self.raw_gen_to_benign,
                "latent_gen_to_malicious": self.latent_gen_to_malicious,
                "latent_gen_to_benign": self.latent_gen_to_benign}


def blind_spot_diagnostic(raw: dict, latent: dict) -> BlindSpotVerdict:
    """Generated logs near malicious data in raw space yet near benign data in latent space?

    ``raw`` and ``latent`` map ``"generated"``, ``"train_malicious"`` and
    ``"train_benign"`` to row-vector arrays.
    """
    m = lambda groups, other: cross_distances(groups["generated"], groups[other]).mean
    return BlindSpotVerdict(m(raw, "train_malicious"), m(raw, "train_benign"),
                            m(latent, "train_malicious"), m(latent, "train_benign"))


STUDY_PAIRS = {
    "te_m__tr_m": ("test_malicious", "train_malicious"),
    "te_m__tr_b": ("test_malicious", "train_benign"),
    "g__tr_m": ("generated", "train_malicious"),
    "g__tr_b": ("generated", "train_benign"),
}


def latent_study(raw: dict, latent: dict, out_dir=None, k: int = 3) -> dict:
    """All four distance studies in both spaces, PCA of latent groups, and the verdict.

    With ``out_dir`` the results are also written as ``distances_<space>_<pair>.csv``,
    ``pca.csv`` and ``verdict.json``.
    """
    import os

    studies = {}
    for space, groups in (("raw", raw), ("latent", latent)):
        for key, (a, b) in STUDY_PAIRS.items():
            if a in groups and b in groups:
                studies[(space, key)] = cross_distances(groups[a], groups[b], space, (a, b))
    names = [g for g in ("train_benign", "train_malicious", "test_benign", "test_malicious",
                         "generated") if g in latent]
    stacked = np.vstack([latent[g] for g in names])
    proj = pca_project(stacked, min(k, stacked.shape[1]))
    verdict = blind_spot_diagnostic(raw, latent)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        for (space, key), st in studies.items():
            with open(os.path.join(out_dir, f"distances_{space}_{key}.csv"), "w") as fh:
                fh.write(st.histogram_csv())
        with open(os.path.join(out_dir, "pca.csv"), "w") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["group"] + [f"pc{i + 1}" for i in range(proj.coordinates.shape[1])])
            row = 0
            for g in names:
                for _ in range(len(latent[g])):
                    w.writerow([g] + [f"{v:.6g}" for v in proj.coordinates[row]])
                    row += 1
        summary = verdict.to_json()
        summary["explained_variance_ratio"] = proj.explained_variance_ratio.tolist()
        summary["means"] = {f"{space}:{key}": st.mean for (space, key), st in studies.items()}
        with open(os.path.join(out_dir, "verdict.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
    return {"studies": studies, "projection": proj, "verdict": verdict}
