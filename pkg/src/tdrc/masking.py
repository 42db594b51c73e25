"""Input masking: random mask generation, PCA compression and the composite operator.

The composite mask fuses three linear maps: compression W_c (top principal
directions of the feature covariance), decompression W_c^T, and the fixed
random mask W. Applied to a mean-centered feature vector it drives the
reservoir's virtual nodes. The composite stays fixed for a whole experiment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix, as_vector, sym_eig


@dataclass(frozen=True)
class PcaFitReport:
    """Spectrum summary of a PCA fit: all eigenvalues (descending) and the
    variance fraction retained by the chosen number of components."""

    eigenvalues: np.ndarray
    retained_variance: float
    n_fit_samples: int


@dataclass(frozen=True)
class MaskSpec:
    w_input: np.ndarray          # N x M random mask
    w_composite: np.ndarray      # N x M operator actually applied to inputs
    n_nodes: int
    n_features: int
    w_compress: np.ndarray | None = None   # M' x M, rows are principal directions
    pca_mean: np.ndarray | None = None     # length M, subtracted before masking
    n_components: int | None = None
    seed: int | None = None

    @property
    def pca_enabled(self) -> bool:
        return self.w_compress is not None


def generate_random_mask(
    n_nodes: int, n_features: int, connectivity: float, amplitude: float, seed: int
) -> np.ndarray:
    """Random sparse mask with exactly round(connectivity*N*M) nonzero entries.

    Nonzero positions are drawn uniformly without replacement; each nonzero
    is +-amplitude with equal probability. Deterministic for a fixed seed.
    """
    if not 0.0 < connectivity <= 1.0:
        raise ValueError(f"connectivity must be in (0, 1], got {connectivity}")
    if n_nodes < n_features:
        raise ValueError(
            f"mask needs n_nodes >= n_features, got {n_nodes} < {n_features}"
        )
    rng = np.random.default_rng(seed)
    total = n_nodes * n_features
    n_nonzero = int(round(connectivity * total))
    flat = np.zeros(total)
    positions = rng.choice(total, size=n_nonzero, replace=False)
    flat[positions] = rng.choice(np.array([-amplitude, amplitude]), size=n_nonzero)
    return flat.reshape(n_nodes, n_features)


def pca_fit(
    samples, n_components: int
) -> tuple[np.ndarray, np.ndarray, PcaFitReport]:
    """Fit the compression matrix on a feature matrix (M x P0, one column per frame).

    Returns (w_compress, mean, report). Rows of w_compress are the top
    n_components unit eigenvectors of the sample covariance; mean is the
    per-feature average, subtracted before compression.
    """
    samples = as_matrix(samples, "samples")
    m, p0 = samples.shape
    if p0 <= m:
        raise ValueError(
            f"insufficient samples for covariance rank: {p0} frames for {m} features"
        )
    if not 1 <= n_components <= m:
        raise ValueError(f"n_components must be in [1, {m}], got {n_components}")
    mean = samples.mean(axis=1)
    centered = samples - mean[:, None]
    cov = (centered @ centered.T) / (p0 - 1)
    eigenvalues, eigenvectors = sym_eig(cov)
    w_compress = np.ascontiguousarray(eigenvectors[:, :n_components].T)
    retained = float(eigenvalues[:n_components].sum() / eigenvalues.sum())
    report = PcaFitReport(
        eigenvalues=eigenvalues, retained_variance=retained, n_fit_samples=p0
    )
    return w_compress, mean, report


def build_composite_mask(w_input, w_compress, mean, seed: int | None = None) -> MaskSpec:
    """Fuse random mask, decompression and compression into one operator."""
    w_input = as_matrix(w_input, "w_input")
    w_compress = as_matrix(w_compress, "w_compress")
    mean = as_vector(mean, "mean")
    n_nodes, m = w_input.shape
    mp, m2 = w_compress.shape
    if m2 != m or mean.shape[0] != m:
        raise ValueError(
            f"shape mismatch: w_input {w_input.shape}, w_compress {w_compress.shape}, "
            f"mean length {mean.shape[0]}"
        )
    composite = w_input @ w_compress.T @ w_compress
    return MaskSpec(
        w_input=w_input,
        w_composite=composite,
        n_nodes=n_nodes,
        n_features=m,
        w_compress=w_compress,
        pca_mean=mean,
        n_components=mp,
        seed=seed,
    )


def mask_without_pca(w_input, seed: int | None = None) -> MaskSpec:
    """MaskSpec for the plain random-mask pipeline (composite == w_input)."""
    w_input = as_matrix(w_input, "w_input")
    return MaskSpec(
        w_input=w_input,
        w_composite=w_input,
        n_nodes=w_input.shape[0],
        n_features=w_input.shape[1],
        seed=seed,
    )


def mask_and_encode(sample, mask: MaskSpec) -> np.ndarray:
    """Mask a feature sequence, producing the per-node drive values (N x L).

    Accepts a FeatureSample or a raw M x L feature matrix. Column n holds
    the N values driving the virtual nodes during frame n; downstream each
    value is held constant for one node separation (sample-and-hold).
    """
    feats = as_matrix(getattr(sample, "features", sample), "features")
    if feats.shape[0] != mask.n_features:
        raise ValueError(
            f"sample has {feats.shape[0]} features, mask expects {mask.n_features}"
        )
    if mask.pca_mean is not None:
        feats = feats - mask.pca_mean[:, None]
    return mask.w_composite @ feats


def _array_field(a: np.ndarray | None):
    return None if a is None else a.ravel().tolist()


def save_mask(mask: MaskSpec, path) -> None:
    """Write a mask to JSON with full-precision coefficients for bit-exact replay."""
    doc = {
        "n_nodes": mask.n_nodes,
        "n_features": mask.n_features,
        "n_components": mask.n_components,
        "seed": mask.seed,
        "w_input": _array_field(mask.w_input),
        "w_compress": _array_field(mask.w_compress),
        "pca_mean": _array_field(mask.pca_mean),
        "w_composite": _array_field(mask.w_composite),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_mask(path) -> MaskSpec:
    with open(path) as fh:
        doc = json.load(fh)
    n, m = doc["n_nodes"], doc["n_features"]
    mp = doc["n_components"]

    def arr(key, shape):
        if doc[key] is None:
            return None
        return np.array(doc[key], dtype=np.float64).reshape(shape)

    return MaskSpec(
        w_input=arr("w_input", (n, m)),
        w_composite=arr("w_composite", (n, m)),
        n_nodes=n,
        n_features=m,
        w_compress=arr("w_compress", (mp, m)) if mp else None,
        pca_mean=arr("pca_mean", (m,)),
        n_components=mp,
        seed=doc["seed"],
    )
