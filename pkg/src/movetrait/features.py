"""Correntropy covariance features over joint coordinate time series.

Each pair of coordinate columns (x_i, x_j) of a take is compared with a
Gaussian kernel on their length-normalized distance,

    K(x_i, x_j) = exp(-||x_i - x_j||^2 / (2 * sigma^2 * T^2)),

giving a symmetric 60x60 matrix with unit diagonal. Its strict lower
triangle, read row by row, is the 1770-dim feature vector of the take.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .mocap import JointTake, Kind

SIGMA_DEFAULT = 12.0


def correntropy(x: np.ndarray, y: np.ndarray, sigma: float = SIGMA_DEFAULT) -> float:
    """Gaussian-kernel similarity of two equal-length series, in (0, 1].

    The squared distance is normalized by the squared series length T so
    that takes of different durations remain comparable.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError(f"series length mismatch: {x.shape[0]} vs {y.shape[0]}")
    if x.size < 1:
        raise ValueError("series must have at least one sample")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    t = x.size
    d = x - y
    return float(np.exp(-(d @ d) / (2.0 * sigma * sigma * t * t)))


def pairwise_correntropy(data: np.ndarray, sigma: float = SIGMA_DEFAULT) -> np.ndarray:
    """Correntropy between all column pairs of a frames x d matrix.

    Returns a d x d matrix, symmetric by construction (each pair is
    evaluated once and mirrored) with an exact unit diagonal. Entries are
    independent, so any evaluation schedule gives identical results.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[0] < 1:
        raise ValueError("need a frames x columns matrix with at least one frame")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    t, d = data.shape
    denom = 2.0 * sigma * sigma * float(t) * float(t)
    out = np.ones((d, d), dtype=float)
    for i in range(d - 1):
        diff = data[:, i + 1:] - data[:, i:i + 1]
        sq = np.einsum("tj,tj->j", diff, diff)
        row = np.exp(-sq / denom)
        out[i, i + 1:] = row
        out[i + 1:, i] = row
    return out


@dataclass(frozen=True)
class CorrentropyMatrix:
    """Pairwise correntropy of one take's coordinate columns."""

    values: np.ndarray
    sigma: float
    series_length: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("correntropy matrix must be square")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


def correntropy_matrix(take: JointTake, sigma: float = SIGMA_DEFAULT) -> CorrentropyMatrix:
    """Build the 60x60 correntropy matrix of a joint take."""
    return CorrentropyMatrix(
        values=pairwise_correntropy(take.data, sigma),
        sigma=sigma,
        series_length=take.frames,
    )


def lower_triangle_indices(dim: int) -> tuple[np.ndarray, np.ndarray]:
    """The declared strict-lower-triangle walk: rows i=1..dim-1, cols j<i.

    Feature index k maps to (rows[k], cols[k]). Joint-importance relies on
    inverting exactly this order, so it is defined once here.
    """
    return np.tril_indices(dim, k=-1)


def vectorize_lower(matrix) -> np.ndarray:
    """Flatten the strict lower triangle in the declared walk order.

    A d x d input yields d*(d-1)/2 values; the standard 60x60 matrix gives
    the 1770-dim feature vector.
    """
    values = matrix.values if isinstance(matrix, CorrentropyMatrix) else np.asarray(matrix, dtype=float)
    rows, cols = lower_triangle_indices(values.shape[0])
    return values[rows, cols].copy()


def unvectorize_lower(vec: np.ndarray, dim: int) -> np.ndarray:
    """Rebuild the symmetric matrix (unit diagonal) from its triangle vector."""
    vec = np.asarray(vec, dtype=float)
    expected = dim * (dim - 1) // 2
    if vec.shape != (expected,):
        raise ValueError(f"expected {expected} entries for dim {dim}, got {vec.shape}")
    out = np.eye(dim, dtype=float)
    rows, cols = lower_triangle_indices(dim)
    out[rows, cols] = vec
    out[cols, rows] = vec
    return out


@dataclass(frozen=True)
class RowMeta:
    """Provenance of one feature row."""

    participant_id: str
    stimulus_id: str
    kind: Kind

    def to_dict(self) -> dict:
        return {
            "participant_id": self.participant_id,
            "stimulus_id": self.stimulus_id,
            "kind": Kind(self.kind).value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RowMeta":
        return cls(d["participant_id"], d["stimulus_id"], Kind(d["kind"]))


@dataclass(frozen=True)
class FeatureVector:
    """One take's 1770-dim feature vector plus its provenance."""

    values: np.ndarray
    meta: RowMeta
    normalized: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("feature vector must be 1-D")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class FeatureMatrix:
    """Stacked feature vectors, one row per take.

    When ``normalized``, ``mu``/``sigma`` hold the per-column statistics the
    rows were standardized with so held-out rows can be mapped identically.
    """

    values: np.ndarray
    rows: tuple[RowMeta, ...]
    normalized: bool = False
    mu: np.ndarray | None = None
    sigma: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("feature matrix must be 2-D")
        if len(self.rows) != v.shape[0]:
            raise ValueError(
                f"row metadata length {len(self.rows)} != row count {v.shape[0]}"
            )
        if self.normalized:
            if self.mu is None or self.sigma is None:
                raise ValueError("normalized matrix must carry mu and sigma")
            if len(self.mu) != v.shape[1] or len(self.sigma) != v.shape[1]:
                raise ValueError("mu/sigma length must equal column count")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "rows", tuple(self.rows))

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]


def extract_features(take: JointTake, sigma: float = SIGMA_DEFAULT) -> FeatureVector:
    """Take -> correntropy matrix -> lower-triangle feature vector."""
    k = correntropy_matrix(take, sigma)
    return FeatureVector(
        values=vectorize_lower(k),
        meta=RowMeta(take.participant_id, take.stimulus_id, take.kind),
    )


def stack_features(vectors: list[FeatureVector]) -> FeatureMatrix:
    if not vectors:
        raise ValueError("no feature vectors to stack")
    width = vectors[0].values.shape[0]
    if any(v.values.shape[0] != width for v in vectors):
        raise ValueError("feature vectors differ in length")
    return FeatureMatrix(
        values=np.stack([v.values for v in vectors]),
        rows=tuple(v.meta for v in vectors),
    )


def gaussian_stats(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column mean and population standard deviation (divide by n)."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] < 2:
        raise ValueError("normalization needs at least 2 rows")
    return values.mean(axis=0), values.std(axis=0)


def apply_gaussian_stats(values: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Standardize columns by given stats; zero-variance columns map to zero."""
    values = np.asarray(values, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    safe = np.where(sigma > 0, sigma, 1.0)
    out = (values - mu) / safe
    out[:, sigma <= 0] = 0.0
    return out


def gaussian_normalize(matrix: FeatureMatrix) -> FeatureMatrix:
    """Standardize each column to mean 0, population std 1.

    The statistics are retained on the result so validation rows can be
    transformed with the training-set stats rather than their own.
    """
    mu, sigma = gaussian_stats(matrix.values)
    return replace(
        matrix,
        values=apply_gaussian_stats(matrix.values, mu, sigma),
        normalized=True,
        mu=mu,
        sigma=sigma,
    )


def save_feature_matrix(matrix: FeatureMatrix, csv_path: str | Path) -> None:
    """Write rows as CSV plus a ``.meta.json`` sidecar with row provenance."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(csv_path, matrix.values, fmt="%.17g", delimiter=",")
    meta = {
        "rows": [r.to_dict() for r in matrix.rows],
        "normalized": matrix.normalized,
    }
    if matrix.normalized:
        meta["mu"] = [float(v) for v in matrix.mu]
        meta["sigma"] = [float(v) for v in matrix.sigma]
    sidecar = csv_path.with_suffix(csv_path.suffix + ".meta.json")
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_feature_matrix(csv_path: str | Path) -> FeatureMatrix:
    csv_path = Path(csv_path)
    values = np.loadtxt(csv_path, delimiter=",", ndmin=2)
    sidecar = csv_path.with_suffix(csv_path.suffix + ".meta.json")
    meta = json.loads(sidecar.read_text())
    return FeatureMatrix(
        values=values,
        rows=tuple(RowMeta.from_dict(r) for r in meta["rows"]),
        normalized=bool(meta.get("normalized", False)),
        mu=np.asarray(meta["mu"], dtype=float) if "mu" in meta else None,
        sigma=np.asarray(meta["sigma"], dtype=float) if "sigma" in meta else None,
    )


def save_gaussian_stats(mu: np.ndarray, sigma: np.ndarray, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(
            {"mu": [float(v) for v in mu], "sigma": [float(v) for v in sigma]},
            sort_keys=True,
        )
        + "\n"
    )


def load_gaussian_stats(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    d = json.loads(Path(path).read_text())
    return np.asarray(d["mu"], dtype=float), np.asarray(d["sigma"], dtype=float)
