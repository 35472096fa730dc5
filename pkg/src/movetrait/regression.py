"""Trait regressors: principal component regression and Bayesian ridge.

Both map one feature matrix to one scalar trait. PCR fits ordinary least
squares on the top-k PCA scores; the Bayesian model places a zero-mean
isotropic Gaussian prior on the weights and estimates the noise precision
(alpha) and weight-prior precision (lambda) by iterative evidence
maximization, so its predictions carry a variance.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .features import FeatureMatrix

TRAIT_NAMES = ("O", "C", "E", "A", "N", "EQ", "SQ")
PERSONALITY_TRAITS = ("O", "C", "E", "A", "N")

# PCR component counts that worked best for each input kind; overridable.
PCR_DEFAULT_COMPONENTS = {"position": 243, "velocity": 137}

# Clamp range for evidence-maximization hyperparameters; guards degenerate
# inputs (constant targets, exactly noiseless fits) without affecting
# well-posed problems.
_HYPER_MIN = 1e-12
_HYPER_MAX = 1e12


def _as_matrix(X) -> np.ndarray:
    if isinstance(X, FeatureMatrix):
        X = X.values
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be 2-D (samples x features)")
    return X


@dataclass(frozen=True)
class PcaBasis:
    """Centered orthonormal row basis with non-increasing explained variance."""

    mean: np.ndarray
    components: np.ndarray          # k x d, rows orthonormal
    explained_variance: np.ndarray  # length k

    @property
    def k(self) -> int:
        return self.components.shape[0]

    def project(self, X: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(X) - self.mean) @ self.components.T


@dataclass(frozen=True)
class PcrModel:
    basis: PcaBasis
    weights: np.ndarray   # length k
    intercept: float

    @property
    def n_features(self) -> int:
        return self.basis.components.shape[1]


@dataclass(frozen=True)
class BayesRidgeModel:
    """Posterior mean/precisions of the Bayesian linear model.

    ``components``/``eigenvalues`` factor the centered design so that the
    full d x d posterior covariance and per-point predictive variances can
    be formed on demand without storing the dense matrix.
    """

    weights: np.ndarray          # posterior mean, length d
    alpha: float                 # noise precision
    lambda_: float               # weight-prior precision
    intercept: float
    x_mean: np.ndarray
    converged: bool
    iterations: int
    components: np.ndarray       # r x d right singular vectors of centered X
    eigenvalues: np.ndarray      # length r, eigenvalues of Xc^T Xc

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    @property
    def posterior_covariance(self) -> np.ndarray:
        """Dense (alpha X^T X + lambda I)^-1, symmetric positive definite."""
        inv_span = 1.0 / (self.alpha * self.eigenvalues + self.lambda_)
        delta = inv_span - 1.0 / self.lambda_
        cov = (self.components.T * delta) @ self.components
        cov[np.diag_indices_from(cov)] += 1.0 / self.lambda_
        return (cov + cov.T) / 2.0

    def predictive_variance(self, x_centered: np.ndarray) -> float:
        t = self.components @ x_centered
        inv_span = 1.0 / (self.alpha * self.eigenvalues + self.lambda_)
        residual_sq = max(float(x_centered @ x_centered - t @ t), 0.0)
        return 1.0 / self.alpha + float((t * t) @ inv_span) + residual_sq / self.lambda_


@dataclass(frozen=True)
class Prediction:
    mean: float
    std: float

    def __post_init__(self):
        if self.std < 0:
            raise ValueError("prediction std cannot be negative")


def fit_pca(X, k: int) -> PcaBasis:
    """Centered SVD basis of the top-k principal directions.

    Components are ordered by non-increasing singular value; each row is
    sign-fixed so its largest-magnitude entry is positive.
    """
    X = _as_matrix(X)
    n, d = X.shape
    if n < 2:
        raise ValueError("PCA needs at least 2 samples")
    if not 1 <= k <= min(n - 1, d):
        raise ValueError(f"k out of range: {k} not in [1, {min(n - 1, d)}]")
    mean = X.mean(axis=0)
    _, s, vh = np.linalg.svd(X - mean, full_matrices=False)
    components = vh[:k].copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PcaBasis(
        mean=mean,
        components=components,
        explained_variance=s[:k] ** 2 / n,
    )


def fit_pcr(X, y: np.ndarray, k: int) -> PcrModel:
    """Least squares with intercept on the top-k PCA scores.

    Solved by orthogonal decomposition (lstsq), so the fit is deterministic
    for identical inputs.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != X.shape[0]:
        raise ValueError("y length must match the number of rows")
    basis = fit_pca(X, k)
    scores = basis.project(X)
    spread = np.max(np.abs(scores), axis=0)
    if np.any(spread <= np.finfo(float).eps * max(X.shape) * max(spread.max(), 1.0)):
        raise ValueError("degenerate principal scores: a selected component has zero variance")
    design = np.column_stack([np.ones(X.shape[0]), scores])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return PcrModel(basis=basis, weights=coef[1:], intercept=float(coef[0]))


def fit_bayes_ridge(
    X,
    y: np.ndarray,
    tol: float = 1e-3,
    max_iter: int = 300,
    alpha_init: float | None = None,
    lambda_init: float | None = None,
    optimize: bool = True,
) -> BayesRidgeModel:
    """Evidence-maximization fit of the Bayesian linear model.

    Alternates the posterior given (alpha, lambda),

        Sigma = (alpha X^T X + lambda I)^-1,  beta = alpha Sigma X^T y,

    with hyperparameter updates through the effective degrees of freedom
    gamma = sum_i e_i / (e_i + lambda/alpha) over the eigenvalues e_i of
    X^T X: lambda <- gamma / ||beta||^2 and alpha <- (n - gamma) / rss.
    Stops when max |delta beta| < tol, or reports converged=False after
    max_iter. Columns and targets are centered internally; the intercept is
    restored on the model. ``optimize=False`` performs a single posterior
    evaluation at the given fixed hyperparameters.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    n, d = X.shape
    if y.shape[0] != n:
        raise ValueError("y length must match the number of rows")
    if n < 2:
        raise ValueError("need at least 2 samples")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("non-finite values in training data")

    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    xc = X - x_mean
    yc = y - y_mean

    u, s, vh = np.linalg.svd(xc, full_matrices=False)
    eig = s**2
    uty = u.T @ yc

    var_y = float(yc @ yc) / n
    alpha = float(alpha_init) if alpha_init is not None else 1.0 / max(var_y, _HYPER_MIN)
    alpha = float(np.clip(alpha, _HYPER_MIN, _HYPER_MAX))
    lam = float(lambda_init) if lambda_init is not None else 1.0
    lam = float(np.clip(lam, _HYPER_MIN, _HYPER_MAX))

    def posterior_mean_coords(ratio: float) -> np.ndarray:
        return s * uty / (eig + ratio)

    beta = vh.T @ posterior_mean_coords(lam / alpha)
    converged = not optimize
    iterations = 1
    remaining = range(2, max_iter + 1) if optimize else range(0)
    for it in remaining:
        coords = posterior_mean_coords(lam / alpha)
        gamma = float(np.sum(eig / (eig + lam / alpha)))
        rss = float(np.sum((uty - s * coords) ** 2)) + float(yc @ yc - uty @ uty)
        bnorm = float(coords @ coords)
        if bnorm > 0:
            lam = float(np.clip(gamma / bnorm, _HYPER_MIN, _HYPER_MAX))
        if rss > 0:
            alpha = float(np.clip((n - gamma) / rss, _HYPER_MIN, _HYPER_MAX))
        new_beta = vh.T @ posterior_mean_coords(lam / alpha)
        if not np.isfinite(new_beta).all():
            raise FloatingPointError("non-finite intermediate in evidence maximization")
        iterations = it
        if float(np.max(np.abs(new_beta - beta))) < tol:
            beta = new_beta
            converged = True
            break
        beta = new_beta

    return BayesRidgeModel(
        weights=beta,
        alpha=alpha,
        lambda_=lam,
        intercept=y_mean,
        x_mean=x_mean,
        converged=converged,
        iterations=iterations,
        components=vh,
        eigenvalues=eig,
    )


def predict(model, x: np.ndarray) -> Prediction:
    """Point prediction; the Bayesian model also reports a predictive std."""
    x = np.asarray(x, dtype=float).ravel()
    if isinstance(model, PcrModel):
        if x.shape[0] != model.n_features:
            raise ValueError(f"expected {model.n_features} features, got {x.shape[0]}")
        scores = model.basis.project(x)[0]
        return Prediction(mean=float(model.intercept + model.weights @ scores), std=0.0)
    if isinstance(model, BayesRidgeModel):
        if x.shape[0] != model.n_features:
            raise ValueError(f"expected {model.n_features} features, got {x.shape[0]}")
        xc = x - model.x_mean
        mean = model.intercept + float(model.weights @ xc)
        return Prediction(mean=mean, std=float(np.sqrt(model.predictive_variance(xc))))
    raise TypeError(f"unknown model type {type(model).__name__}")


def predict_means(model, X) -> np.ndarray:
    """Vectorized prediction means for a batch of rows."""
    X = _as_matrix(X)
    if isinstance(model, PcrModel):
        return model.basis.project(X) @ model.weights + model.intercept
    if isinstance(model, BayesRidgeModel):
        return (X - model.x_mean) @ model.weights + model.intercept
    raise TypeError(f"unknown model type {type(model).__name__}")


class DatasetMode(str, Enum):
    """Whether each take is a sample or takes are averaged per participant."""

    PER_STIMULUS = "per_stimulus"
    PARTICIPANT_MEAN = "participant_mean"


@dataclass(frozen=True)
class Dataset:
    """Design matrix, targets, and the participant of each sample row."""

    X: np.ndarray
    y: np.ndarray
    participants: tuple[str, ...]


def build_dataset(
    features: FeatureMatrix,
    trait_table: dict,
    trait: str,
    mode: DatasetMode | str = DatasetMode.PER_STIMULUS,
) -> Dataset:
    """Pair feature rows with one trait's targets.

    PER_STIMULUS keeps one sample per take (the participant's target is
    repeated); PARTICIPANT_MEAN averages each participant's feature rows
    into a single sample. Raises if any participant lacks a target.
    """
    mode = DatasetMode(mode)
    pids = [meta.participant_id for meta in features.rows]
    for pid in pids:
        if pid not in trait_table or trait not in trait_table[pid]:
            raise ValueError(f"no '{trait}' target for participant '{pid}'")

    if mode is DatasetMode.PER_STIMULUS:
        y = np.array([trait_table[pid][trait] for pid in pids], dtype=float)
        return Dataset(X=features.values.copy(), y=y, participants=tuple(pids))

    order = list(dict.fromkeys(pids))  # first-appearance order
    X = np.stack([
        features.values[[i for i, p in enumerate(pids) if p == pid]].mean(axis=0)
        for pid in order
    ])
    y = np.array([trait_table[pid][trait] for pid in order], dtype=float)
    return Dataset(X=X, y=y, participants=tuple(order))


def load_trait_table(path: str | Path) -> dict:
    """Read a trait CSV (participant_id plus one column per trait)."""
    table: dict[str, dict[str, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "participant_id" not in reader.fieldnames:
            raise ValueError(f"{path}: trait table needs a participant_id column")
        for row in reader:
            pid = row["participant_id"]
            table[pid] = {
                k: float(v) for k, v in row.items() if k != "participant_id"
            }
    return table


def save_model(model, path: str | Path, provenance: dict | None = None) -> None:
    """Serialize a model to JSON (basis/factor arrays stored row-major)."""
    if isinstance(model, PcrModel):
        doc = {
            "kind": "pcr",
            "intercept": model.intercept,
            "weights": model.weights.tolist(),
            "basis": {
                "mean": model.basis.mean.tolist(),
                "components": model.basis.components.tolist(),
                "explained_variance": model.basis.explained_variance.tolist(),
            },
        }
    elif isinstance(model, BayesRidgeModel):
        doc = {
            "kind": "bayes_ridge",
            "alpha": model.alpha,
            "lambda": model.lambda_,
            "intercept": model.intercept,
            "converged": model.converged,
            "iterations": model.iterations,
            "weights": model.weights.tolist(),
            "x_mean": model.x_mean.tolist(),
            "factor": {
                "eigenvalues": model.eigenvalues.tolist(),
                "components": model.components.tolist(),
            },
        }
    else:
        raise TypeError(f"unknown model type {type(model).__name__}")
    if provenance is not None:
        doc["provenance"] = provenance
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_model(path: str | Path):
    doc = json.loads(Path(path).read_text())
    kind = doc.get("kind")
    if kind == "pcr":
        return PcrModel(
            basis=PcaBasis(
                mean=np.asarray(doc["basis"]["mean"], dtype=float),
                components=np.asarray(doc["basis"]["components"], dtype=float),
                explained_variance=np.asarray(doc["basis"]["explained_variance"], dtype=float),
            ),
            weights=np.asarray(doc["weights"], dtype=float),
            intercept=float(doc["intercept"]),
        )
    if kind == "bayes_ridge":
        return BayesRidgeModel(
            weights=np.asarray(doc["weights"], dtype=float),
            alpha=float(doc["alpha"]),
            lambda_=float(doc["lambda"]),
            intercept=float(doc["intercept"]),
            x_mean=np.asarray(doc["x_mean"], dtype=float),
            converged=bool(doc["converged"]),
            iterations=int(doc["iterations"]),
            components=np.asarray(doc["factor"]["components"], dtype=float),
            eigenvalues=np.asarray(doc["factor"]["eigenvalues"], dtype=float),
        )
    raise ValueError(f"{path}: unknown model kind {kind!r}")
