"""Metrics and the cross-validation harness producing per-trait score tables.

RMSE and R^2 follow the usual definitions; Spearman is the Pearson
correlation of average-ranked values. Cross-validation refits any
normalization statistics on the training rows of each fold so no
validation information leaks into the transform.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import apply_gaussian_stats, gaussian_stats
from .regression import fit_bayes_ridge, fit_pcr, predict_means

INPUT_KINDS = ("position", "position_n", "velocity", "velocity_n")
INPUT_KIND_LABELS = {
    "position": "Position",
    "position_n": "Position(N)",
    "velocity": "Velocity",
    "velocity_n": "Velocity(N)",
}
MODEL_KINDS = ("pcr", "bayes_ridge")
MODEL_LABELS = {"pcr": "PCR", "bayes_ridge": "Bayesian Ridge"}

# Scores reported for the original study's dataset (private; not
# reproducible here). Rendered beside computed scores for comparison only
# and never asserted anywhere. Keyed trait -> (input kind, model) ->
# (rmse, r2); the personality traits were only reported for the Bayesian
# model.
REFERENCE_RESULTS = {
    "EQ": {
        ("position", "pcr"): (3.071, 0.708),
        ("position", "bayes_ridge"): (2.722, 0.771),
        ("position_n", "pcr"): (3.201, 0.684),
        ("position_n", "bayes_ridge"): (2.733, 0.765),
        ("velocity", "pcr"): (4.938, 0.249),
        ("velocity", "bayes_ridge"): (4.343, 0.423),
        ("velocity_n", "pcr"): (4.583, 0.353),
        ("velocity_n", "bayes_ridge"): (4.015, 0.503),
    },
    "SQ": {
        ("position", "pcr"): (2.398, 0.781),
        ("position", "bayes_ridge"): (2.161, 0.867),
        ("position_n", "pcr"): (2.363, 0.786),
        ("position_n", "bayes_ridge"): (2.502, 0.838),
        ("velocity", "pcr"): (4.448, 0.252),
        ("velocity", "bayes_ridge"): (3.832, 0.469),
        ("velocity_n", "pcr"): (4.211, 0.329),
        ("velocity_n", "bayes_ridge"): (3.714, 0.552),
    },
    "O": {
        ("position", "bayes_ridge"): (0.197, 0.776),
        ("position_n", "bayes_ridge"): (0.227, 0.740),
        ("velocity", "bayes_ridge"): (0.332, 0.464),
        ("velocity_n", "bayes_ridge"): (0.304, 0.527),
    },
    "C": {
        ("position", "bayes_ridge"): (0.317, 0.760),
        ("position_n", "bayes_ridge"): (0.332, 0.690),
        ("velocity", "bayes_ridge"): (0.487, 0.415),
        ("velocity_n", "bayes_ridge"): (0.426, 0.543),
    },
    "E": {
        ("position", "bayes_ridge"): (0.384, 0.743),
        ("position_n", "bayes_ridge"): (0.414, 0.756),
        ("velocity", "bayes_ridge"): (0.556, 0.523),
        ("velocity_n", "bayes_ridge"): (0.501, 0.623),
    },
    "A": {
        ("position", "bayes_ridge"): (0.252, 0.776),
        ("position_n", "bayes_ridge"): (0.273, 0.716),
        ("velocity", "bayes_ridge"): (0.440, 0.335),
        ("velocity_n", "bayes_ridge"): (0.408, 0.442),
    },
    "N": {
        ("position", "bayes_ridge"): (0.384, 0.758),
        ("position_n", "bayes_ridge"): (0.390, 0.739),
        ("velocity", "bayes_ridge"): (0.557, 0.483),
        ("velocity_n", "bayes_ridge"): (0.461, 0.654),
    },
}

# Spearman correlations among the personality targets reported for the
# original dataset; comparison only.
TRAIT_CORRELATION_REFERENCE = {
    ("C", "O"): -0.093,
    ("E", "O"): -0.003,
    ("E", "C"): 0.128,
    ("A", "O"): 0.021,
    ("A", "C"): 0.341,
    ("A", "E"): 0.358,
    ("N", "O"): 0.217,
    ("N", "C"): -0.289,
    ("N", "E"): -0.225,
    ("N", "A"): -0.292,
}


def rmse(y: np.ndarray, y_hat: np.ndarray) -> float:
    """Root mean squared error, in target units."""
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.shape != y_hat.shape:
        raise ValueError(f"length mismatch: {y.shape[0]} vs {y_hat.shape[0]}")
    if y.size == 0:
        raise ValueError("rmse of empty vectors is undefined")
    d = y - y_hat
    return float(np.sqrt((d @ d) / y.size))


def r2(y: np.ndarray, y_hat: np.ndarray) -> float:
    """Coefficient of determination; 1 is perfect, may go negative."""
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.shape != y_hat.shape:
        raise ValueError(f"length mismatch: {y.shape[0]} vs {y_hat.shape[0]}")
    if y.size < 2:
        raise ValueError("r2 needs at least 2 samples")
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst <= 0:
        raise ValueError("r2 undefined for zero-variance targets")
    sse = float(np.sum((y - y_hat) ** 2))
    return 1.0 - sse / sst


def _average_ranks(v: np.ndarray) -> np.ndarray:
    # ties get the average of the rank positions they span
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size, dtype=float)
    sv = v[order]
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(a: np.ndarray, b: np.ndarray) -> float:
    """Rank correlation in [-1, 1]; ties receive average ranks."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    if a.size < 3:
        raise ValueError("spearman needs at least 3 samples")
    ra = _average_ranks(a) - (a.size + 1) / 2.0
    rb = _average_ranks(b) - (b.size + 1) / 2.0
    na = float(ra @ ra)
    nb = float(rb @ rb)
    if na <= 0 or nb <= 0:
        raise ValueError("spearman undefined when one input has zero rank variance")
    return float((ra @ rb) / np.sqrt(na * nb))


@dataclass(frozen=True)
class FoldPlan:
    """Assignment of every sample to exactly one of n_folds folds."""

    n_folds: int
    assignments: np.ndarray
    seed: int
    grouping: str  # "none" | "participant"

    def __post_init__(self):
        a = np.asarray(self.assignments, dtype=int)
        if a.min() < 0 or a.max() >= self.n_folds:
            raise ValueError("fold assignment out of range")
        object.__setattr__(self, "assignments", a)

    def fold_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)


def make_fold_plan(
    n_samples: int,
    n_folds: int = 5,
    seed: int = 0,
    groups: tuple[str, ...] | None = None,
) -> FoldPlan:
    """Seeded uniform shuffle followed by round-robin fold assignment.

    With ``groups``, whole groups (participants) are shuffled and dealt to
    folds, so no group ever straddles a train/validation boundary.
    """
    if n_folds < 2:
        raise ValueError("need at least 2 folds")
    rng = np.random.default_rng(seed)
    assignments = np.empty(n_samples, dtype=int)
    if groups is None:
        if n_samples < n_folds:
            raise ValueError(f"{n_samples} samples cannot fill {n_folds} folds")
        perm = rng.permutation(n_samples)
        assignments[perm] = np.arange(n_samples) % n_folds
        return FoldPlan(n_folds, assignments, seed, "none")

    if len(groups) != n_samples:
        raise ValueError("groups length must equal n_samples")
    uniq = list(dict.fromkeys(groups))
    if len(uniq) < n_folds:
        raise ValueError(f"{len(uniq)} groups cannot fill {n_folds} folds")
    order = rng.permutation(len(uniq))
    fold_of_group = {uniq[g]: pos % n_folds for pos, g in enumerate(order)}
    for i, g in enumerate(groups):
        assignments[i] = fold_of_group[g]
    return FoldPlan(n_folds, assignments, seed, "participant")


def leaked_groups(plan: FoldPlan, groups: tuple[str, ...]) -> int:
    """Number of groups whose samples are split across different folds."""
    seen: dict[str, int] = {}
    leaked = set()
    for g, f in zip(groups, plan.assignments):
        if g in seen and seen[g] != int(f):
            leaked.add(g)
        seen.setdefault(g, int(f))
    return len(leaked)


@dataclass(frozen=True)
class ModelSpec:
    """Which regressor to fit inside the harness."""

    kind: str  # "pcr" | "bayes_ridge"
    k: int | None = None
    tol: float = 1e-3
    max_iter: int = 300

    def fit(self, X: np.ndarray, y: np.ndarray):
        if self.kind == "pcr":
            if self.k is None:
                raise ValueError("PCR needs a component count k")
            return fit_pcr(X, y, self.k)
        if self.kind == "bayes_ridge":
            return fit_bayes_ridge(X, y, tol=self.tol, max_iter=self.max_iter)
        raise ValueError(f"unknown model kind {self.kind!r}")


@dataclass(frozen=True)
class CvResult:
    fold_rmse: tuple[float, ...]
    fold_r2: tuple[float, ...]
    mean_rmse: float
    mean_r2: float
    pooled_rmse: float | None = None
    pooled_r2: float | None = None


def cross_validate(
    X: np.ndarray,
    y: np.ndarray,
    spec: ModelSpec,
    plan: FoldPlan,
    normalize: bool = False,
    pooled: bool = False,
) -> CvResult:
    """Fit on out-of-fold rows, score on in-fold rows, for every fold.

    When ``normalize`` is set, Gaussian normalization statistics are
    computed on each fold's training rows only and applied to both sides.
    ``pooled`` additionally scores the concatenated out-of-sample
    predictions as a single set.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if plan.assignments.shape[0] != X.shape[0]:
        raise ValueError("fold plan does not cover the sample count")
    fold_rmse: list[float] = []
    fold_r2: list[float] = []
    all_pred = np.empty_like(y)
    for f in range(plan.n_folds):
        val = plan.assignments == f
        if val.sum() < 2:
            raise ValueError(f"fold {f} has fewer than 2 validation samples")
        train = ~val
        xtr, xva = X[train], X[val]
        if normalize:
            mu, sd = gaussian_stats(xtr)
            xtr = apply_gaussian_stats(xtr, mu, sd)
            xva = apply_gaussian_stats(xva, mu, sd)
        model = spec.fit(xtr, y[train])
        pred = predict_means(model, xva)
        all_pred[val] = pred
        fold_rmse.append(rmse(y[val], pred))
        fold_r2.append(r2(y[val], pred))
    return CvResult(
        fold_rmse=tuple(fold_rmse),
        fold_r2=tuple(fold_r2),
        mean_rmse=float(np.mean(fold_rmse)),
        mean_r2=float(np.mean(fold_r2)),
        pooled_rmse=rmse(y, all_pred) if pooled else None,
        pooled_r2=r2(y, all_pred) if pooled else None,
    )


@dataclass(frozen=True)
class ScoreRow:
    input_kind: str
    model: str
    trait: str
    result: CvResult


@dataclass(frozen=True)
class ScoreTable:
    """Cross-validated scores for every requested (input, model, trait)."""

    rows: tuple[ScoreRow, ...]
    n_folds: int
    seed: int
    grouping: str

    def lookup(self, input_kind: str, model: str, trait: str) -> CvResult | None:
        for row in self.rows:
            if (row.input_kind, row.model, row.trait) == (input_kind, model, trait):
                return row.result
        return None

    @property
    def traits(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(r.trait for r in self.rows))


def _fmt(v: float | None) -> str:
    return "" if v is None else f"{v:.17g}"


def score_table_csv(table: ScoreTable) -> str:
    n = table.n_folds
    header = (
        ["input", "model", "trait", "mean_rmse", "mean_r2"]
        + [f"rmse_fold{i + 1}" for i in range(n)]
        + [f"r2_fold{i + 1}" for i in range(n)]
    )
    lines = [",".join(header)]
    for row in table.rows:
        cells = [row.input_kind, row.model, row.trait,
                 _fmt(row.result.mean_rmse), _fmt(row.result.mean_r2)]
        cells += [_fmt(v) for v in row.result.fold_rmse]
        cells += [_fmt(v) for v in row.result.fold_r2]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def score_table_json(table: ScoreTable) -> str:
    doc = {
        "n_folds": table.n_folds,
        "seed": table.seed,
        "grouping": table.grouping,
        "rows": [
            {
                "input": row.input_kind,
                "model": row.model,
                "trait": row.trait,
                "mean_rmse": row.result.mean_rmse,
                "mean_r2": row.result.mean_r2,
                "fold_rmse": list(row.result.fold_rmse),
                "fold_r2": list(row.result.fold_r2),
                "pooled_rmse": row.result.pooled_rmse,
                "pooled_r2": row.result.pooled_r2,
            }
            for row in table.rows
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def score_table_text(table: ScoreTable, reference: dict = REFERENCE_RESULTS) -> str:
    """Readable per-trait blocks: input rows, model columns.

    Reference scores from the original (private) dataset are shown in
    parentheses next to each cell when available; they are context, not a
    target the run is checked against.
    """
    out: list[str] = []
    for trait in table.traits:
        out.append(f"=== Trait {trait} "
                   f"({table.n_folds}-fold CV, seed {table.seed}, grouping {table.grouping}) ===")
        ref_t = reference.get(trait, {})
        header = f"{'Input':<13}"
        models = [m for m in MODEL_KINDS
                  if any(r.model == m and r.trait == trait for r in table.rows)]
        for m in models:
            header += f"{MODEL_LABELS[m] + ' RMSE':>24}{MODEL_LABELS[m] + ' R2':>24}"
        out.append(header)
        for kind in INPUT_KINDS:
            if not any(r.input_kind == kind and r.trait == trait for r in table.rows):
                continue
            line = f"{INPUT_KIND_LABELS[kind]:<13}"
            for m in models:
                res = table.lookup(kind, m, trait)
                ref = ref_t.get((kind, m))
                if res is None:
                    line += f"{'-':>24}{'-':>24}"
                    continue
                rm = f"{res.mean_rmse:.3f}"
                r2v = f"{res.mean_r2:.3f}"
                if ref is not None:
                    rm += f" (ref {ref[0]:.3f})"
                    r2v += f" (ref {ref[1]:.3f})"
                line += f"{rm:>24}{r2v:>24}"
            out.append(line)
        out.append("")
    out.append("Reference values were reported for the original dataset, which is")
    out.append("private; they are shown for side-by-side comparison only.")
    return "\n".join(out) + "\n"


def write_score_table(table: ScoreTable, out_dir: str | Path, stem: str = "scores") -> dict:
    """Emit CSV, JSON and text renderings; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "csv": out_dir / f"{stem}.csv",
        "json": out_dir / f"{stem}.json",
        "txt": out_dir / f"{stem}.txt",
    }
    paths["csv"].write_text(score_table_csv(table))
    paths["json"].write_text(score_table_json(table))
    paths["txt"].write_text(score_table_text(table))
    return paths
