"""L2-regularized logistic regression, trained by regularized maximum likelihood.

The objective is mean negative log-likelihood plus (lambda/2) * ||w||^2 with
an unpenalized intercept, minimized by full-batch Newton steps with
backtracking. Deterministic: no stochastic minibatching, so refits on the
same data reproduce the same coefficients regardless of row order.

Regularization strength is chosen by expanding-window temporal
cross-validation maximizing validation AUC, so every validation row is
strictly later than all of its training rows.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .errors import PingmatchError
from .evaluation import SingleClass, auc_arrays
from .features import FEATURE_NAMES

MODEL_SCHEMA_VERSION = 1

DEFAULT_LAMBDA_GRID = tuple(10.0**k for k in range(-4, 3))


class ModelError(PingmatchError):
    code = "model"


class SingleClassData(ModelError):
    code = "single_class_data"


class NonFiniteLoss(ModelError):
    """Loss or gradient went non-finite; signals a divergent step."""

    code = "non_finite_loss"


class FoldTooSmall(ModelError):
    code = "fold_too_small"


class SingleClassFold(ModelError):
    """Raised only when every cross-validation fold had to be skipped."""

    code = "single_class_fold"


class InvalidModel(ModelError):
    code = "invalid_model"


class VersionMismatch(ModelError):
    code = "version_mismatch"


class FeatureOrderMismatch(ModelError):
    code = "feature_order_mismatch"


@dataclass
class TrainConfig:
    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    cv_folds: int = 5
    max_iterations: int = 100
    convergence_tolerance: float = 1e-8
    seed: int = 0

    def validate(self) -> None:
        if not self.lambda_grid:
            raise InvalidModel("lambda_grid must be nonempty")
        if any(lam <= 0 for lam in self.lambda_grid):
            raise InvalidModel("lambda_grid values must be > 0")
        if self.cv_folds < 2:
            raise InvalidModel("cv_folds must be >= 2")
        if self.convergence_tolerance <= 0:
            raise InvalidModel("convergence_tolerance must be > 0")
        if self.max_iterations < 1:
            raise InvalidModel("max_iterations must be >= 1")


@dataclass
class ResponseModel:
    """Trained coefficients in canonical feature order."""

    coefficients: np.ndarray
    intercept: float
    lam: float
    feature_names: tuple[str, ...]
    trained_on: int
    converged: bool
    cv_fold_coefficients: list[np.ndarray] | None = None

    def validate(self) -> None:
        if len(self.coefficients) != len(self.feature_names):
            raise FeatureOrderMismatch(
                f"{len(self.coefficients)} coefficients for "
                f"{len(self.feature_names)} feature names"
            )
        _check_feature_order(self.feature_names)
        if self.lam < 0:
            raise InvalidModel(f"lambda must be >= 0, got {self.lam}")
        if not np.all(np.isfinite(self.coefficients)) or not math.isfinite(self.intercept):
            raise InvalidModel("non-finite model parameters")
        if self.cv_fold_coefficients is not None:
            for fold_coef in self.cv_fold_coefficients:
                if len(fold_coef) != len(self.coefficients):
                    raise FeatureOrderMismatch("fold coefficient length mismatch")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ResponseModel):
            return NotImplemented
        folds_a = self.cv_fold_coefficients
        folds_b = other.cv_fold_coefficients
        folds_equal = (folds_a is None) == (folds_b is None) and (
            folds_a is None
            or (
                len(folds_a) == len(folds_b)
                and all(np.array_equal(a, b) for a, b in zip(folds_a, folds_b))
            )
        )
        return (
            np.array_equal(self.coefficients, other.coefficients)
            and self.intercept == other.intercept
            and self.lam == other.lam
            and self.feature_names == other.feature_names
            and self.trained_on == other.trained_on
            and self.converged == other.converged
            and folds_equal
        )


def _check_feature_order(names: Sequence[str]) -> None:
    """Names must be an in-order subset of the canonical feature ordering."""
    position = {name: i for i, name in enumerate(FEATURE_NAMES)}
    last = -1
    for name in names:
        if name not in position:
            raise FeatureOrderMismatch(f"unknown feature {name!r}")
        if position[name] <= last:
            raise FeatureOrderMismatch(
                f"feature {name!r} out of canonical order {FEATURE_NAMES}"
            )
        last = position[name]


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def predict_probability(model: ResponseModel, x: np.ndarray) -> float:
    """P(yes) for one feature vector."""
    x = np.asarray(x, dtype=np.float64)
    return sigmoid(float(x @ model.coefficients) + model.intercept)


def predict_many(model: ResponseModel, x: np.ndarray) -> np.ndarray:
    """P(yes) for a feature matrix, one row per candidate."""
    return kernels.score_candidates(x, model.coefficients, model.intercept)


def loss_and_gradient(
    x: np.ndarray, y: np.ndarray, coef: np.ndarray, intercept: float, lam: float
) -> tuple[float, np.ndarray, float]:
    """Regularized mean NLL and its analytic gradient (coef part, intercept part)."""
    return kernels.logistic_loss_grad(x, y, coef, intercept, lam)


def _hessian(x: np.ndarray, coef: np.ndarray, intercept: float, lam: float) -> np.ndarray:
    """Full (k+1)x(k+1) Hessian of the regularized loss, intercept last."""
    n, k = x.shape
    p = kernels.score_candidates(x, coef, intercept)
    s = p * (1.0 - p)
    xs = x * s[:, None]
    h = np.empty((k + 1, k + 1))
    h[:k, :k] = x.T @ xs / n + lam * np.eye(k)
    h[:k, k] = xs.sum(axis=0) / n
    h[k, :k] = h[:k, k]
    h[k, k] = s.sum() / n
    return h


def fit(
    x: np.ndarray,
    y: np.ndarray,
    lam: float,
    config: TrainConfig | None = None,
    feature_names: Sequence[str] | None = None,
) -> ResponseModel:
    """Minimize the regularized loss over (coefficients, intercept).

    Newton steps with backtracking line search from the zero vector;
    convergence is declared when the gradient max-norm drops below the
    configured tolerance, otherwise the model is returned unconverged
    after max_iterations.
    """
    config = config or TrainConfig()
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, k = x.shape
    if n < 2:
        raise SingleClassData(f"need at least 2 rows, got {n}")
    n_pos = int((y == 1.0).sum())
    if n_pos == 0 or n_pos == n:
        raise SingleClassData("training data contains a single class")
    if lam < 0:
        raise InvalidModel(f"lambda must be >= 0, got {lam}")
    names = tuple(feature_names) if feature_names is not None else FEATURE_NAMES[:k]
    if len(names) != k:
        raise FeatureOrderMismatch(f"{k} feature columns for {len(names)} names")

    coef = np.zeros(k)
    intercept = 0.0
    converged = False
    loss, grad_coef, grad_b = loss_and_gradient(x, y, coef, intercept, lam)
    for _ in range(config.max_iterations):
        if not math.isfinite(loss):
            raise NonFiniteLoss(f"loss became {loss}")
        grad = np.append(grad_coef, grad_b)
        if np.max(np.abs(grad)) < config.convergence_tolerance:
            converged = True
            break
        hess = _hessian(x, coef, intercept, lam)
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            step = -grad  # singular curvature: fall back to steepest descent
        slope = float(grad @ step)
        if slope >= 0:
            step = -grad
            slope = float(grad @ step)
        # Armijo backtracking on the full step.
        t = 1.0
        accepted = False
        for _ in range(60):
            new_coef = coef + t * step[:k]
            new_intercept = intercept + t * step[k]
            new_loss, new_grad_coef, new_grad_b = loss_and_gradient(
                x, y, new_coef, new_intercept, lam
            )
            if math.isfinite(new_loss) and new_loss <= loss + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # Step size underflowed: we are at numerical precision.
            converged = bool(np.max(np.abs(grad)) < math.sqrt(config.convergence_tolerance))
            break
        coef, intercept = new_coef, new_intercept
        loss, grad_coef, grad_b = loss_and_gradient(x, y, coef, intercept, lam)
    else:
        grad = np.append(grad_coef, grad_b)
        converged = bool(np.max(np.abs(grad)) < config.convergence_tolerance)

    model = ResponseModel(
        coefficients=coef,
        intercept=float(intercept),
        lam=float(lam),
        feature_names=names,
        trained_on=n,
        converged=converged,
    )
    model.validate()
    return model


def fold_boundaries(n_rows: int, cv_folds: int) -> list[tuple[int, int, int]]:
    """Expanding-window folds as (train_end, val_start, val_end) index triples.

    Fold k trains on the first k/(cv_folds+1) fraction of rows and
    validates on the next 1/(cv_folds+1) slice.
    """
    bounds = [n_rows * i // (cv_folds + 1) for i in range(cv_folds + 2)]
    folds = []
    for k in range(1, cv_folds + 1):
        folds.append((bounds[k], bounds[k], bounds[k + 1]))
    return folds


@dataclass
class LambdaSelection:
    best_lambda: float
    fold_aucs: dict[float, list[float]]
    fold_models: dict[float, list[ResponseModel]] = field(repr=False, default_factory=dict)
    skipped_folds: list[tuple[int, str]] = field(default_factory=list)


def select_lambda(
    x: np.ndarray,
    y: np.ndarray,
    config: TrainConfig | None = None,
    feature_names: Sequence[str] | None = None,
) -> LambdaSelection:
    """Pick the grid lambda maximizing mean validation AUC over temporal folds.

    Rows must already be sorted by timestamp. Folds whose validation slice
    has a single class are skipped with a warning; it is an error only if
    every fold is skipped. Ties go to the larger lambda.
    """
    config = config or TrainConfig()
    config.validate()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[0]
    folds = fold_boundaries(n, config.cv_folds)
    if any(train_end == 0 or val_start == val_end for train_end, val_start, val_end in folds):
        raise FoldTooSmall(
            f"{n} rows cannot form {config.cv_folds} expanding-window folds"
        )

    usable_folds: list[int] = []
    skipped: list[tuple[int, str]] = []
    for i, (train_end, val_start, val_end) in enumerate(folds):
        val_y = y[val_start:val_end]
        train_y = y[:train_end]
        if len(set(val_y.tolist())) < 2:
            skipped.append((i, "validation slice has a single class"))
        elif len(set(train_y.tolist())) < 2:
            skipped.append((i, "training slice has a single class"))
        else:
            usable_folds.append(i)
    for i, reason in skipped:
        warnings.warn(f"skipping cv fold {i}: {reason}", stacklevel=2)
    if not usable_folds:
        raise SingleClassFold("every cross-validation fold was skipped")

    fold_aucs: dict[float, list[float]] = {}
    fold_models: dict[float, list[ResponseModel]] = {}
    best_lambda = None
    best_mean = -math.inf
    for lam in config.lambda_grid:
        aucs: list[float] = []
        models: list[ResponseModel] = []
        for i in usable_folds:
            train_end, val_start, val_end = folds[i]
            fold_model = fit(x[:train_end], y[:train_end], lam, config, feature_names)
            scores = predict_many(fold_model, x[val_start:val_end])
            aucs.append(auc_arrays(scores, y[val_start:val_end]))
            models.append(fold_model)
        fold_aucs[lam] = aucs
        fold_models[lam] = models
        mean_auc = sum(aucs) / len(aucs)
        if mean_auc > best_mean or (mean_auc == best_mean and lam > best_lambda):
            best_mean = mean_auc
            best_lambda = lam
    return LambdaSelection(
        best_lambda=best_lambda,
        fold_aucs=fold_aucs,
        fold_models=fold_models,
        skipped_folds=skipped,
    )


def train_model(
    x: np.ndarray,
    y: np.ndarray,
    config: TrainConfig | None = None,
    feature_names: Sequence[str] | None = None,
) -> tuple[ResponseModel, LambdaSelection]:
    """Full training pipeline: select lambda, refit on all rows, keep fold coefficients."""
    config = config or TrainConfig()
    selection = select_lambda(x, y, config, feature_names)
    model = fit(x, y, selection.best_lambda, config, feature_names)
    model.cv_fold_coefficients = [
        m.coefficients.copy() for m in selection.fold_models[selection.best_lambda]
    ]
    return model, selection


def odds_ratios(model: ResponseModel) -> list[tuple[str, float, float | None]]:
    """(feature_name, exp(coefficient), std of per-fold odds ratios) per feature.

    The spread column is present only when per-fold coefficients were kept
    at training time; it is the sample standard deviation across folds.
    """
    folds = model.cv_fold_coefficients
    out: list[tuple[str, float, float | None]] = []
    for i, name in enumerate(model.feature_names):
        ratio = math.exp(float(model.coefficients[i]))
        std = None
        if folds is not None and len(folds) >= 2:
            fold_ratios = np.exp([float(c[i]) for c in folds])
            std = float(np.std(fold_ratios, ddof=1))
        out.append((name, ratio, std))
    return out


def model_to_dict(model: ResponseModel) -> dict:
    model.validate()
    return {
        "schema_version": MODEL_SCHEMA_VERSION,
        "feature_names": list(model.feature_names),
        "coefficients": [float(c) for c in model.coefficients],
        "intercept": model.intercept,
        "lambda": model.lam,
        "trained_on": model.trained_on,
        "converged": model.converged,
        "cv_fold_coefficients": None
        if model.cv_fold_coefficients is None
        else [[float(c) for c in fold] for fold in model.cv_fold_coefficients],
    }


def model_from_dict(doc: dict) -> ResponseModel:
    version = doc.get("schema_version")
    if version != MODEL_SCHEMA_VERSION:
        raise VersionMismatch(
            f"model schema version {version!r}, expected {MODEL_SCHEMA_VERSION}"
        )
    try:
        folds = doc["cv_fold_coefficients"]
        model = ResponseModel(
            coefficients=np.asarray(doc["coefficients"], dtype=np.float64),
            intercept=float(doc["intercept"]),
            lam=float(doc["lambda"]),
            feature_names=tuple(doc["feature_names"]),
            trained_on=int(doc["trained_on"]),
            converged=bool(doc["converged"]),
            cv_fold_coefficients=None
            if folds is None
            else [np.asarray(f, dtype=np.float64) for f in folds],
        )
    except KeyError as exc:
        raise InvalidModel(f"model document missing field {exc}") from exc
    model.validate()
    return model


def save_model(model: ResponseModel, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(model_to_dict(model), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_model(path: str | Path) -> ResponseModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidModel(f"model file is not valid JSON: {exc}") from exc
    return model_from_dict(doc)
