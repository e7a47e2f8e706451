"""Linear PCA and kernel PCA models, projection and JSON persistence."""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset, Scaler
from .errors import RankError, ValidationError
from .kernels import (KernelConfig, TrainStats, center_test, center_train, kernel_values)
from .linalg import canonical_signs, eigh_sym

RANK_TOL = 1e-10
DEFAULT_H = 4


def numerical_rank(eigenvalues: np.ndarray, tol: float = RANK_TOL) -> int:
    if eigenvalues.size == 0 or eigenvalues[0] <= 0:
        return 0
    return int(np.sum(eigenvalues > tol * eigenvalues[0]))


def _matrix_of(data) -> tuple[np.ndarray, Scaler | None]:
    if isinstance(data, Dataset):
        return data.X, data.scaler
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError("expected a 2-D sample matrix")
    return X, None


@dataclass(frozen=True, eq=False)
class PcaModel:
    loadings: np.ndarray          # d x H, orthonormal columns
    eigenvalues: np.ndarray       # H covariance eigenvalues, nonincreasing
    center: np.ndarray            # column means of the training matrix
    X_train: np.ndarray
    total_variance: float         # trace of the training covariance
    scaler: Scaler | None = None
    scores: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "scores", self.project(self.X_train))

    @property
    def H(self) -> int:
        return self.loadings.shape[1]

    @property
    def n(self) -> int:
        return self.X_train.shape[0]

    @property
    def d(self) -> int:
        return self.X_train.shape[1]

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        return self.eigenvalues / self.total_variance

    def project(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.loadings.shape[0]:
            raise ValidationError(
                f"expected {self.loadings.shape[0]} variables, got array of shape {X.shape}")
        return (X - self.center) @ self.loadings

    def residuals(self, X) -> np.ndarray:
        Xc = np.asarray(X, dtype=np.float64) - self.center
        return Xc - (Xc @ self.loadings) @ self.loadings.T


def pca_fit(data: Dataset | np.ndarray, H: int = DEFAULT_H) -> PcaModel:
    """Principal components of the sample covariance of (standardized) data."""
    X, scaler = _matrix_of(data)
    n, d = X.shape
    if not 1 <= H <= min(n - 1, d):
        raise ValidationError(f"H must lie in 1..{min(n - 1, d)}, got {H}")
    center = X.mean(axis=0)
    Xc = X - center
    cov = (Xc.T @ Xc) / (n - 1)
    w, V = eigh_sym(cov)
    rank = numerical_rank(w)
    if H > rank:
        raise RankError(H, rank)
    total = float(np.sum(w[w > 0]))
    return PcaModel(V[:, :H].copy(), w[:H].copy(), center, X, total, scaler)


@dataclass(frozen=True, eq=False)
class KpcaModel:
    """Kernel PCA fitted on training data.

    ``alpha`` holds the expansion coefficients of unit-norm feature-space
    eigenvectors, so the training scores are ``K~ alpha`` and satisfy
    ``T'T = diag(n * eigenvalues)``.
    """

    X_train: np.ndarray
    config: KernelConfig
    train_stats: TrainStats
    alpha: np.ndarray             # n x H
    eigenvalues: np.ndarray       # H feature-space covariance eigenvalues
    total_variance: float         # sum of all positive eigenvalues
    rank: int
    scaler: Scaler | None = None
    K_centered: np.ndarray | None = None
    scores: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.K_centered is None:
            K = kernel_values(self.X_train, self.X_train, self.config)
            object.__setattr__(self, "K_centered", center_train(K).K)
        object.__setattr__(self, "scores", self.K_centered @ self.alpha)

    @property
    def H(self) -> int:
        return self.alpha.shape[1]

    @property
    def n(self) -> int:
        return self.X_train.shape[0]

    @property
    def d(self) -> int:
        return self.X_train.shape[1]

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        return self.eigenvalues / self.total_variance

    def truncated(self, H: int) -> "KpcaModel":
        """Same model keeping only the first ``H`` components (``H`` may be 0)."""
        if not 0 <= H <= self.H:
            raise ValidationError(f"cannot truncate {self.H} components to {H}")
        return KpcaModel(self.X_train, self.config, self.train_stats,
                         self.alpha[:, :H].copy(), self.eigenvalues[:H].copy(),
                         self.total_variance, self.rank, self.scaler, self.K_centered)


def kpca_fit(data: Dataset | np.ndarray, cfg: KernelConfig, H: int = DEFAULT_H) -> KpcaModel:
    X, scaler = _matrix_of(data)
    n = X.shape[0]
    if not 1 <= H <= n - 1:
        raise ValidationError(f"H must lie in 1..{n - 1}, got {H}")
    cfg.check_dimension(X.shape[1])
    km = center_train(kernel_values(X, X, cfg))
    mu, U = eigh_sym(km.K)
    rank = numerical_rank(mu)
    if H > rank:
        raise RankError(H, rank)
    alpha = U[:, :H] / np.sqrt(mu[:H])
    total = float(np.sum(mu[mu > 0])) / n
    return KpcaModel(X, cfg, km.train_stats, alpha, mu[:H] / n, total, rank, scaler, km.K)


def kpca_project(model: KpcaModel, X_new) -> np.ndarray:
    X_new = np.asarray(X_new, dtype=np.float64)
    if X_new.ndim != 2 or X_new.shape[1] != model.d:
        raise ValidationError(f"expected {model.d} variables, got array of shape {X_new.shape}")
    Kt = center_test(kernel_values(X_new, model.X_train, model.config), model.train_stats)
    return Kt.K @ model.alpha


def explained_variance(model: PcaModel | KpcaModel) -> np.ndarray:
    return model.explained_variance_ratio


def align_signs(T: np.ndarray) -> np.ndarray:
    """Score columns in canonical sign; handy for comparing decompositions."""
    return canonical_signs(np.asarray(T, dtype=np.float64))


# Persistence -------------------------------------------------------------------

def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"dtype": "<f8", "shape": list(a.shape),
            "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode_array(doc: dict) -> np.ndarray:
    if doc.get("dtype") != "<f8":
        raise ValidationError(f"unsupported array dtype {doc.get('dtype')!r}")
    raw = base64.b64decode(doc["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(doc["shape"]).astype(np.float64)


def model_to_dict(model: PcaModel | KpcaModel) -> dict:
    doc: dict = {"format": "kmspc-model", "version": 1}
    if isinstance(model, KpcaModel):
        doc.update({
            "kind": "kpca",
            "kernel": model.config.to_dict(),
            "H": model.H,
            "rank": model.rank,
            "eigenvalues": model.eigenvalues.tolist(),
            "total_variance": model.total_variance,
            "alpha": model.alpha.ravel(order="C").tolist(),
            "train_stats": {"row_means": model.train_stats.row_means.tolist(),
                            "grand_mean": model.train_stats.grand_mean},
        })
    else:
        doc.update({
            "kind": "pca",
            "H": model.H,
            "eigenvalues": model.eigenvalues.tolist(),
            "total_variance": model.total_variance,
            "loadings": model.loadings.ravel(order="C").tolist(),
            "center": model.center.tolist(),
        })
    doc["scaler"] = model.scaler.to_dict() if model.scaler is not None else None
    doc["X_train"] = _encode_array(model.X_train)
    return doc


def model_from_dict(doc: dict) -> PcaModel | KpcaModel:
    if doc.get("format") != "kmspc-model":
        raise ValidationError("not a kmspc model document")
    X = _decode_array(doc["X_train"])
    n, d = X.shape
    H = int(doc["H"])
    scaler = Scaler.from_dict(doc["scaler"]) if doc.get("scaler") else None
    if doc["kind"] == "kpca":
        ts = doc["train_stats"]
        stats = TrainStats(np.asarray(ts["row_means"], float), float(ts["grand_mean"]))
        alpha = np.asarray(doc["alpha"], float).reshape(n, H)
        return KpcaModel(X, KernelConfig.from_dict(doc["kernel"]), stats, alpha,
                         np.asarray(doc["eigenvalues"], float), float(doc["total_variance"]),
                         int(doc["rank"]), scaler)
    if doc["kind"] == "pca":
        P = np.asarray(doc["loadings"], float).reshape(d, H)
        return PcaModel(P, np.asarray(doc["eigenvalues"], float),
                        np.asarray(doc["center"], float), X,
                        float(doc["total_variance"]), scaler)
    raise ValidationError(f"unknown model kind {doc['kind']!r}")


def dumps_model(model: PcaModel | KpcaModel, extra: dict | None = None) -> str:
    doc = model_to_dict(model)
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=1) + "\n"


def save_model(model: PcaModel | KpcaModel, path, extra: dict | None = None) -> None:
    Path(path).write_text(dumps_model(model, extra), encoding="utf-8")


def load_model(path) -> tuple[PcaModel | KpcaModel, dict]:
    """Return the model and the raw document (for any extra fields)."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return model_from_dict(doc), doc
