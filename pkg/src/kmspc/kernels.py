"""Kernel functions, kernel-matrix assembly and feature-space centering."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ValidationError

SQRT3 = math.sqrt(3.0)
SQRT5 = math.sqrt(5.0)
MATERN_NUS = (0.5, 1.5, 2.5)


class Tag(enum.Enum):
    GAUSSIAN = "gaussian"
    CAUCHY = "cauchy"
    MATERN = "matern"
    # x.y inner product; only used to check KPCA against PCA
    LINEAR = "linear"


class Mode(enum.Enum):
    SHARED = "shared"
    PER_VARIABLE = "per_variable"


@dataclass(frozen=True)
class KernelFamily:
    tag: Tag
    nu: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "tag", Tag(self.tag))
        if self.tag is Tag.MATERN:
            if self.nu is None or float(self.nu) not in MATERN_NUS:
                raise ValidationError(f"Matern nu must be one of {MATERN_NUS}, got {self.nu}")
            object.__setattr__(self, "nu", float(self.nu))
        elif self.nu is not None:
            raise ValidationError("nu is only meaningful for the Matern family")

    @classmethod
    def parse(cls, spec) -> "KernelFamily":
        """Accept a KernelFamily, a tag name, ``"matern32"``-style names or a dict."""
        if isinstance(spec, KernelFamily):
            return spec
        if isinstance(spec, dict):
            return cls(Tag(spec["family"]), spec.get("nu"))
        name = str(spec).lower()
        shorthand = {"matern12": 0.5, "matern32": 1.5, "matern52": 2.5}
        if name in shorthand:
            return cls(Tag.MATERN, shorthand[name])
        return cls(Tag(name))

    def to_dict(self) -> dict:
        doc = {"family": self.tag.value}
        if self.nu is not None:
            doc["nu"] = self.nu
        return doc


GAUSSIAN = KernelFamily(Tag.GAUSSIAN)
CAUCHY = KernelFamily(Tag.CAUCHY)
LINEAR = KernelFamily(Tag.LINEAR)


def matern(nu: float) -> KernelFamily:
    return KernelFamily(Tag.MATERN, nu)


# Scalar kernels -------------------------------------------------------------

def _dist(x, y) -> float:
    return float(np.linalg.norm(np.atleast_1d(np.asarray(x, float) - np.asarray(y, float))))


def _check_sigma(sigma):
    if not sigma > 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")


def k_gaussian(x, y, sigma: float, gamma2: float = 1.0) -> float:
    _check_sigma(sigma)
    r = _dist(x, y)
    return gamma2 * math.exp(-r * r / (2.0 * sigma * sigma))


def k_cauchy(x, y, sigma: float, gamma2: float = 1.0) -> float:
    _check_sigma(sigma)
    r = _dist(x, y)
    return gamma2 / (1.0 + r * r / (sigma * sigma))


def k_matern(x, y, sigma: float, gamma2: float = 1.0, nu: float = 1.5) -> float:
    """Closed-form Matern kernel for half-integer ``nu`` in {1/2, 3/2, 5/2}."""
    _check_sigma(sigma)
    if float(nu) not in MATERN_NUS:
        raise ValidationError(f"unsupported Matern nu {nu}")
    return float(_matern_profile(np.array(_dist(x, y)), sigma, gamma2, float(nu)))


# Vectorised profiles over distance arrays --------------------------------------

def _matern_profile(r, sigma, gamma2, nu):
    if nu == 0.5:
        return gamma2 * np.exp(-r / sigma)
    if nu == 1.5:
        s = SQRT3 * r / sigma
        return gamma2 * (1.0 + s) * np.exp(-s)
    s = SQRT5 * r / sigma
    return gamma2 * (1.0 + s + s * s / 3.0) * np.exp(-s)


def profile(family: KernelFamily, sqdist: np.ndarray, sigma, gamma2) -> np.ndarray:
    """Evaluate a stationary family on an array of squared distances."""
    if family.tag is Tag.GAUSSIAN:
        return gamma2 * np.exp(sqdist * (-0.5 / (sigma * sigma)))
    if family.tag is Tag.CAUCHY:
        return gamma2 / (1.0 + sqdist * (1.0 / (sigma * sigma)))
    if family.tag is Tag.MATERN:
        return _matern_profile(np.sqrt(sqdist), sigma, gamma2, family.nu)
    raise ValidationError(f"{family.tag.value} kernel is not distance based")


# Configuration -------------------------------------------------------------------

@dataclass(frozen=True)
class KernelConfig:
    """Kernel family (or one family per variable) and its parameters.

    In SHARED mode ``sigma`` and ``gamma2`` are scalars and the kernel acts on
    whole sample vectors. In PER_VARIABLE mode they are length-d vectors and
    the kernel is the sum of one-dimensional kernels, one per variable.
    """

    family: KernelFamily | tuple[KernelFamily, ...] = GAUSSIAN
    mode: Mode = Mode.SHARED
    sigma: float | np.ndarray = 1.0
    gamma2: float | np.ndarray = 1.0
    optimize_gamma2: bool = False

    def __post_init__(self):
        mode = Mode(self.mode)
        object.__setattr__(self, "mode", mode)
        fam = self.family
        if isinstance(fam, (list, tuple)):
            fam = tuple(KernelFamily.parse(f) for f in fam)
            if mode is Mode.SHARED:
                raise ValidationError("a list of families requires PER_VARIABLE mode")
        else:
            fam = KernelFamily.parse(fam)
        object.__setattr__(self, "family", fam)
        if mode is Mode.SHARED:
            sigma, gamma2 = float(self.sigma), float(self.gamma2)
            if not (sigma > 0 and gamma2 > 0 and math.isfinite(sigma) and math.isfinite(gamma2)):
                raise ValidationError("sigma and gamma2 must be finite and positive")
        else:
            sigma = np.array(self.sigma, dtype=np.float64).reshape(-1)
            gamma2 = np.array(self.gamma2, dtype=np.float64).reshape(-1)
            if gamma2.size == 1 and sigma.size > 1:
                gamma2 = np.full(sigma.size, gamma2[0])
            if sigma.size != gamma2.size:
                raise ValidationError("sigma and gamma2 vectors differ in length")
            if isinstance(fam, tuple) and len(fam) != sigma.size:
                raise ValidationError("one family per variable is required")
            if not (np.all(sigma > 0) and np.all(gamma2 > 0)
                    and np.all(np.isfinite(sigma)) and np.all(np.isfinite(gamma2))):
                raise ValidationError("sigma and gamma2 entries must be finite and positive")
            sigma.setflags(write=False)
            gamma2.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "gamma2", gamma2)

    @classmethod
    def per_variable(cls, family, d: int, sigma=1.0, gamma2=1.0,
                     optimize_gamma2: bool = False) -> "KernelConfig":
        """Broadcast scalar parameters to ``d`` variables."""
        sigma = np.broadcast_to(np.asarray(sigma, float), (d,)).copy()
        gamma2 = np.broadcast_to(np.asarray(gamma2, float), (d,)).copy()
        return cls(family, Mode.PER_VARIABLE, sigma, gamma2, optimize_gamma2)

    @property
    def d(self) -> int | None:
        return None if self.mode is Mode.SHARED else self.sigma.size

    def families(self, d: int) -> tuple[KernelFamily, ...]:
        if isinstance(self.family, tuple):
            return self.family
        return (self.family,) * d

    def with_params(self, sigma, gamma2=None) -> "KernelConfig":
        return replace(self, sigma=sigma, gamma2=self.gamma2 if gamma2 is None else gamma2)

    def check_dimension(self, d: int) -> None:
        if self.mode is Mode.PER_VARIABLE and self.sigma.size != d:
            raise ValidationError(
                f"per-variable kernel has {self.sigma.size} parameters for {d} variables")

    def to_dict(self) -> dict:
        if isinstance(self.family, tuple):
            doc = {"family": [f.to_dict() for f in self.family]}
        else:
            doc = self.family.to_dict()
        doc["mode"] = self.mode.value
        if self.mode is Mode.SHARED:
            doc["sigma"], doc["gamma2"] = self.sigma, self.gamma2
        else:
            doc["sigma"], doc["gamma2"] = self.sigma.tolist(), self.gamma2.tolist()
        doc["optimize_gamma2"] = self.optimize_gamma2
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "KernelConfig":
        fam = doc.get("family", "gaussian")
        if isinstance(fam, list):
            family = tuple(KernelFamily.parse(f) for f in fam)
        elif doc.get("nu") is not None:
            family = KernelFamily(Tag(fam), doc["nu"])
        else:
            family = KernelFamily.parse(fam)
        mode = Mode(doc.get("mode", "shared"))
        sigma, gamma2 = doc.get("sigma", 1.0), doc.get("gamma2", 1.0)
        if mode is Mode.PER_VARIABLE and np.ndim(sigma) == 0:
            raise ValidationError("per-variable kernel config needs a sigma array")
        return cls(family, mode, sigma, gamma2, bool(doc.get("optimize_gamma2", False)))


# Matrices ----------------------------------------------------------------------

@dataclass(frozen=True)
class TrainStats:
    """Row means and grand mean of the uncentered training kernel matrix."""

    row_means: np.ndarray
    grand_mean: float


@dataclass(frozen=True)
class KernelMatrix:
    K: np.ndarray
    centered: bool = False
    train_stats: TrainStats | None = None

    @property
    def shape(self):
        return self.K.shape


def _as_2d(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValidationError("kernel inputs must be 2-D sample matrices")
    return X


def sq_differences(X, Y) -> np.ndarray:
    """Per-variable squared differences, shape (d, n, m).

    These do not depend on kernel parameters, so optimizers compute them once
    per batch and reuse them across parameter updates.
    """
    X, Y = _as_2d(X), _as_2d(Y)
    if X.shape[1] != Y.shape[1]:
        raise ValidationError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]} variables")
    diff = X.T[:, :, None] - Y.T[:, None, :]
    return diff * diff


def variable_terms(D: np.ndarray, cfg: KernelConfig, X=None, Y=None) -> np.ndarray:
    """Per-variable kernel matrices (d, n, m) from squared differences ``D``.

    Linear terms need the raw inputs ``X`` and ``Y``.
    """
    d = D.shape[0]
    cfg.check_dimension(d)
    fams = cfg.families(d)
    out = np.empty_like(D)
    for v in range(d):
        if fams[v].tag is Tag.LINEAR:
            if X is None or Y is None:
                raise ValidationError("linear per-variable terms need the raw inputs")
            out[v] = cfg.gamma2[v] * np.outer(_as_2d(X)[:, v], _as_2d(Y)[:, v])
        else:
            out[v] = profile(fams[v], D[v], cfg.sigma[v], cfg.gamma2[v])
    return out


def kernel_values(X, Y, cfg: KernelConfig) -> np.ndarray:
    """Uncentered kernel matrix as a plain array."""
    X, Y = _as_2d(X), _as_2d(Y)
    if X.shape[1] != Y.shape[1]:
        raise ValidationError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]} variables")
    if cfg.mode is Mode.SHARED:
        if cfg.family.tag is Tag.LINEAR:
            return cfg.gamma2 * (X @ Y.T)
        return profile(cfg.family, cdist(X, Y, "sqeuclidean"), cfg.sigma, cfg.gamma2)
    cfg.check_dimension(X.shape[1])
    fams = cfg.families(X.shape[1])
    K = np.zeros((X.shape[0], Y.shape[0]))
    for v, fam in enumerate(fams):
        xv, yv = X[:, v], Y[:, v]
        if fam.tag is Tag.LINEAR:
            K += cfg.gamma2[v] * np.outer(xv, yv)
        else:
            dv = xv[:, None] - yv[None, :]
            K += profile(fam, dv * dv, cfg.sigma[v], cfg.gamma2[v])
    return K


def kernel_matrix(X, Y, cfg: KernelConfig) -> KernelMatrix:
    return KernelMatrix(kernel_values(X, Y, cfg))


def self_kernel(X, cfg: KernelConfig) -> np.ndarray:
    """``k(x, x)`` for every row of ``X``."""
    X = _as_2d(X)
    if cfg.mode is Mode.SHARED:
        if cfg.family.tag is Tag.LINEAR:
            return cfg.gamma2 * np.einsum("ij,ij->i", X, X)
        return np.full(X.shape[0], cfg.gamma2)
    cfg.check_dimension(X.shape[1])
    out = np.zeros(X.shape[0])
    for v, fam in enumerate(cfg.families(X.shape[1])):
        out += cfg.gamma2[v] * (X[:, v] ** 2 if fam.tag is Tag.LINEAR else 1.0)
    return out


def center_train(km: KernelMatrix | np.ndarray) -> KernelMatrix:
    """Double-center a square training kernel matrix.

    Equivalent to ``(I - 11'/n) K (I - 11'/n)``; the row means and grand mean
    of ``K`` are kept for centering out-of-sample rows later.
    """
    if not isinstance(km, KernelMatrix):
        km = KernelMatrix(np.asarray(km, dtype=np.float64))
    if km.centered:
        raise ValidationError("kernel matrix is already centered")
    K = km.K
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValidationError("training kernel matrix must be square")
    row = K.mean(axis=1)
    col = K.mean(axis=0)
    grand = float(row.mean())
    Kc = K - row[:, None] - col[None, :] + grand
    return KernelMatrix(Kc, True, TrainStats(col, grand))


def center_test(km: KernelMatrix | np.ndarray, train_stats: TrainStats | None) -> KernelMatrix:
    """Center kernel rows between new points and the n training points."""
    if train_stats is None:
        raise ValidationError("out-of-sample centering needs training statistics")
    K = km.K if isinstance(km, KernelMatrix) else np.asarray(km, dtype=np.float64)
    K = np.atleast_2d(K)
    if K.shape[1] != train_stats.row_means.shape[0]:
        raise ValidationError(
            f"test kernel has {K.shape[1]} columns, training set has "
            f"{train_stats.row_means.shape[0]} samples")
    Kc = (K - K.mean(axis=1, keepdims=True) - train_stats.row_means[None, :]
          + train_stats.grand_mean)
    return KernelMatrix(Kc, True, train_stats)


def centered_self_kernel(self_k: np.ndarray, K_test: np.ndarray,
                         train_stats: TrainStats) -> np.ndarray:
    """``k~(x, x)`` for new points given ``k(x, x)`` and their uncentered rows."""
    return self_k - 2.0 * K_test.mean(axis=1) + train_stats.grand_mean


def families_from(names: Sequence[str] | str) -> KernelFamily | tuple[KernelFamily, ...]:
    if isinstance(names, str):
        return KernelFamily.parse(names)
    return tuple(KernelFamily.parse(n) for n in names)
