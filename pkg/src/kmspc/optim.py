"""Kernel-parameter learning.

The main optimizer draws small balanced normal/faulty batches, fits kernel
PCA on each, regresses the class labels on the leading scores (K-PCR) and
descends the finite-difference gradient of the resulting misclassification
rate in log-parameter space. Line search, Nelder-Mead and a real-coded
genetic algorithm share the same loss callables for comparison.
"""

from __future__ import annotations

import csv
import enum
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .dataset import Dataset
from .errors import NumericalError, RankError, ValidationError
from .kernels import KernelConfig, Mode, Tag, profile, sq_differences, variable_terms
from .linalg import eigh_top
from .decomposition import RANK_TOL

log = logging.getLogger(__name__)

MAX_RESAMPLE = 5


class Parameterization(enum.Enum):
    LOG_SIGMA = "log_sigma"
    LOG_SIGMA_LOG_GAMMA2 = "log_sigma_log_gamma2"


class Method(enum.Enum):
    KERNEL_FLOWS = "kernel_flows"
    LINE_SEARCH = "line_search"
    NELDER_MEAD = "nelder_mead"
    GENETIC_ALGORITHM = "genetic_algorithm"


@dataclass(frozen=True)
class KfConfig:
    H: int = 4
    iterations: int = 300
    sub_iterations: int = 8
    ns: int = 40
    alpha: float = 0.5
    fd_step: float = 1e-2
    seed: int = 0
    parameterization: Parameterization = Parameterization.LOG_SIGMA
    # "rate" is the raw misclassification rate; "logistic" smooths the
    # 0.5 threshold with a logistic function of width `temperature`
    loss: str = "rate"
    temperature: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "parameterization", Parameterization(self.parameterization))
        if min(self.H, self.iterations, self.sub_iterations, self.ns) < 1:
            raise ValidationError("H, iterations, sub_iterations and ns must be positive")
        if self.ns < self.H + 1:
            raise ValidationError(f"ns={self.ns} cannot support H={self.H} components")
        if not (self.alpha >= 0 and self.fd_step > 0 and self.temperature > 0):
            raise ValidationError("alpha must be >= 0, fd_step and temperature > 0")
        if self.loss not in ("rate", "logistic"):
            raise ValidationError(f"unknown loss {self.loss!r}")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["parameterization"] = self.parameterization.value
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "KfConfig":
        return cls(**doc)


# Parameter vectors -------------------------------------------------------------------

@dataclass(frozen=True)
class ParamSpace:
    """Maps a kernel config to the free log-parameter vector and back."""

    template: KernelConfig
    parameterization: Parameterization = Parameterization.LOG_SIGMA

    @property
    def n_sigma(self) -> int:
        return 1 if self.template.mode is Mode.SHARED else self.template.sigma.size

    @property
    def size(self) -> int:
        k = self.n_sigma
        return 2 * k if self.parameterization is Parameterization.LOG_SIGMA_LOG_GAMMA2 else k

    def pack(self, cfg: KernelConfig | None = None) -> np.ndarray:
        cfg = self.template if cfg is None else cfg
        parts = [np.log(np.atleast_1d(cfg.sigma).astype(float))]
        if self.parameterization is Parameterization.LOG_SIGMA_LOG_GAMMA2:
            parts.append(np.log(np.atleast_1d(cfg.gamma2).astype(float)))
        return np.concatenate(parts)

    def unpack(self, x: np.ndarray) -> KernelConfig:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.size,):
            raise ValidationError(f"expected {self.size} parameters, got {x.shape}")
        with np.errstate(over="raise", under="raise"):
            try:
                theta = np.exp(x)
            except FloatingPointError:
                raise NumericalError("kernel parameter left the representable range") from None
        k = self.n_sigma
        sigma = theta[:k]
        gamma2 = theta[k:] if self.size > k else self.template.gamma2
        if self.template.mode is Mode.SHARED:
            return self.template.with_params(float(sigma[0]),
                                             float(np.atleast_1d(gamma2)[0]))
        return self.template.with_params(sigma, gamma2)

    def natural(self, x: np.ndarray) -> np.ndarray:
        return np.exp(np.asarray(x, dtype=np.float64))


# K-PCR loss ---------------------------------------------------------------------------

class DegenerateKernel(RankError):
    pass


def _center(K: np.ndarray) -> np.ndarray:
    row = K.mean(axis=1)
    col = K.mean(axis=0)
    return K - row[:, None] - col[None, :] + row.mean()


def kpcr_predictions(K: np.ndarray, y: np.ndarray, H: int) -> np.ndarray:
    """Fitted label values from regressing ``y`` on the top-H kernel PCA scores.

    The scores are centered, so the regression carries an intercept (the
    label mean); without it every fitted value would be centered on 0 and a
    0.5 threshold would be meaningless.
    """
    mu, U = eigh_top(_center(K), H)
    if not (mu[0] > 0 and mu[H - 1] > RANK_TOL * mu[0]):
        rank = int(np.sum(mu > RANK_TOL * max(mu[0], 0.0))) if mu[0] > 0 else 0
        raise DegenerateKernel(H, rank)
    T = U * np.sqrt(mu)
    ybar = float(y.mean())
    # pseudo-inverse through the eigendecomposition: T+ = diag(1/sqrt(mu)) U'
    b = (U.T @ (y - ybar)) / np.sqrt(mu)
    return ybar + T @ b


def classification_loss(yhat: np.ndarray, y: np.ndarray, smooth: float | None = None) -> float:
    """``1 - (eta_n + eta_f) / 2`` with a 0.5 threshold on the fitted labels.

    ``smooth`` replaces the hard threshold by a logistic function of that
    width, giving a differentiable surrogate.
    """
    faulty = y > 0.5
    if smooth is None:
        flagged = yhat > 0.5
        eta_f = float(np.mean(flagged[faulty]))
        eta_n = float(np.mean(~flagged[~faulty]))
    else:
        p = 0.5 * (1.0 + np.tanh((yhat - 0.5) / (2.0 * smooth)))
        eta_f = float(np.mean(p[faulty]))
        eta_n = float(np.mean(1.0 - p[~faulty]))
    return 1.0 - 0.5 * (eta_n + eta_f)


def _stack(Xn: np.ndarray, Xf: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.vstack([Xf, Xn])
    y = np.concatenate([np.ones(len(Xf)), np.zeros(len(Xn))])
    return X, y


def kpcr_subloss(Xn, Xf, cfg: KernelConfig, H: int, smooth: float | None = None) -> float:
    """K-PCR classification loss on one normal/faulty batch.

    Raises :class:`DegenerateKernel` when the centered kernel has fewer than
    ``H`` numerically nonzero eigenvalues.
    """
    Xn = np.asarray(Xn, dtype=np.float64)
    Xf = np.asarray(Xf, dtype=np.float64)
    if Xn.ndim != 2 or Xf.ndim != 2 or Xn.shape[1] != Xf.shape[1]:
        raise ValidationError("normal and faulty batches must be 2-D with equal widths")
    X, y = _stack(Xn, Xf)
    if not 1 <= H <= len(y) - 1:
        raise ValidationError(f"H must lie in 1..{len(y) - 1}")
    return classification_loss(kpcr_predictions(_Batch(X, cfg).kernel(cfg), y, H), y, smooth)


class _Batch:
    """Parameter-independent distance data for one stacked batch."""

    def __init__(self, X: np.ndarray, template: KernelConfig):
        self.X = X
        self.mode = template.mode
        if template.mode is Mode.SHARED:
            self.sq = cdist(X, X, "sqeuclidean")
        else:
            self.D = sq_differences(X, X)
        self._terms = None
        self._terms_key = None

    def kernel(self, cfg: KernelConfig) -> np.ndarray:
        if self.mode is Mode.SHARED:
            if cfg.family.tag is Tag.LINEAR:
                return cfg.gamma2 * (self.X @ self.X.T)
            return profile(cfg.family, self.sq, cfg.sigma, cfg.gamma2)
        return self.terms(cfg).sum(axis=0)

    def terms(self, cfg: KernelConfig) -> np.ndarray:
        key = (cfg.sigma.tobytes(), cfg.gamma2.tobytes())
        if key != self._terms_key:
            self._terms = variable_terms(self.D, cfg, self.X, self.X)
            self._terms_key = key
        return self._terms


def _loss_with_perturbations(batch: _Batch, y: np.ndarray, space: ParamSpace,
                             x: np.ndarray, step: float, H: int,
                             smooth: float | None) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss at ``x`` and at ``x +/- step * e_k`` for every coordinate k.

    Per-variable kernels are updated by swapping a single variable's term
    instead of reassembling the whole sum. Perturbed evaluations that turn
    degenerate count as chance level.
    """
    cfg = space.unpack(x)
    K = batch.kernel(cfg)
    base = classification_loss(kpcr_predictions(K, y, H), y, smooth)
    plus = np.empty(space.size)
    minus = np.empty(space.size)
    per_var = space.template.mode is Mode.PER_VARIABLE
    terms = batch.terms(cfg) if per_var else None
    k_sigma = space.n_sigma
    fams = cfg.families(k_sigma) if per_var else None
    for k in range(space.size):
        for sign, out in ((1.0, plus), (-1.0, minus)):
            xk = x.copy()
            xk[k] += sign * step
            if per_var:
                v = k % k_sigma
                s = math.exp(xk[v])
                g = math.exp(xk[k_sigma + v]) if space.size > k_sigma else cfg.gamma2[v]
                if fams[v].tag is Tag.LINEAR:
                    new = g * np.outer(batch.X[:, v], batch.X[:, v])
                else:
                    new = profile(fams[v], batch.D[v], s, g)
                Kk = K - terms[v] + new
            else:
                Kk = batch.kernel(space.unpack(xk))
            try:
                out[k] = classification_loss(kpcr_predictions(Kk, y, H), y, smooth)
            except DegenerateKernel:
                out[k] = 0.5
    return base, plus, minus


def central_gradient(fun: Callable[[np.ndarray], float], x: np.ndarray,
                     step: float) -> np.ndarray:
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = step
        g[k] = (fun(x + e) - fun(x - e)) / (2.0 * step)
    return g


# Results ----------------------------------------------------------------------------------

@dataclass
class LossTrace:
    losses: list[float] = field(default_factory=list)
    thetas: list[list[float]] = field(default_factory=list)
    wall_ms: list[float] = field(default_factory=list)

    def append(self, loss: float, theta: np.ndarray, wall_ms: float) -> None:
        self.losses.append(float(loss))
        self.thetas.append([float(t) for t in np.atleast_1d(theta)])
        self.wall_ms.append(float(wall_ms))

    def __len__(self) -> int:
        return len(self.losses)

    def best_so_far(self) -> np.ndarray:
        return np.minimum.accumulate(np.asarray(self.losses)) if self.losses else np.array([])


@dataclass
class OptimResult:
    theta_opt: np.ndarray
    final_loss: float
    trace: LossTrace
    method: Method
    config: KernelConfig | None = None
    info: dict = field(default_factory=dict)

    def to_dict(self, timing: bool = True) -> dict:
        """JSON-ready form; ``timing=False`` drops the wall-clock trace."""
        trace = {"loss": self.trace.losses, "theta": self.trace.thetas}
        if timing:
            trace["wall_ms"] = self.trace.wall_ms
        doc = {
            "method": self.method.value,
            "theta_opt": [float(t) for t in np.atleast_1d(self.theta_opt)],
            "final_loss": self.final_loss,
            "trace": trace,
            "info": self.info,
        }
        if self.config is not None:
            doc["kernel"] = self.config.to_dict()
        return doc

    def save_json(self, path, timing: bool = True) -> None:
        Path(path).write_text(json.dumps(self.to_dict(timing), indent=1) + "\n",
                              encoding="utf-8")

    def save_trace_csv(self, path, names: Sequence[str] | None = None) -> None:
        width = len(self.trace.thetas[0]) if self.trace.thetas else 0
        names = list(names) if names is not None else [f"theta_{k + 1}" for k in range(width)]
        with open(Path(path), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "mean_loss", "wall_ms", *names])
            for i, (loss, ms, th) in enumerate(zip(self.trace.losses, self.trace.wall_ms,
                                                   self.trace.thetas), start=1):
                w.writerow([i, repr(loss), f"{ms:.3f}", *(repr(t) for t in th)])


# Kernel Flows ----------------------------------------------------------------------------

def _as_list(faulty) -> list[Dataset]:
    if isinstance(faulty, (list, tuple)):
        if not faulty:
            raise ValidationError("at least one faulty dataset is required")
        return list(faulty)
    return [faulty]


def _check_shared_scaler(normal: Dataset, faulty: list[Dataset]) -> None:
    for ds in faulty:
        if ds.d != normal.d:
            raise ValidationError("faulty data has a different number of variables")
        if not (np.array_equal(ds.scaler.mean, normal.scaler.mean)
                and np.array_equal(ds.scaler.std, normal.scaler.std)):
            raise ValidationError("faulty data must be standardized with the normal scaler")


def kf_optimize(normal: Dataset, faulty: Dataset | Sequence[Dataset], cfg0: KernelConfig,
                kf: KfConfig = KfConfig(),
                callback: Callable[[int, float, np.ndarray], None] | None = None) -> OptimResult:
    """Learn kernel parameters by stochastic descent on the K-PCR loss.

    Each iteration averages the loss over ``kf.sub_iterations`` batches of
    ``kf.ns`` normal and ``kf.ns`` faulty samples, and the same batches are
    reused for every finite-difference evaluation of that iteration.
    """
    faulty_sets = _as_list(faulty)
    _check_shared_scaler(normal, faulty_sets)
    cfg0.check_dimension(normal.d)
    for ds in [normal, *faulty_sets]:
        if ds.n < kf.ns:
            raise ValidationError(f"dataset with {ds.n} samples cannot supply ns={kf.ns}")
    space = ParamSpace(cfg0, kf.parameterization)
    smooth = kf.temperature if kf.loss == "logistic" else None
    rng = np.random.default_rng(kf.seed)
    y = np.concatenate([np.ones(kf.ns), np.zeros(kf.ns)])
    x = space.pack(cfg0)
    trace = LossTrace()
    degenerate = 0
    fallback = 0

    for it in range(kf.iterations):
        t0 = time.perf_counter()
        losses = np.empty(kf.sub_iterations)
        g_plus = np.zeros(space.size)
        g_minus = np.zeros(space.size)
        for s in range(kf.sub_iterations):
            for attempt in range(MAX_RESAMPLE + 1):
                src = faulty_sets[rng.integers(len(faulty_sets))] if len(faulty_sets) > 1 \
                    else faulty_sets[0]
                idx_n = rng.permutation(normal.n)[:kf.ns]
                idx_f = rng.permutation(src.n)[:kf.ns]
                X = np.vstack([src.X[idx_f], normal.X[idx_n]])
                try:
                    base, plus, minus = _loss_with_perturbations(
                        _Batch(X, cfg0), y, space, x, kf.fd_step, kf.H, smooth)
                    break
                except DegenerateKernel:
                    degenerate += 1
            else:
                fallback += 1
                log.warning("iteration %d: batch stayed degenerate after %d resamples; "
                            "using chance-level loss", it + 1, MAX_RESAMPLE)
                base, plus, minus = 0.5, np.full(space.size, 0.5), np.full(space.size, 0.5)
            losses[s] = base
            g_plus += plus
            g_minus += minus
        mean_loss = float(losses.mean())
        if not math.isfinite(mean_loss):
            raise NumericalError(f"non-finite loss at iteration {it + 1}")
        grad = (g_plus - g_minus) / (kf.sub_iterations * 2.0 * kf.fd_step)
        trace.append(mean_loss, space.natural(x), (time.perf_counter() - t0) * 1e3)
        if callback is not None:
            callback(it + 1, mean_loss, space.natural(x))
        if it + 1 < kf.iterations:
            x = x - kf.alpha * grad
            space.unpack(x)  # raises if a parameter under/overflows

    if degenerate:
        log.info("resampled %d degenerate batches", degenerate)
    return OptimResult(space.natural(x), trace.losses[-1], trace, Method.KERNEL_FLOWS,
                       space.unpack(x), {"degenerate_batches": degenerate,
                                         "fallback_batches": fallback,
                                         "kf": kf.to_dict()})


# Deterministic losses for the baselines -------------------------------------------------

class ClassificationLoss:
    """K-PCR loss on the full normal and faulty partitions (no sub-sampling).

    Called with a natural-scale parameter vector laid out as in
    :class:`ParamSpace`; degenerate kernels score 0.5.
    """

    def __init__(self, normal: Dataset, faulty: Dataset | Sequence[Dataset],
                 template: KernelConfig, H: int = 4,
                 parameterization: Parameterization = Parameterization.LOG_SIGMA,
                 smooth: float | None = None):
        faulty_sets = _as_list(faulty)
        _check_shared_scaler(normal, faulty_sets)
        Xf = np.vstack([ds.X for ds in faulty_sets])
        X, self.y = _stack(normal.X, Xf)
        self.space = ParamSpace(template, Parameterization(parameterization))
        self.batch = _Batch(X, template)
        self.H = H
        self.smooth = smooth
        self.evaluations = 0

    def __call__(self, theta) -> float:
        self.evaluations += 1
        theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
        if np.any(theta <= 0) or not np.all(np.isfinite(theta)):
            return 1.0
        cfg = self.space.unpack(np.log(theta))
        try:
            yhat = kpcr_predictions(self.batch.kernel(cfg), self.y, self.H)
        except DegenerateKernel:
            return 0.5
        return classification_loss(yhat, self.y, self.smooth)


# Baselines -----------------------------------------------------------------------------

def line_search(loss: Callable[[float], float], grid: Sequence[float]) -> OptimResult:
    """Evaluate ``loss`` on every grid point; ties go to the earliest point."""
    grid = [float(g) for g in grid]
    if not grid:
        raise ValidationError("line search needs a nonempty grid")
    trace = LossTrace()
    best_i = 0
    for i, g in enumerate(grid):
        t0 = time.perf_counter()
        value = float(loss(g))
        trace.append(value, np.array([g]), (time.perf_counter() - t0) * 1e3)
        if value < trace.losses[best_i]:
            best_i = i
    return OptimResult(np.array([grid[best_i]]), trace.losses[best_i], trace,
                       Method.LINE_SEARCH)


def nelder_mead(loss: Callable[[np.ndarray], float], theta0, log_space: bool = False,
                step=None, max_evals: int = 500, xtol: float = 1e-6) -> OptimResult:
    """Downhill simplex (reflection 1, expansion 2, contraction 0.5, shrink 0.5).

    Stops when every vertex lies within ``xtol`` of the best one, or when
    ``max_evals`` is exhausted (``info["max_evals_reached"]`` is then set and
    the best point so far is returned). With ``log_space`` the simplex moves
    in the logarithm of the parameters.
    """
    x0 = np.atleast_1d(np.asarray(theta0, dtype=np.float64))
    if x0.ndim != 1 or x0.size < 1:
        raise ValidationError("theta0 must be a nonempty vector")
    if log_space:
        if np.any(x0 <= 0):
            raise ValidationError("log-space search needs positive starting parameters")
        fwd, back = np.log, np.exp
    else:
        fwd = back = lambda v: v
    u0 = fwd(x0)
    n = u0.size
    if step is None:
        step = np.where(u0 != 0, 0.05 * np.abs(u0), 0.00025)
    step = np.broadcast_to(np.asarray(step, dtype=np.float64), (n,))

    evals = 0
    trace = LossTrace()

    def f(u):
        nonlocal evals
        evals += 1
        return float(loss(back(u)))

    simplex = [u0.copy()]
    for k in range(n):
        v = u0.copy()
        v[k] += step[k]
        simplex.append(v)
    simplex = np.array(simplex)
    values = np.array([f(v) for v in simplex])
    t0 = time.perf_counter()
    hit_budget = False

    while True:
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        trace.append(values[0], back(simplex[0]), (time.perf_counter() - t0) * 1e3)
        t0 = time.perf_counter()
        if np.max(np.linalg.norm(simplex[1:] - simplex[0], axis=1)) < xtol:
            break
        if evals >= max_evals:
            hit_budget = True
            break
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + (centroid - worst)
        fr = f(xr)
        if fr < values[0]:
            xe = centroid + 2.0 * (centroid - worst)
            fe = f(xe)
            simplex[-1], values[-1] = (xe, fe) if fe < fr else (xr, fr)
            continue
        if fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-1]:
            xc = centroid + 0.5 * (xr - centroid)
            fc = f(xc)
            if fc <= fr:
                simplex[-1], values[-1] = xc, fc
                continue
        else:
            xc = centroid + 0.5 * (worst - centroid)
            fc = f(xc)
            if fc < values[-1]:
                simplex[-1], values[-1] = xc, fc
                continue
        for k in range(1, n + 1):
            simplex[k] = simplex[0] + 0.5 * (simplex[k] - simplex[0])
            values[k] = f(simplex[k])

    best = int(np.argmin(values))
    return OptimResult(back(simplex[best]), float(values[best]), trace, Method.NELDER_MEAD,
                       info={"evaluations": evals, "max_evals_reached": hit_budget})


@dataclass(frozen=True)
class GaConfig:
    population: int = 40
    generations: int = 50
    tournament: int = 3
    crossover_rate: float = 0.9
    blend_alpha: float = 0.5
    mutation_rate: float = 0.1
    mutation_scale: float = 0.1
    elitism: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.population < 2 or self.generations < 1 or self.tournament < 1:
            raise ValidationError("GA needs population >= 2, generations >= 1, tournament >= 1")
        if not 0 <= self.elitism < self.population:
            raise ValidationError("elitism must be smaller than the population")


def ga_optimize(loss: Callable[[np.ndarray], float], bounds, opts: GaConfig = GaConfig(),
                log_space: bool = False, initial_population=None) -> OptimResult:
    """Real-coded genetic algorithm inside box ``bounds`` (sequence of (lo, hi)).

    Tournament selection, blend (BLX-alpha) crossover, Gaussian mutation
    scaled to each parameter's range, and elitism. Deterministic given
    ``opts.seed``. With ``log_space`` genes are logarithms of the parameters.
    """
    bounds = np.asarray(bounds, dtype=np.float64).reshape(-1, 2)
    lo, hi = bounds[:, 0], bounds[:, 1]
    if not (np.all(np.isfinite(bounds)) and np.all(hi > lo)):
        raise ValidationError("bounds must be finite and increasing")
    if log_space and not np.all(lo > 0):
        raise ValidationError("log-space bounds must be positive")
    if log_space:
        lo, hi = np.log(lo), np.log(hi)
        fwd, back = np.log, np.exp
    else:
        fwd = back = lambda v: v
    rng = np.random.default_rng(opts.seed)
    n = lo.size
    width = hi - lo

    if initial_population is None:
        pop = lo + rng.random((opts.population, n)) * width
    else:
        pop = fwd(np.asarray(initial_population, dtype=np.float64).reshape(-1, n))
        if pop.shape[0] != opts.population:
            raise ValidationError("initial population size does not match the config")

    cache: dict[bytes, float] = {}

    def f(u):
        key = u.tobytes()
        if key not in cache:
            cache[key] = float(loss(back(u)))
        return cache[key]

    fitness = np.array([f(u) for u in pop])
    trace = LossTrace()

    def pick():
        contenders = rng.integers(opts.population, size=opts.tournament)
        return pop[contenders[np.argmin(fitness[contenders])]]

    for gen in range(opts.generations):
        t0 = time.perf_counter()
        order = np.argsort(fitness, kind="stable")
        children = [pop[i].copy() for i in order[:opts.elitism]]
        while len(children) < opts.population:
            a, b = pick(), pick()
            if rng.random() < opts.crossover_rate:
                low, high = np.minimum(a, b), np.maximum(a, b)
                spread = opts.blend_alpha * (high - low)
                c1 = rng.uniform(low - spread, high + spread)
                c2 = rng.uniform(low - spread, high + spread)
            else:
                c1, c2 = a.copy(), b.copy()
            for c in (c1, c2):
                mask = rng.random(n) < opts.mutation_rate
                c[mask] += rng.standard_normal(int(mask.sum())) * opts.mutation_scale * width[mask]
                np.clip(c, lo, hi, out=c)
                if len(children) < opts.population:
                    children.append(c)
        pop = np.array(children)
        fitness = np.array([f(u) for u in pop])
        best = int(np.argmin(fitness))
        trace.append(fitness[best], back(pop[best]), (time.perf_counter() - t0) * 1e3)

    best_val = min(trace.losses)
    best_gen = trace.losses.index(best_val)
    return OptimResult(np.asarray(trace.thetas[best_gen]), best_val, trace,
                       Method.GENETIC_ALGORITHM, info={"evaluations": len(cache)})
