"""Loading, validation, standardization and partitioning of process data.

Samples are rows and process variables are columns throughout the package.
Sample indices that appear in the public API (fault onset) are 1-based, the
way the monitoring literature counts them.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataFormatError, ValidationError

TE_N_VARIABLES = 52


class MatrixFormat(enum.Enum):
    WHITESPACE_DAT = "dat"
    CSV = "csv"


class Role(enum.Enum):
    NORMAL_CALIBRATION = "normal"
    FAULTY_CALIBRATION = "faulty"
    TEST = "test"


class FaultKind(enum.Enum):
    MEAN_STEP = "mean_step"
    VARIANCE_SHIFT = "variance_shift"
    NONLINEAR_COUPLING = "nonlinear_coupling"


@dataclass(frozen=True)
class VariableInfo:
    index: int
    name: str
    description: str = ""
    unit: str = ""


@dataclass(frozen=True)
class RawMatrix:
    values: np.ndarray
    source: str = "synthetic"
    variables: tuple[VariableInfo, ...] | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValidationError(f"expected a 2-D matrix, got shape {values.shape}")
        n, d = values.shape
        if n < 2 or d < 1:
            raise ValidationError(f"need at least 2 samples and 1 variable, got {n}x{d}")
        bad = np.argwhere(~np.isfinite(values))
        if bad.size:
            r, c = bad[0]
            raise DataFormatError("non-finite value", row=int(r) + 1, column=int(c) + 1,
                                  path=self.source)
        if self.variables is not None:
            check_variables(self.variables, d)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class Scaler:
    """Per-variable affine map ``(x - mean) / std``."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64).reshape(-1)
        std = np.array(self.std, dtype=np.float64).reshape(-1)
        if mean.shape != std.shape:
            raise ValidationError("scaler mean and std lengths differ")
        if np.any(~np.isfinite(mean)) or np.any(~np.isfinite(std)) or np.any(std <= 0):
            raise ValidationError("scaler requires finite means and positive stds")
        mean.setflags(write=False)
        std.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.d:
            raise ValidationError(f"scaler expects {self.d} variables, got {X.shape[-1]}")
        return (X - self.mean) / self.std

    def inverse(self, Z: np.ndarray) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64)
        if Z.shape[-1] != self.d:
            raise ValidationError(f"scaler expects {self.d} variables, got {Z.shape[-1]}")
        return Z * self.std + self.mean

    @classmethod
    def fit(cls, X: np.ndarray) -> "Scaler":
        X = np.asarray(X, dtype=np.float64)
        mean = X.mean(axis=0)
        std = X.std(axis=0, ddof=1)
        # relative test so huge-offset constant columns are still caught
        scale = np.maximum(np.abs(mean), 1.0)
        for j in np.flatnonzero(~(std > 1e-12 * scale)):
            raise ValidationError(f"zero variance in column {j + 1}")
        return cls(mean, std)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "Scaler":
        return cls(doc["mean"], doc["std"])


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    role: Role
    scaler: Scaler
    fault_onset: int | None = None
    variables: tuple[VariableInfo, ...] | None = None
    source: str = "synthetic"

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        if X.ndim != 2:
            raise ValidationError("dataset matrix must be 2-D")
        if X.shape[1] != self.scaler.d:
            raise ValidationError("scaler length does not match the number of variables")
        if self.fault_onset is not None and not 1 <= self.fault_onset <= X.shape[0]:
            raise ValidationError(
                f"fault onset {self.fault_onset} outside 1..{X.shape[0]}")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def labels(self) -> np.ndarray:
        """0/1 class vector implied by the role and onset."""
        y = np.zeros(self.n, dtype=np.int8)
        if self.role is Role.FAULTY_CALIBRATION:
            y[:] = 1
        elif self.fault_onset is not None:
            y[self.fault_onset - 1:] = 1
        return y


def check_variables(variables: Sequence[VariableInfo], d: int | None = None) -> None:
    idx = [v.index for v in variables]
    if idx != list(range(1, len(idx) + 1)):
        raise ValidationError("variable indices must be contiguous 1..d without duplicates")
    if d is not None and len(idx) != d:
        raise ValidationError(f"{len(idx)} variable descriptions for {d} columns")


def te_variables() -> tuple[VariableInfo, ...]:
    """The 52 Tennessee Eastman variables shipped with the package."""
    text = resources.files("kmspc.data").joinpath("te_variables.csv").read_text("utf-8")
    return read_variable_info(io.StringIO(text))


def read_variable_info(source) -> tuple[VariableInfo, ...]:
    """Read an ``index,name,description[,unit]`` CSV (path or text stream)."""
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return read_variable_info(fh)
    out = []
    for k, row in enumerate(csv.DictReader(source), start=2):
        try:
            index = int(row["index"])
        except (KeyError, TypeError, ValueError):
            raise DataFormatError("bad or missing 'index' field", row=k) from None
        out.append(VariableInfo(index, row.get("name") or f"x{index:02d}",
                                row.get("description") or "", row.get("unit") or ""))
    variables = tuple(out)
    check_variables(variables)
    return variables


def _parse_float(cell: str, row: int, col: int, path) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataFormatError(f"non-numeric cell {cell!r}", row=row, column=col,
                              path=path) from None
    if not math.isfinite(value):
        raise DataFormatError(f"non-finite value {cell!r}", row=row, column=col, path=path)
    return value


def _infer_format(path: Path) -> MatrixFormat:
    return MatrixFormat.CSV if path.suffix.lower() == ".csv" else MatrixFormat.WHITESPACE_DAT


def load_matrix(path, fmt: MatrixFormat | str | None = None) -> RawMatrix:
    """Parse a numeric table, one sample per row.

    ``.dat`` files are whitespace separated without a header. CSV files may
    carry one header row of variable names, detected by its first cell not
    parsing as a number.
    """
    path = Path(path)
    fmt = _infer_format(path) if fmt is None else MatrixFormat(fmt)
    with open(path, newline="", encoding="utf-8") as fh:
        if fmt is MatrixFormat.CSV:
            lines = [(i, row) for i, row in enumerate(csv.reader(fh), start=1)
                     if any(c.strip() for c in row)]
        else:
            lines = [(i, line.split()) for i, line in enumerate(fh, start=1) if line.strip()]
    if not lines:
        raise DataFormatError("empty file", path=path)

    variables = None
    if fmt is MatrixFormat.CSV:
        first = lines[0][1][0].strip()
        try:
            float(first)
        except ValueError:
            header = [c.strip() for c in lines[0][1]]
            variables = tuple(VariableInfo(j, name) for j, name in enumerate(header, 1))
            lines = lines[1:]
            if not lines:
                raise DataFormatError("header without data rows", path=path)

    width = len(variables) if variables is not None else len(lines[0][1])
    values = np.empty((len(lines), width))
    for r, (lineno, cells) in enumerate(lines):
        if len(cells) != width:
            raise DataFormatError(f"expected {width} columns, found {len(cells)}",
                                  row=lineno, path=path)
        for c, cell in enumerate(cells):
            values[r, c] = _parse_float(cell.strip(), lineno, c + 1, path)
    return RawMatrix(values, source=str(path), variables=variables)


def write_matrix(values, path, fmt: MatrixFormat | str | None = None,
                 header: Sequence[str] | None = None) -> None:
    """Write a matrix so that :func:`load_matrix` recovers it bit for bit."""
    path = Path(path)
    values = np.asarray(values, dtype=np.float64)
    fmt = _infer_format(path) if fmt is None else MatrixFormat(fmt)
    sep = "," if fmt is MatrixFormat.CSV else " "
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header is not None:
            if fmt is not MatrixFormat.CSV:
                raise ValidationError("headers are only supported for CSV output")
            fh.write(sep.join(header) + "\n")
        for row in values:
            fh.write(sep.join(repr(float(v)) for v in row) + "\n")


def load_te(path, transpose: bool = False) -> RawMatrix:
    """Load a Tennessee Eastman ``.dat`` file and attach the variable table.

    Some distributions store the normal-operation file variable-major; pass
    ``transpose=True`` for those.
    """
    raw = load_matrix(path, MatrixFormat.WHITESPACE_DAT)
    values = raw.values.T if transpose else raw.values
    if values.shape[1] != TE_N_VARIABLES:
        raise DataFormatError(
            f"expected {TE_N_VARIABLES} columns for TE data, found {values.shape[1]}",
            path=path)
    return RawMatrix(values, source=raw.source, variables=te_variables())


def standardize(raw: RawMatrix | np.ndarray, scaler: Scaler | None = None,
                role: Role = Role.NORMAL_CALIBRATION) -> Dataset:
    """Scale ``raw`` column-wise.

    Without ``scaler`` the column means and sample standard deviations of
    ``raw`` are used; faulty and test partitions should be passed the scaler
    of the normal calibration set instead.
    """
    if not isinstance(raw, RawMatrix):
        raw = RawMatrix(raw)
    if scaler is None:
        scaler = Scaler.fit(raw.values)
    return Dataset(scaler.transform(raw.values), role, scaler,
                   variables=raw.variables, source=raw.source)


def onset_index(sampling_minutes: float, fault_after_hours: float) -> int:
    """1-based index of the first faulty sample."""
    if sampling_minutes <= 0 or fault_after_hours < 0:
        raise ValidationError("sampling interval must be positive and fault time non-negative")
    # tolerance keeps e.g. 8 h / 3 min at exactly 160 normal samples
    return math.floor(fault_after_hours * 60.0 / sampling_minutes + 1e-9) + 1


def mark_fault_onset(ds: Dataset, sampling_minutes: float = 3.0,
                     fault_after_hours: float = 8.0) -> Dataset:
    onset = onset_index(sampling_minutes, fault_after_hours)
    if onset > ds.n:
        raise ValidationError(
            f"fault onset at sample {onset} lies beyond the {ds.n}-sample dataset")
    return replace(ds, fault_onset=onset)


# Synthetic process -------------------------------------------------------

_STRUCTURE_SEED = 20240611
_NOISE_SD = 0.3
# median of a chi-square(1) variable: the switching threshold keeps the
# normal-state coupled variable zero-mean
_CHI2_1_MEDIAN = 0.454936423119572
_COUPLING_NOISE = 0.12
_COUPLING_SLOPE = 0.25
_COUPLED_FRACTION = 4


@dataclass(frozen=True)
class SyntheticProcess:
    """Fixed latent-factor process used for desk-scale experiments.

    The structure (loadings, offsets, scales, affected variables) depends on
    ``d`` only; the sampling seed changes the draws, not the process.
    """

    d: int
    loadings: np.ndarray
    offset: np.ndarray
    scale: np.ndarray
    affected: tuple[int, ...] = field(default=())
    coupled: tuple[int, ...] = field(default=())

    @classmethod
    def for_dimension(cls, d: int) -> "SyntheticProcess":
        if d < 2:
            raise ValidationError("synthetic process needs d >= 2")
        rng = np.random.default_rng([_STRUCTURE_SEED, d])
        r = min(3, max(1, d // 3))
        L = rng.standard_normal((d, r))
        L /= np.linalg.norm(L, axis=1, keepdims=True)
        offset = rng.uniform(10.0, 100.0, d)
        scale = rng.uniform(0.5, 5.0, d)
        k = max(1, d // 5)
        coupled = tuple(range(max(1, _COUPLED_FRACTION * d // 5)))
        return cls(d, L, offset, scale, tuple(range(k)), coupled)

    @property
    def n_factors(self) -> int:
        return self.loadings.shape[1]

    def variable_std(self) -> np.ndarray:
        """Standard deviation of each variable before offset/scale, normal state."""
        return np.sqrt(np.sum(self.loadings ** 2, axis=1) + _NOISE_SD ** 2)

    def sample(self, n: int, fault: FaultKind | None, rng: np.random.Generator,
               coupled: bool = False) -> np.ndarray:
        """Draw ``n`` raw samples; ``fault=None`` is normal operation.

        With ``coupled`` (implied by a NONLINEAR_COUPLING fault) the affected
        variables follow a switching law of their latent driver in normal
        operation, and the fault turns that law into a smooth quadratic.
        """
        coupled = coupled or fault is FaultKind.NONLINEAR_COUPLING
        Z = rng.standard_normal((n, self.n_factors))
        E = rng.standard_normal((n, self.d))
        X = Z @ self.loadings.T + _NOISE_SD * E
        sub = list(self.affected)
        if fault is FaultKind.MEAN_STEP:
            X[:, sub] += 2.0 * self.variable_std()[sub]
        elif fault is FaultKind.VARIANCE_SHIFT:
            X[:, sub] *= 3.0
        if coupled:
            for v in self.coupled:
                z2 = Z[:, v % self.n_factors] ** 2
                if fault is None:
                    X[:, v] = np.sign(z2 - _CHI2_1_MEDIAN)
                else:
                    X[:, v] = _COUPLING_SLOPE * (z2 - 1.0)
                X[:, v] += _COUPLING_NOISE * E[:, v]
        return self.offset + self.scale * X


def _draw(process: SyntheticProcess, n: int, kind: FaultKind, faulty: bool,
          seed: int, stream: int) -> np.ndarray:
    rng = np.random.default_rng([seed, stream])
    coupled = kind is FaultKind.NONLINEAR_COUPLING
    return process.sample(n, kind if faulty else None, rng, coupled=coupled)


def synthesize(n_normal: int, n_faulty: int, d: int, fault_kind: FaultKind | str,
               seed: int) -> tuple[Dataset, Dataset]:
    """Normal and faulty calibration sets from the synthetic process.

    Both sets are standardized with the scaler of the normal set.
    """
    if min(n_normal, n_faulty, d) < 2:
        raise ValidationError("synthesize needs n_normal, n_faulty and d >= 2")
    kind = FaultKind(fault_kind)
    process = SyntheticProcess.for_dimension(d)
    normal = RawMatrix(_draw(process, n_normal, kind, False, seed, 0))
    faulty = RawMatrix(_draw(process, n_faulty, kind, True, seed, 1))
    ds_normal = standardize(normal)
    ds_faulty = standardize(faulty, ds_normal.scaler, Role.FAULTY_CALIBRATION)
    return ds_normal, ds_faulty


def synthesize_test(n_before: int, n_after: int, d: int, fault_kind: FaultKind | str,
                    seed: int, scaler: Scaler) -> Dataset:
    """Test partition: ``n_before`` normal samples followed by faulty ones.

    Uses random streams disjoint from :func:`synthesize` for the same seed.
    """
    if n_before < 1 or n_after < 1:
        raise ValidationError("test partition needs samples on both sides of the onset")
    kind = FaultKind(fault_kind)
    process = SyntheticProcess.for_dimension(d)
    X = np.vstack([_draw(process, n_before, kind, False, seed, 2),
                   _draw(process, n_after, kind, True, seed, 3)])
    ds = standardize(RawMatrix(X), scaler, Role.TEST)
    return replace(ds, fault_onset=n_before + 1)
