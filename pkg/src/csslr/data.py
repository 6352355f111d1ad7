"""Datasets, sign expectations and selection configuration.

A :class:`Dataset` is a binary response (1 = bad, 0 = good) plus an ordered
set of named numeric predictor columns.  Datasets are read from and written
to CSV; configurations are flat YAML/JSON mappings whose keys are the field
names of :class:`SelectionConfig`.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from dataclasses import MISSING, asdict, dataclass, fields, replace
from enum import Enum
from typing import IO, Mapping, Sequence, Union

import numpy as np
import yaml

PathOrStream = Union[str, os.PathLike, IO[str]]


class DataError(ValueError):
    """Raised when a dataset violates its invariants."""


class ConfigError(ValueError):
    """Raised for unparsable or invalid selection configurations."""


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Dataset:
    """Binary response plus named predictor columns.

    ``values`` has shape ``(N, m)``; column ``j`` holds variable ``names[j]``.
    Both arrays are made read-only on construction.
    """

    response: np.ndarray
    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        response = np.asarray(self.response, dtype=float).ravel()
        values = np.asarray(self.values, dtype=float)
        names = tuple(self.names)
        if values.ndim == 1 and len(names) == 1:
            values = values.reshape(-1, 1)
        if values.size == 0:
            values = values.reshape(response.shape[0], 0)
        if values.ndim != 2:
            raise DataError("variable values must be a 2-D array")
        if response.shape[0] == 0:
            raise DataError("empty dataset")
        if values.shape != (response.shape[0], len(names)):
            raise DataError(
                f"variable matrix has shape {values.shape}, expected "
                f"({response.shape[0]}, {len(names)})"
            )
        if any(not n for n in names):
            raise DataError("variable names must be non-empty")
        if len(set(names)) != len(names):
            raise DataError("variable names must be unique")
        if not np.all((response == 0) | (response == 1)):
            raise DataError("non-binary response value")
        if response.min() == response.max():
            raise DataError("single-class response")
        if not np.all(np.isfinite(values)):
            raise DataError("non-finite predictor value")
        response = response.copy()
        values = np.ascontiguousarray(values.copy())
        response.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "response", response)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_index", {n: j for j, n in enumerate(names)})

    @property
    def n(self) -> int:
        return self.response.shape[0]

    @property
    def n_bad(self) -> int:
        return int(self.response.sum())

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown variable {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index(name)]

    def design(self, variables: Sequence[str]) -> np.ndarray:
        """Columns for ``variables`` (no intercept), shape ``(N, len(variables))``."""
        idx = [self.index(v) for v in variables]
        return self.values[:, idx]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.names == other.names
            and np.array_equal(self.response, other.response)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None  # type: ignore[assignment]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update("\x1f".join(self.names).encode())
        h.update(self.response.astype("<f8").tobytes())
        h.update(self.values.astype("<f8").tobytes())
        return h.hexdigest()


def _open_text(source: PathOrStream, mode: str):
    if hasattr(source, "read") or hasattr(source, "write"):
        return source, False
    return open(source, mode, newline="", encoding="utf-8"), True


def load_dataset(source: PathOrStream, response_column: str) -> Dataset:
    """Read a CSV file (header required) into a :class:`Dataset`.

    Every column other than ``response_column`` becomes a predictor, in file
    order.
    """
    fh, owned = _open_text(source, "r")
    try:
        rows = list(csv.reader(fh))
    finally:
        if owned:
            fh.close()
    rows = [r for r in rows if r]
    if not rows:
        raise DataError("missing header")
    header = [h.strip() for h in rows[0]]
    if response_column not in header:
        raise DataError(f"response column {response_column!r} absent")
    if header.count(response_column) > 1:
        raise DataError(f"response column {response_column!r} appears twice")
    body = rows[1:]
    if not body:
        raise DataError("no data rows")
    width = len(header)
    parsed = np.empty((len(body), width))
    for i, row in enumerate(body, start=2):
        if len(row) != width:
            raise DataError(f"ragged row at line {i}: {len(row)} fields, expected {width}")
        for j, cell in enumerate(row):
            try:
                parsed[i - 2, j] = float(cell)
            except ValueError:
                raise DataError(
                    f"non-numeric cell {cell!r} at line {i}, column {header[j]!r}"
                ) from None
    r = header.index(response_column)
    y = parsed[:, r]
    if not np.all((y == 0) | (y == 1)):
        bad = y[~((y == 0) | (y == 1))][0]
        raise DataError(f"non-binary response value {bad!r}")
    keep = [j for j in range(width) if j != r]
    return Dataset(y, tuple(header[j] for j in keep), parsed[:, keep])


def write_dataset(data: Dataset, target: PathOrStream, response_column: str = "y") -> None:
    """Write ``data`` as CSV with the response first; reals use 17 significant digits."""
    if response_column in data.names:
        raise DataError(f"response column name {response_column!r} clashes with a variable")
    fh, owned = _open_text(target, "w")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([response_column, *data.names])
        for yi, row in zip(data.response, data.values):
            w.writerow([str(int(yi)), *(f"{v:.17g}" for v in row)])
    finally:
        if owned:
            fh.close()


def dataset_to_csv(data: Dataset, response_column: str = "y") -> str:
    buf = io.StringIO()
    write_dataset(data, buf, response_column)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Sign expectations
# ---------------------------------------------------------------------------


class Sign(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    NONE = "none"

    @classmethod
    def parse(cls, text: str) -> "Sign":
        t = text.strip().lower()
        aliases = {"+": "positive", "pos": "positive", "-": "negative", "neg": "negative",
                   "0": "none", "": "none", "noexpectation": "none", "no_expectation": "none"}
        t = aliases.get(t, t)
        try:
            return cls(t)
        except ValueError:
            raise DataError(f"invalid expected sign {text!r}") from None

    def admits(self, coefficient: float) -> bool:
        """True if ``coefficient`` is consistent with this expectation."""
        if self is Sign.POSITIVE:
            return coefficient > 0
        if self is Sign.NEGATIVE:
            return coefficient < 0
        return True


class SignExpectation(Mapping[str, Sign]):
    """Expected coefficient signs; variables not listed have no expectation."""

    def __init__(self, signs: Mapping[str, Union[Sign, str]] | None = None,
                 data: Dataset | None = None):
        parsed = {k: v if isinstance(v, Sign) else Sign.parse(v) for k, v in (signs or {}).items()}
        if data is not None:
            unknown = [k for k in parsed if k not in data.names]
            if unknown:
                raise DataError(f"sign expectation for unknown variable {unknown[0]!r}")
        self._signs = parsed

    def __getitem__(self, name: str) -> Sign:
        return self._signs.get(name, Sign.NONE)

    def __iter__(self):
        return iter(self._signs)

    def __len__(self) -> int:
        return len(self._signs)

    def __repr__(self) -> str:
        return f"SignExpectation({ {k: v.value for k, v in self._signs.items()} })"


def load_signs(source: PathOrStream, data: Dataset | None = None) -> SignExpectation:
    """Read ``name,expected_sign`` rows (an optional header row is skipped)."""
    fh, owned = _open_text(source, "r")
    try:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    finally:
        if owned:
            fh.close()
    if rows and [c.strip().lower() for c in rows[0][:2]] == ["name", "expected_sign"]:
        rows = rows[1:]
    signs: dict[str, Sign] = {}
    for row in rows:
        if len(row) != 2:
            raise DataError(f"sign row must have two fields: {row!r}")
        name = row[0].strip()
        if name in signs:
            raise DataError(f"duplicate sign entry for {name!r}")
        signs[name] = Sign.parse(row[1])
    return SignExpectation(signs, data)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


class DecisionMode(str, Enum):
    AUC_OR_MSE = "AucOrMse"
    AUC_AND_MSE = "AucAndMse"


_PROBABILITY_FIELDS = (
    "p_lr_I", "p_calib", "p_auc_I", "p_mse_I", "p_lr_T",
    "p_auc_T", "p_mse_T", "p_auc_E", "p_mse_E",
)


@dataclass(frozen=True)
class SelectionConfig:
    """Thresholds and engine controls for a selection run."""

    p_lr_I: float
    p_calib: float
    v_crit: float
    p_auc_I: float
    p_mse_I: float
    p_auc_T: float
    p_mse_T: float
    p_auc_E: float
    p_mse_E: float
    decision_mode: DecisionMode
    p_lr_T: float = 0.05
    max_steps: int = 20
    max_models_per_step: int = 20
    fit_tolerance: float = 1e-8
    fit_max_iterations: int = 50

    def __post_init__(self) -> None:
        try:
            mode = DecisionMode(self.decision_mode)
        except ValueError:
            raise ConfigError(f"invalid decision_mode {self.decision_mode!r}") from None
        object.__setattr__(self, "decision_mode", mode)
        for name in _PROBABILITY_FIELDS:
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0 < v < 1:
                raise ConfigError(f"value out of range: {name}={v!r} must lie in (0, 1)")
        if isinstance(self.v_crit, bool) or not isinstance(self.v_crit, (int, float)) \
                or not self.v_crit > 1:
            raise ConfigError(f"value out of range: v_crit={self.v_crit!r} must exceed 1")
        for name in ("max_steps", "max_models_per_step", "fit_max_iterations"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ConfigError(f"value out of range: {name}={v!r} must be a positive integer")
        tol = self.fit_tolerance
        if isinstance(tol, bool) or not isinstance(tol, (int, float)) or not tol > 0:
            raise ConfigError(f"value out of range: fit_tolerance={tol!r} must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["decision_mode"] = self.decision_mode.value
        return d

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def with_overrides(self, **kw) -> "SelectionConfig":
        return replace(self, **kw)


_BASE_1 = dict(p_lr_I=0.05, p_calib=0.50, v_crit=5.0, p_auc_I=0.05, p_mse_I=0.05,
               p_auc_T=0.025, p_mse_T=0.025, p_auc_E=0.05, p_mse_E=0.05)
_BASE_2 = dict(p_lr_I=0.05, p_calib=0.10, v_crit=5.0, p_auc_I=0.10, p_mse_I=0.10,
               p_auc_T=0.025, p_mse_T=0.025, p_auc_E=0.10, p_mse_E=0.10)

PROFILES: dict[str, SelectionConfig] = {
    "CSSLR1a": SelectionConfig(**_BASE_1, decision_mode=DecisionMode.AUC_OR_MSE),
    "CSSLR1b": SelectionConfig(**_BASE_1, decision_mode=DecisionMode.AUC_AND_MSE),
    "CSSLR2a": SelectionConfig(**_BASE_2, decision_mode=DecisionMode.AUC_OR_MSE),
    "CSSLR2b": SelectionConfig(**_BASE_2, decision_mode=DecisionMode.AUC_AND_MSE),
}


def profile(name: str) -> SelectionConfig:
    try:
        return PROFILES[name]
    except KeyError:
        raise ConfigError(f"unknown profile {name!r}; valid: {', '.join(PROFILES)}") from None


def config_from_mapping(raw: Mapping) -> SelectionConfig:
    """Build a config from a flat mapping; an optional ``profile`` key supplies defaults."""
    raw = dict(raw)
    known = {f.name for f in fields(SelectionConfig)}
    base: dict = {}
    if "profile" in raw:
        base = profile(str(raw.pop("profile"))).to_dict()
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r}")
    merged = {**base, **raw}
    missing = [f.name for f in fields(SelectionConfig)
               if f.name not in merged and f.default is MISSING]
    if missing:
        raise ConfigError(f"missing required key {missing[0]!r}")
    # YAML 1.1 reads exponent notation without a dot ("1e-8") as a string
    for name in (*_PROBABILITY_FIELDS, "v_crit", "fit_tolerance"):
        v = merged.get(name)
        if isinstance(v, str):
            try:
                merged[name] = float(v)
            except ValueError:
                pass
    for name in ("max_steps", "max_models_per_step", "fit_max_iterations"):
        v = merged.get(name)
        if isinstance(v, float) and v.is_integer():
            merged[name] = int(v)
    return SelectionConfig(**merged)


def parse_config(source: PathOrStream) -> SelectionConfig:
    """Parse a flat YAML (or JSON) key/value file into a validated config."""
    fh, owned = _open_text(source, "r")
    try:
        text = fh.read()
    finally:
        if owned:
            fh.close()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"unparsable config: {exc}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("unparsable config: expected a flat key/value mapping")
    for k, v in raw.items():
        if isinstance(v, (dict, list)):
            raise ConfigError(f"unparsable config: value of {k!r} must be a scalar")
    return config_from_mapping(raw)


def dump_config(config: SelectionConfig) -> str:
    """Render ``config`` in the format accepted by :func:`parse_config`."""
    lines = []
    for k, v in config.to_dict().items():
        lines.append(f"{k}: {json.dumps(v) if isinstance(v, str) else repr(v)}")
    return "\n".join(lines) + "\n"
