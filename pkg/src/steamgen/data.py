"""Dataset model, schema handling, CSV/schema I/O, scaling, splitting and seeding.

A :class:`TreatmentDataset` holds covariates ``X`` (n x d), a binary treatment
``W`` and an outcome ``Y`` together with the column schema that names them.
Every randomised routine in the package takes an :class:`RngSeed`, a root
integer plus a labelled derivation path, so each component owns an independent
deterministic stream.
"""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

CONTINUOUS = "continuous"
BINARY = "binary"
KINDS = (CONTINUOUS, BINARY)

COVARIATE = "covariate"
TREATMENT = "treatment"
OUTCOME = "outcome"
ROLES = (COVARIATE, TREATMENT, OUTCOME)


class SchemaError(ValueError):
    """Schema is malformed or does not match a file."""


class ValidationError(ValueError):
    """Data violates a dataset invariant."""


class ParseError(ValueError):
    """A CSV cell could not be parsed."""


@dataclass(frozen=True)
class Column:
    name: str
    kind: str = CONTINUOUS
    role: str = COVARIATE

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise SchemaError("column names must be non-empty strings")
        if self.kind not in KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.role not in ROLES:
            raise SchemaError(f"column {self.name!r}: unknown role {self.role!r}")


def validate_schema(columns: Sequence[Column]) -> tuple[Column, ...]:
    columns = tuple(columns)
    names = [c.name for c in columns]
    if len(set(names)) != len(names):
        raise SchemaError("column names must be unique")
    treat = [c for c in columns if c.role == TREATMENT]
    out = [c for c in columns if c.role == OUTCOME]
    if len(treat) != 1:
        raise SchemaError(f"exactly one treatment column required, got {len(treat)}")
    if treat[0].kind != BINARY:
        raise SchemaError(f"treatment column {treat[0].name!r} must be binary")
    if len(out) != 1:
        raise SchemaError(f"exactly one outcome column required, got {len(out)}")
    return columns


def default_schema(d: int, binary_outcome: bool = False) -> tuple[Column, ...]:
    """Schema ``x1..xd, w, y`` with continuous covariates."""
    cols = [Column(f"x{j + 1}") for j in range(d)]
    cols.append(Column("w", BINARY, TREATMENT))
    cols.append(Column("y", BINARY if binary_outcome else CONTINUOUS, OUTCOME))
    return tuple(cols)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TreatmentDataset:
    schema: tuple[Column, ...]
    X: np.ndarray
    W: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        schema = validate_schema(self.schema)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        W = np.asarray(self.W, dtype=float).ravel()
        Y = np.asarray(self.Y, dtype=float).ravel()
        cov = [c for c in schema if c.role == COVARIATE]
        if X.shape[1] != len(cov):
            raise ValidationError(
                f"X has {X.shape[1]} columns but schema lists {len(cov)} covariates")
        n = X.shape[0]
        if n < 1:
            raise ValidationError("empty dataset")
        if W.shape[0] != n or Y.shape[0] != n:
            raise ValidationError("X, W and Y must have the same number of rows")
        for name, block in (("X", X), ("W", W), ("Y", Y)):
            if not np.all(np.isfinite(block)):
                raise ValidationError(f"non-finite values in {name}")
        bad = np.flatnonzero((W != 0) & (W != 1))
        if bad.size:
            raise ValidationError(f"treatment values must be 0/1 (row {int(bad[0])})")
        for j, c in enumerate(cov):
            if c.kind == BINARY:
                bad = np.flatnonzero((X[:, j] != 0) & (X[:, j] != 1))
                if bad.size:
                    raise ValidationError(
                        f"binary covariate {c.name!r} has non-0/1 value (row {int(bad[0])})")
        if self.outcome_column.kind == BINARY:
            if np.any((Y != 0) & (Y != 1)):
                raise ValidationError("binary outcome must be 0/1")
        object.__setattr__(self, "schema", schema)
        object.__setattr__(self, "X", _readonly(X))
        object.__setattr__(self, "W", _readonly(W))
        object.__setattr__(self, "Y", _readonly(Y))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def covariates(self) -> tuple[Column, ...]:
        return tuple(c for c in self.schema if c.role == COVARIATE)

    @property
    def covariate_kinds(self) -> tuple[str, ...]:
        return tuple(c.kind for c in self.covariates)

    @property
    def treatment_column(self) -> Column:
        return next(c for c in self.schema if c.role == TREATMENT)

    @property
    def outcome_column(self) -> Column:
        return next(c for c in self.schema if c.role == OUTCOME)

    @property
    def binary_outcome(self) -> bool:
        return self.outcome_column.kind == BINARY

    def table(self) -> np.ndarray:
        """Full table in schema column order."""
        cols, j = [], 0
        for c in self.schema:
            if c.role == COVARIATE:
                cols.append(self.X[:, j])
                j += 1
            elif c.role == TREATMENT:
                cols.append(self.W)
            else:
                cols.append(self.Y)
        return np.column_stack(cols)

    @classmethod
    def from_table(cls, table: np.ndarray, schema: Sequence[Column]) -> "TreatmentDataset":
        schema = validate_schema(schema)
        table = np.asarray(table, dtype=float)
        if table.ndim != 2 or table.shape[1] != len(schema):
            raise ValidationError("table width does not match schema")
        cov = [j for j, c in enumerate(schema) if c.role == COVARIATE]
        t = next(j for j, c in enumerate(schema) if c.role == TREATMENT)
        o = next(j for j, c in enumerate(schema) if c.role == OUTCOME)
        return cls(schema, table[:, cov], table[:, t], table[:, o])

    def subset(self, idx) -> "TreatmentDataset":
        idx = np.asarray(idx)
        return TreatmentDataset(self.schema, self.X[idx], self.W[idx], self.Y[idx])

    def replace(self, **kw) -> "TreatmentDataset":
        return replace(self, **kw)

    def equals(self, other: "TreatmentDataset") -> bool:
        return (self.schema == other.schema and np.array_equal(self.X, other.X)
                and np.array_equal(self.W, other.W) and np.array_equal(self.Y, other.Y))


# ---------------------------------------------------------------------------
# Seeds


@dataclass(frozen=True)
class RngSeed:
    """Root seed plus an ordered path of string labels.

    ``RngSeed(7).derive("qx").derive("fit")`` names a stream that differs from
    ``RngSeed(7).derive("fit").derive("qx")``.
    """

    root: int
    path: tuple[str, ...] = ()

    def __post_init__(self):
        if not 0 <= int(self.root) < 2**64:
            raise ValueError("root seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "root", int(self.root))
        object.__setattr__(self, "path", tuple(str(p) for p in self.path))

    def derive(self, *labels) -> "RngSeed":
        return RngSeed(self.root, self.path + tuple(str(lab) for lab in labels))

    def entropy(self) -> int:
        h = hashlib.sha256()
        h.update(self.root.to_bytes(8, "little"))
        for label in self.path:
            b = label.encode()
            h.update(len(b).to_bytes(4, "little"))
            h.update(b)
        return int.from_bytes(h.digest()[:16], "little")

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(self.entropy())

    def __str__(self):
        return "/".join([str(self.root), *self.path])


def as_seed(seed) -> RngSeed:
    if isinstance(seed, RngSeed):
        return seed
    if seed is None:
        return RngSeed(0)
    return RngSeed(int(seed))


# ---------------------------------------------------------------------------
# Schema and CSV files


def save_schema(schema: Sequence[Column], path, metadata: dict | None = None) -> None:
    rows = [{"name": c.name, "kind": c.kind, "role": c.role} for c in schema]
    doc = {"columns": rows}
    if metadata:
        doc["metadata"] = metadata
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=False))


def load_schema(path) -> tuple[Column, ...]:
    raw = yaml.safe_load(Path(path).read_text())
    if isinstance(raw, dict):
        raw = raw.get("columns")
    if not isinstance(raw, list):
        raise SchemaError(f"{path}: expected a list of columns")
    cols = []
    for item in raw:
        if not isinstance(item, dict) or set(item) - {"name", "kind", "role"}:
            raise SchemaError(f"{path}: bad column entry {item!r}")
        cols.append(Column(str(item.get("name", "")), item.get("kind", CONTINUOUS),
                           item.get("role", COVARIATE)))
    return validate_schema(cols)


def format_float(v: float) -> str:
    return format(float(v), ".17g")


def save_csv(ds: TreatmentDataset, path, comments: Sequence[str] = ()) -> None:
    """Write ``ds`` as CSV; ``comments`` become leading ``#`` lines."""
    with open(path, "w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([c.name for c in ds.schema])
        for row in ds.table():
            w.writerow([format_float(v) for v in row])


def load_csv(path, schema: Sequence[Column]) -> TreatmentDataset:
    schema = validate_schema(schema)
    with open(path, newline="") as fh:
        # leading '#' lines carry provenance metadata
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: missing header row") from None
        missing = [c.name for c in schema if c.name not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        pos = [header.index(c.name) for c in schema]
        rows = []
        for lineno, raw in enumerate(reader, start=1):
            if not raw or all(not s.strip() for s in raw):
                continue
            vals = []
            for c, p in zip(schema, pos):
                try:
                    v = float(raw[p])
                except (ValueError, IndexError):
                    cell = raw[p] if p < len(raw) else ""
                    raise ParseError(
                        f"{path}: row {lineno}, column {c.name!r}: cannot parse {cell!r}") from None
                if c.kind == BINARY and v not in (0.0, 1.0):
                    raise ValidationError(
                        f"{path}: row {lineno}, column {c.name!r}: expected 0/1, got {raw[p]!r}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise ValidationError("empty dataset")
    return TreatmentDataset.from_table(np.array(rows), schema)


# ---------------------------------------------------------------------------
# Standardisation


@dataclass(frozen=True, eq=False)
class Scaler:
    """Per-column affine map ``(v - mean) / scale``."""

    mean: np.ndarray
    scale: np.ndarray
    outcome: tuple[float, float] | None = None

    @classmethod
    def fit(cls, X: np.ndarray, kinds: Sequence[str] | None = None) -> "Scaler":
        X = np.asarray(X, dtype=float)
        mean = X.mean(axis=0)
        sd = X.std(axis=0)
        # spread at rounding level counts as a constant column
        scale = np.where(sd > 1e-12 * (1.0 + np.abs(mean)), sd, 1.0)
        if kinds is not None:
            binary = np.array([k == BINARY for k in kinds], dtype=bool)
            mean = np.where(binary, 0.0, mean)
            scale = np.where(binary, 1.0, scale)
        return cls(mean, scale)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def inverse_transform(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.scale + self.mean

    def transform_dataset(self, ds: TreatmentDataset) -> TreatmentDataset:
        Y = ds.Y
        if self.outcome is not None:
            Y = (Y - self.outcome[0]) / self.outcome[1]
        return TreatmentDataset(ds.schema, self.transform(ds.X), ds.W, Y)

    def inverse_dataset(self, ds: TreatmentDataset) -> TreatmentDataset:
        Y = ds.Y
        if self.outcome is not None:
            Y = Y * self.outcome[1] + self.outcome[0]
        return TreatmentDataset(ds.schema, self.inverse_transform(ds.X), ds.W, Y)


def standardize(ds: TreatmentDataset, outcome: bool = False) -> tuple[TreatmentDataset, Scaler]:
    """Scale continuous covariates to mean 0 and population sd 1.

    Binary covariates and ``W`` are never touched; ``Y`` only when ``outcome``
    is set and the outcome is continuous.
    """
    scaler = Scaler.fit(ds.X, ds.covariate_kinds)
    if outcome and not ds.binary_outcome:
        sd = float(ds.Y.std())
        scaler = replace(scaler, outcome=(float(ds.Y.mean()), sd if sd > 0 else 1.0))
    return scaler.transform_dataset(ds), scaler


def split(ds: TreatmentDataset, fraction: float, seed) -> tuple[TreatmentDataset, TreatmentDataset]:
    """Random row partition; the first part has ``floor(n * fraction)`` rows."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    k = math.floor(ds.n * fraction)
    if k < 1 or k >= ds.n:
        raise ValueError(f"fraction {fraction} leaves an empty part for n={ds.n}")
    perm = as_seed(seed).generator().permutation(ds.n)
    return ds.subset(np.sort(perm[:k])), ds.subset(np.sort(perm[k:]))


def concat(parts: Iterable[TreatmentDataset]) -> TreatmentDataset:
    parts = list(parts)
    return TreatmentDataset(parts[0].schema, np.vstack([p.X for p in parts]),
                            np.concatenate([p.W for p in parts]),
                            np.concatenate([p.Y for p in parts]))
