"""CSV ingestion, dataset recipes, train/test split and scaling."""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from .schema import Feature, FeatureSchema

BUILTIN_RECIPES = ("gmsc", "compas", "heart")


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class ColumnSpec:
    name: str  # canonical feature name
    source: str  # CSV header
    kind: str = "continuous"
    description: str = ""


@dataclass(frozen=True)
class Recipe:
    name: str
    target_column: str
    columns: tuple[ColumnSpec, ...]
    task: str = "binary_classification"
    drop_missing: bool = True
    truncations: dict = field(default_factory=dict)  # canonical name -> cap
    excluded_features: tuple[str, ...] = ()  # CSV headers that must never be used
    value_maps: dict = field(default_factory=dict)  # canonical name -> {raw: number}

    def __post_init__(self):
        kept = {c.source for c in self.columns} | {c.name for c in self.columns}
        clash = kept & set(self.excluded_features)
        if clash:
            raise DataError(f"recipe {self.name!r}: excluded columns are also kept: {sorted(clash)}")

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.columns]

    @classmethod
    def from_dict(cls, d: dict) -> "Recipe":
        cols = tuple(
            ColumnSpec(c["name"], c.get("source", c["name"]), c.get("kind", "continuous"), c.get("description", ""))
            for c in d["columns"]
        )
        return cls(
            name=d.get("name", "custom"),
            target_column=d["target_column"],
            columns=cols,
            task=d.get("task", "binary_classification"),
            drop_missing=d.get("drop_missing", True),
            truncations=dict(d.get("truncations", {})),
            excluded_features=tuple(d.get("excluded_features", ())),
            value_maps=dict(d.get("value_maps", {})),
        )


def load_recipe(name_or_path: str) -> Recipe:
    """A built-in recipe by name (gmsc, compas, heart) or a recipe JSON file."""
    if name_or_path in BUILTIN_RECIPES:
        text = resources.files("monogrove.data").joinpath(f"recipe_{name_or_path}.json").read_text("utf-8")
        return Recipe.from_dict(json.loads(text))
    path = Path(name_or_path)
    if not path.exists():
        raise DataError(f"unknown recipe {name_or_path!r}: not a built-in name or an existing file")
    return Recipe.from_dict(json.loads(path.read_text("utf-8")))


def builtin_constraints(name: str) -> dict:
    text = resources.files("monogrove.data").joinpath(f"spec_{name}.json").read_text("utf-8")
    return json.loads(text)


@dataclass(frozen=True)
class LoadReport:
    rows_read: int
    rows_kept: int
    rows_dropped_missing: int
    truncated: dict


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    schema: FeatureSchema
    task: str = "binary_classification"
    split_seed: int | None = None
    report: LoadReport | None = None

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[0] == 0:
            raise DataError("dataset must have at least one row")
        if self.X.shape[1] != len(self.schema):
            raise DataError("feature matrix does not match the schema")
        if self.y.shape != (self.X.shape[0],):
            raise DataError("target length does not match the feature matrix")
        if np.isnan(self.X).any() or np.isnan(self.y).any():
            raise DataError("dataset contains NaN")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def rows(self, idx) -> "Dataset":
        return replace(self, X=self.X[idx], y=self.y[idx])


def apply_recipe(df: pd.DataFrame, recipe: Recipe) -> tuple[pd.DataFrame, dict]:
    """Rename, map, exclude, drop missing and truncate; idempotent.

    Returns the frame (features in recipe order, then the target) and the
    number of values clipped per truncated feature.
    """
    df = df.copy()
    renames = {}
    for c in recipe.columns:
        if c.name not in df.columns:
            if c.source not in df.columns:
                raise DataError(f"column {c.source!r} (feature {c.name!r}) not found in data")
            renames[c.source] = c.name
    if recipe.target_column not in df.columns:
        raise DataError(f"target column {recipe.target_column!r} not found in data")
    df = df.rename(columns=renames)
    df = df.drop(columns=[c for c in recipe.excluded_features if c in df.columns])
    keep = recipe.feature_names + [recipe.target_column]
    df = df[keep]
    for name, mapping in recipe.value_maps.items():
        df[name] = df[name].map(lambda v, m=mapping: m.get(str(v), v) if isinstance(v, str) else v)
    for name in keep:
        converted = pd.to_numeric(df[name], errors="coerce")
        bad = converted.isna() & df[name].notna()
        if bad.any():
            raise DataError(f"non-numeric values in column {name!r}, e.g. {df[name][bad].iloc[0]!r}")
        df[name] = converted.astype(float)
    if recipe.drop_missing:
        df = df.dropna()
    elif df.isna().any().any():
        raise DataError("missing values present and drop_missing is off")
    clipped = {}
    for name, cap in recipe.truncations.items():
        over = df[name] > cap
        clipped[name] = int(over.sum())
        df.loc[over, name] = float(cap)
    return df.reset_index(drop=True), clipped


def infer_schema(X: np.ndarray, recipe: Recipe) -> FeatureSchema:
    feats = []
    for j, c in enumerate(recipe.columns):
        col = X[:, j]
        cap = recipe.truncations.get(c.name)
        if c.kind == "binary":
            if not np.isin(col, (0.0, 1.0)).all():
                raise DataError(f"binary feature {c.name!r} has values outside {{0, 1}}")
            feats.append(Feature(c.name, "binary", 0.0, 1.0))
            continue
        lo, hi = float(col.min()), float(col.max())
        if c.kind == "count":
            lo = min(0.0, lo)
            hi = float(cap) if cap is not None else hi
        if hi <= lo:
            hi = lo + 1.0
        feats.append(Feature(c.name, c.kind, lo, hi, None if cap is None else float(cap)))
    return FeatureSchema(tuple(feats))


def load_csv(path: str | Path, recipe: Recipe) -> Dataset:
    try:
        raw = pd.read_csv(path, encoding="utf-8")
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise DataError(f"malformed CSV {path}: {exc}") from exc
    df, clipped = apply_recipe(raw, recipe)
    if len(df) == 0:
        raise DataError("no rows left after preprocessing")
    X = df[recipe.feature_names].to_numpy(dtype=float)
    y = df[recipe.target_column].to_numpy(dtype=float)
    report = LoadReport(len(raw), len(df), len(raw) - len(df), clipped)
    return Dataset(X, y, infer_schema(X, recipe), recipe.task, report=report)


def fingerprint(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def split(ds: Dataset, fraction: float = 0.75, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Random train/test partition, deterministic in ``seed``."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must be in (0, 1)")
    n_train = int(round(fraction * ds.n))
    if n_train < 1 or n_train >= ds.n:
        raise DataError(f"cannot split {ds.n} rows at fraction {fraction}")
    perm = np.random.default_rng(seed).permutation(ds.n)
    train, test = ds.rows(np.sort(perm[:n_train])), ds.rows(np.sort(perm[n_train:]))
    return replace(train, split_seed=seed), replace(test, split_seed=seed)


@dataclass(frozen=True)
class Scaler:
    """Per-feature (mean, std) for scaled continuous columns; others pass through."""

    names: tuple[str, ...]
    stats: dict  # name -> (mean, std)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.array(X, dtype=float, copy=True)
        for j, n in enumerate(self.names):
            if n in self.stats:
                mu, sd = self.stats[n]
                X[..., j] = (X[..., j] - mu) / sd
        return X

    def inverse(self, X: np.ndarray) -> np.ndarray:
        X = np.array(X, dtype=float, copy=True)
        for j, n in enumerate(self.names):
            if n in self.stats:
                mu, sd = self.stats[n]
                X[..., j] = X[..., j] * sd + mu
        return X

    def value(self, name: str, raw: float) -> float:
        if name not in self.stats:
            return float(raw)
        mu, sd = self.stats[name]
        return (float(raw) - mu) / sd

    def raw(self, name: str, scaled: float) -> float:
        if name not in self.stats:
            return float(scaled)
        mu, sd = self.stats[name]
        return float(scaled) * sd + mu

    def to_dict(self) -> dict:
        return {"names": list(self.names), "stats": {k: list(v) for k, v in sorted(self.stats.items())}}

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(tuple(d["names"]), {k: tuple(v) for k, v in d["stats"].items()})

    @classmethod
    def identity(cls, names) -> "Scaler":
        return cls(tuple(names), {})


def standardize(train: Dataset, test: Dataset | None = None):
    """Scale continuous features by train statistics; counts and binaries stay raw.

    Returns ``(train', test', scaler)``; continuous domains in the schema are
    re-derived from the scaled training data.
    """
    stats = {}
    for j, f in enumerate(train.schema.features):
        if f.kind != "continuous":
            continue
        col = train.X[:, j]
        sd = float(col.std())
        if sd == 0.0:
            warnings.warn(f"feature {f.name!r} has zero variance; left unscaled", stacklevel=2)
            continue
        stats[f.name] = (float(col.mean()), sd)
    scaler = Scaler(tuple(train.schema.names), stats)
    Xtr = scaler.transform(train.X)
    feats = []
    for j, f in enumerate(train.schema.features):
        if f.name in stats:
            lo, hi = float(Xtr[:, j].min()), float(Xtr[:, j].max())
            feats.append(replace(f, lo=lo, hi=hi))
        else:
            feats.append(f)
    schema = FeatureSchema(tuple(feats))
    new_train = replace(train, X=Xtr, schema=schema)
    new_test = None if test is None else replace(test, X=scaler.transform(test.X), schema=schema)
    return new_train, new_test, scaler
