"""Tabular ingestion, special-value handling, quantile binarization and splits."""

from __future__ import annotations

import csv
import hashlib
import math
import re
import warnings
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

NUMERIC = "numeric"
CATEGORICAL = "categorical"
BINARY = "binary"
LABEL = "label"
KINDS = (NUMERIC, CATEGORICAL, BINARY, LABEL)

# feature operators
LE, GT, EQ, NE, NULL = "<=", ">", "=", "!=", "is-null"

DROP_IF_ALL = "drop-row-if-all"
NULL_CATEGORY = "null-category"
REPLACE_WITH = "replace-with"


class DatasetError(ValueError):
    """Malformed input data or schema."""


def _canon(token: str) -> str:
    """Canonical text for a category value, so ``-9`` and ``-9.0`` compare equal."""
    try:
        v = float(token)
    except ValueError:
        return token
    if math.isfinite(v) and v == int(v):
        return str(int(v))
    return repr(v)


# --------------------------------------------------------------------- schema
@dataclass(frozen=True)
class SpecialRule:
    sentinel: float
    action: str
    value: Optional[str] = None  # for replace-with: a number or "max+1"


@dataclass
class Schema:
    """How to read a CSV: column kinds, label recoding, missing values and special values."""

    label: str
    kinds: Dict[str, str] = field(default_factory=dict)
    label_map: Optional[Dict[str, int]] = None
    label_rule: Optional[str] = None  # e.g. ">0"
    missing: Tuple[str, ...] = ("",)
    column_missing: Dict[str, Tuple[str, ...]] = field(default_factory=dict)
    drop_columns: Tuple[str, ...] = ()
    drop_rows_missing: Tuple[str, ...] = ()
    special: Tuple[SpecialRule, ...] = ()
    clip_upper: Dict[str, float] = field(default_factory=dict)
    n_bins: int = 10
    name: str = ""
    data: Optional[str] = None

    def map_label(self, token: str) -> int:
        tok = token.strip()
        if self.label_rule is not None:
            m = re.fullmatch(r"\s*(>=|>|<=|<|==|=)\s*(-?[0-9.eE+-]+)\s*", self.label_rule)
            if not m:
                raise DatasetError(f"bad label rule {self.label_rule!r}")
            op, thr = m.group(1), float(m.group(2))
            v = float(tok)  # ValueError handled by caller
            return int({">": v > thr, ">=": v >= thr, "<": v < thr, "<=": v <= thr,
                        "=": v == thr, "==": v == thr}[op])
        mapping = self.label_map if self.label_map is not None else {"0": 0, "1": 1}
        key = _canon(tok)
        if key not in mapping:
            raise KeyError(tok)
        return mapping[key]


def _split_list(v: str) -> Tuple[str, ...]:
    return tuple(s.strip() for s in v.split(",") if s.strip() != "")


def parse_config(text: str) -> Schema:
    """Parse a ``key = value`` schema file.

    Lists are comma separated.  Special values use ``special.<sentinel> = action[, action]``
    with actions ``drop-row-if-all``, ``null-category`` and ``replace-with(<number>|max+1)``.
    """
    kv: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DatasetError(f"config line {lineno}: expected 'key = value'")
        k, v = line.split("=", 1)
        kv[k.strip()] = v.strip()
    if "label" not in kv:
        raise DatasetError("config has no 'label' entry")
    kinds: Dict[str, str] = {}
    for kind in (NUMERIC, CATEGORICAL, BINARY):
        for col in _split_list(kv.get(kind, "")):
            kinds[col] = kind
    label_map = None
    if "label_map" in kv:
        label_map = {}
        for item in _split_list(kv["label_map"]):
            src, _, dst = item.rpartition(":")
            if dst.strip() not in ("0", "1"):
                raise DatasetError(f"label_map target must be 0 or 1, got {dst!r}")
            label_map[_canon(src.strip())] = int(dst)
    special: List[SpecialRule] = []
    clip: Dict[str, float] = {}
    col_missing: Dict[str, Tuple[str, ...]] = {}
    for k, v in kv.items():
        if k.startswith("special."):
            sentinel = float(k[len("special."):])
            for act in _split_list(v):
                m = re.fullmatch(r"replace-with\((.+)\)", act)
                if m:
                    special.append(SpecialRule(sentinel, REPLACE_WITH, m.group(1).strip()))
                elif act in (DROP_IF_ALL, NULL_CATEGORY):
                    special.append(SpecialRule(sentinel, act))
                else:
                    raise DatasetError(f"unknown special-value action {act!r}")
        elif k.startswith("clip_upper."):
            clip[k[len("clip_upper."):]] = float(v)
        elif k.startswith("missing."):
            col_missing[k[len("missing."):]] = _split_list(v) + ("",)
    missing = ("",) + _split_list(kv.get("missing", ""))
    return Schema(
        label=kv["label"],
        kinds=kinds,
        label_map=label_map,
        label_rule=kv.get("label_rule"),
        missing=missing,
        column_missing=col_missing,
        drop_columns=_split_list(kv.get("drop_columns", "")),
        drop_rows_missing=_split_list(kv.get("drop_rows_missing", "")),
        special=tuple(special),
        clip_upper=clip,
        n_bins=int(kv.get("n_bins", 10)),
        name=kv.get("name", ""),
        data=kv.get("data"),
    )


def load_config(path) -> Schema:
    return parse_config(Path(path).read_text(encoding="utf-8"))


PRESETS = ("heart", "liver", "transfusion", "fico")


def preset(name: str) -> Schema:
    """Named schema shipped with the package."""
    if name not in PRESETS:
        raise DatasetError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("drrules").joinpath("data", f"{name}.cfg").read_text(encoding="utf-8")
    return parse_config(text)


def bundled_data(name: str) -> Optional[Path]:
    """Path of a bundled CSV, or None when the preset ships without data."""
    schema = preset(name)
    if schema.data is None:
        return None
    return Path(str(resources.files("drrules").joinpath("data", schema.data)))


# ------------------------------------------------------------------ raw table
@dataclass
class ColumnSpec:
    name: str
    kind: str
    missing: Tuple[str, ...] = ("",)


@dataclass
class RawTable:
    """Column-major typed table.

    Numeric columns are float arrays with NaN for null; categorical and binary columns
    are object arrays of canonical strings with None for null.  ``y`` holds the label.
    """

    columns: List[ColumnSpec]
    data: Dict[str, np.ndarray]
    y: np.ndarray
    label: str

    @property
    def n_rows(self) -> int:
        return int(self.y.size)

    @property
    def feature_columns(self) -> List[ColumnSpec]:
        return [c for c in self.columns if c.kind != LABEL]

    @property
    def rows(self) -> List[tuple]:
        cols = self.feature_columns
        return [tuple(self.data[c.name][i] for c in cols) + (int(self.y[i]),) for i in range(self.n_rows)]

    def take(self, idx) -> "RawTable":
        idx = np.asarray(idx)
        return RawTable(list(self.columns), {k: v[idx] for k, v in self.data.items()},
                        self.y[idx], self.label)


def _infer_kind(values: Sequence[Optional[str]]) -> str:
    present = [v for v in values if v is not None]
    try:
        nums = {float(v) for v in present}
    except ValueError:
        return CATEGORICAL
    if nums <= {0.0, 1.0}:
        return BINARY
    return NUMERIC


def load_csv(path, schema: Schema) -> RawTable:
    """Read a header-row CSV into a :class:`RawTable` under ``schema``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with open(path, newline="", encoding="utf-8") as fh:
        try:
            records = list(csv.reader(fh))
        except csv.Error as exc:
            raise DatasetError(f"{path}: CSV parse failure: {exc}") from None
    if not records:
        raise DatasetError(f"{path}: empty table (no header)")
    header = [h.strip() for h in records[0]]
    body = [r for r in records[1:] if any(c.strip() for c in r)]
    if not body:
        raise DatasetError(f"{path}: empty table")
    if schema.label not in header:
        raise DatasetError(f"{path}: label column {schema.label!r} not in header")
    for k, r in enumerate(body):
        if len(r) != len(header):
            raise DatasetError(f"{path}: row {k + 1}: expected {len(header)} fields, got {len(r)}")

    li = header.index(schema.label)
    y = np.empty(len(body), dtype=np.int8)
    for k, r in enumerate(body):
        try:
            y[k] = schema.map_label(r[li])
        except (KeyError, ValueError):
            raise DatasetError(f"{path}: row {k + 1}: unknown label value {r[li].strip()!r}") from None

    columns: List[ColumnSpec] = []
    data: Dict[str, np.ndarray] = {}
    for j, name in enumerate(header):
        if j == li or name in schema.drop_columns:
            continue
        miss = set(schema.column_missing.get(name, schema.missing))
        raw = [r[j].strip() for r in body]
        vals = [None if v in miss else v for v in raw]
        kind = schema.kinds.get(name) or _infer_kind(vals)
        if kind == NUMERIC:
            arr = np.empty(len(vals))
            for k, v in enumerate(vals):
                if v is None:
                    arr[k] = np.nan
                    continue
                try:
                    arr[k] = float(v)
                except ValueError:
                    raise DatasetError(
                        f"{path}: row {k + 1}, column {name!r}: cannot parse {v!r} as a number"
                    ) from None
        elif kind in (CATEGORICAL, BINARY):
            arr = np.array([None if v is None else _canon(v) for v in vals], dtype=object)
        else:
            raise DatasetError(f"column {name!r}: unknown kind {kind!r}")
        columns.append(ColumnSpec(name, kind, tuple(sorted(miss))))
        data[name] = arr
    columns.append(ColumnSpec(schema.label, LABEL))
    table = RawTable(columns, data, y, schema.label)
    if schema.drop_rows_missing:
        keep = np.ones(table.n_rows, dtype=bool)
        for name in schema.drop_rows_missing:
            if name in data:
                keep &= ~_null_mask(data[name])
        table = table.take(np.flatnonzero(keep))
    for name, kind in schema.kinds.items():
        if name not in data and name != schema.label and name not in schema.drop_columns:
            raise DatasetError(f"{path}: schema column {name!r} not in header")
    return table


def _null_mask(arr: np.ndarray) -> np.ndarray:
    if arr.dtype == object:
        return np.array([v is None for v in arr], dtype=bool)
    return np.isnan(arr)


def _numeric_view(arr: np.ndarray) -> np.ndarray:
    """Float view of a column; non-numeric categories become NaN."""
    if arr.dtype != object:
        return arr
    out = np.full(arr.size, np.nan)
    for k, v in enumerate(arr):
        if v is None:
            continue
        try:
            out[k] = float(v)
        except ValueError:
            pass
    return out


# ------------------------------------------------------------- special values
def apply_special_values(table: RawTable, policy: Sequence[SpecialRule],
                         clip_upper: Optional[Dict[str, float]] = None) -> RawTable:
    """Apply sentinel rules in the order drop-row-if-all, replace-with, null-category,
    then upper clipping.  Sentinels absent from the data are no-ops."""
    policy = list(policy)
    clip_upper = dict(clip_upper or {})
    if not policy and not clip_upper:
        return table
    cols = [c.name for c in table.feature_columns]
    views = {c: _numeric_view(table.data[c]) for c in cols}

    keep = np.ones(table.n_rows, dtype=bool)
    for rule in policy:
        if rule.action == DROP_IF_ALL and cols:
            allhit = np.ones(table.n_rows, dtype=bool)
            for c in cols:
                allhit &= views[c] == rule.sentinel
            keep &= ~allhit
    data = {}
    for c in cols:
        arr = table.data[c][keep].copy()
        num = views[c][keep].copy()
        is_obj = arr.dtype == object
        for rule in policy:
            hit = num == rule.sentinel
            if not hit.any():
                continue
            if rule.action == REPLACE_WITH:
                sentinels = [r.sentinel for r in policy]
                ok = ~np.isin(num, sentinels) & ~np.isnan(num)
                if rule.value == "max+1":
                    if not ok.any():
                        continue
                    new = float(np.max(num[ok])) + 1.0
                else:
                    new = float(rule.value)
                num[hit] = new
                if is_obj:
                    arr[hit] = _canon(repr(new))
                else:
                    arr[hit] = new
            elif rule.action == NULL_CATEGORY:
                num[hit] = np.nan
                arr[hit] = None if is_obj else np.nan
        if c in clip_upper:
            over = num > clip_upper[c]
            num[over] = clip_upper[c]
            if is_obj:
                arr[over] = _canon(repr(float(clip_upper[c])))
            else:
                arr[over] = clip_upper[c]
        data[c] = arr
    return RawTable(list(table.columns), data, table.y[keep], table.label)


def load_dataset(path, schema: Schema) -> RawTable:
    """``load_csv`` followed by the schema's special-value policy."""
    t = load_csv(path, schema)
    return apply_special_values(t, schema.special, schema.clip_upper)


# --------------------------------------------------------------- binarization
@dataclass(frozen=True)
class FeatureMeta:
    source: str
    op: str
    value: object = None  # threshold (float) or category (str)

    @property
    def name(self) -> str:
        if self.op == NULL:
            return f"{self.source} is null"
        v = f"{self.value:g}" if isinstance(self.value, float) else str(self.value)
        return f"{self.source}{self.op}{v}"

    def to_dict(self) -> dict:
        return {"source": self.source, "op": self.op, "value": self.value}

    @staticmethod
    def from_dict(d: dict) -> "FeatureMeta":
        v = d.get("value")
        if d["op"] in (LE, GT):
            v = float(v)
        return FeatureMeta(d["source"], d["op"], v)


@dataclass(frozen=True)
class BinaryDataset:
    """Immutable N x d binary design matrix with labels and per-column provenance."""

    X: np.ndarray
    y: np.ndarray
    feature_meta: Tuple[FeatureMeta, ...]
    name: str = ""

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.uint8)
        y = np.ascontiguousarray(self.y, dtype=np.int8).ravel()
        if X.ndim != 2 or X.shape[0] != y.size:
            raise DatasetError(f"X has shape {X.shape} but y has {y.size} entries")
        if X.shape[1] != len(self.feature_meta):
            raise DatasetError("feature_meta length must equal the number of columns")
        if np.any(X > 1) or np.any((y != 0) & (y != 1)):
            raise DatasetError("X and y must be 0/1")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_meta", tuple(self.feature_meta))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def feature_names(self) -> List[str]:
        return [m.name for m in self.feature_meta]

    def subset(self, idx) -> "BinaryDataset":
        idx = np.asarray(idx, dtype=int)
        return BinaryDataset(self.X[idx], self.y[idx], self.feature_meta, self.name)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.asarray(self.X.shape, dtype=np.int64).tobytes())
        h.update(self.X.tobytes())
        h.update(self.y.tobytes())
        h.update("\x1f".join(self.feature_names).encode())
        return h.hexdigest()[:16]


def nearest_rank_thresholds(values: np.ndarray, n_bins: int) -> List[float]:
    """Interior ``q/n_bins`` quantiles by nearest rank, de-duplicated, below the max.

    >>> nearest_rank_thresholds(np.arange(1, 11), 10)
    [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]
    """
    v = np.sort(np.asarray(values, dtype=float))
    v = v[~np.isnan(v)]
    if v.size == 0:
        return []
    out: List[float] = []
    for q in range(1, n_bins):
        rank = math.ceil(q * v.size / n_bins)
        t = float(v[max(rank, 1) - 1])
        if t < v[-1] and (not out or t != out[-1]):
            out.append(t)
    return out


def fit_binarizer(table: RawTable, n_bins: int = 10) -> Tuple[FeatureMeta, ...]:
    """Derive the binary feature list from ``table``."""
    if n_bins < 1:
        raise DatasetError("n_bins must be at least 1")
    meta: List[FeatureMeta] = []
    for col in table.feature_columns:
        arr = table.data[col.name]
        nulls = _null_mask(arr)
        if nulls.all():
            warnings.warn(f"column {col.name!r} is entirely missing; dropped", stacklevel=2)
            continue
        if col.kind == NUMERIC:
            for t in nearest_rank_thresholds(arr[~nulls], n_bins):
                meta.append(FeatureMeta(col.name, LE, t))
                meta.append(FeatureMeta(col.name, GT, t))
        else:
            cats = sorted({v for v in arr if v is not None}, key=_cat_key)
            if col.kind == BINARY:
                # one indicator and its negation; prefer "1" as the positive value
                cats = ["1"] if "1" in cats else cats[-1:]
            for cat in cats:
                meta.append(FeatureMeta(col.name, EQ, cat))
                meta.append(FeatureMeta(col.name, NE, cat))
        if nulls.any():
            meta.append(FeatureMeta(col.name, NULL))
    return tuple(meta)


def _cat_key(v: str):
    try:
        return (0, float(v), v)
    except ValueError:
        return (1, 0.0, v)


def apply_binarization(table: RawTable, meta: Sequence[FeatureMeta], name: str = "") -> BinaryDataset:
    """Binarize ``table`` with an existing feature list (e.g. a model's training features).

    Null source values make every comparison false; the is-null indicator is 1.
    """
    N = table.n_rows
    X = np.zeros((N, len(meta)), dtype=np.uint8)
    for j, m in enumerate(meta):
        if m.source not in table.data:
            raise DatasetError(f"column {m.source!r} needed by feature {m.name!r} is absent")
        arr = table.data[m.source]
        nulls = _null_mask(arr)
        if m.op == NULL:
            X[:, j] = nulls
            continue
        if m.op in (LE, GT):
            num = _numeric_view(arr) if arr.dtype == object else arr
            with np.errstate(invalid="ignore"):
                col = num <= m.value if m.op == LE else num > m.value
            col &= ~np.isnan(num)
        else:
            eq = np.array([v == m.value for v in arr], dtype=bool)
            col = eq if m.op == EQ else (~eq & ~nulls)
        X[:, j] = col
    return BinaryDataset(X, table.y.copy(), tuple(meta), name)


def binarize(table: RawTable, n_bins: int = 10, name: str = "") -> BinaryDataset:
    """Quantile-threshold numeric columns and one-hot categorical ones (with negations)."""
    return apply_binarization(table, fit_binarizer(table, n_bins), name)


# --------------------------------------------------------------------- splits
def split(ds: BinaryDataset, train_frac: float, seed) -> Tuple[BinaryDataset, BinaryDataset]:
    """Uniform random partition with ``floor(train_frac * N)`` training rows (at least one
    row on each side)."""
    idx_tr, idx_te = split_indices(ds.n, train_frac, seed)
    return ds.subset(idx_tr), ds.subset(idx_te)


def split_indices(N: int, train_frac: float, seed) -> Tuple[np.ndarray, np.ndarray]:
    if not 0.0 < train_frac < 1.0:
        raise DatasetError("train_frac must lie strictly between 0 and 1")
    if N < 2:
        raise DatasetError("need at least 2 rows to split")
    n_tr = min(max(int(math.floor(train_frac * N)), 1), N - 1)
    perm = np.random.default_rng(seed).permutation(N)
    return np.sort(perm[:n_tr]), np.sort(perm[n_tr:])


def empirical_pmf(N: int) -> np.ndarray:
    """Uniform weights ``1/N``."""
    if N < 1:
        raise DatasetError("empirical pmf needs N >= 1")
    return np.full(N, 1.0 / N)


def check_pmf(p: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > tol:
        raise DatasetError("weights must be nonnegative and sum to 1")
    return p


def export_csv(ds: BinaryDataset, path, label: str = "label") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ds.feature_names + [label])
        for row, yi in zip(ds.X, ds.y):
            w.writerow([int(v) for v in row] + [int(yi)])


def load_binary_csv(path, label: str = "label") -> BinaryDataset:
    """Read a 0/1 CSV (as written by :func:`export_csv`) without re-binarizing."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise DatasetError(f"{path}: empty table")
    header = rows[0]
    li = header.index(label) if label in header else len(header) - 1
    body = np.array([[int(v) for v in r] for r in rows[1:]], dtype=np.int64)
    y = body[:, li]
    X = np.delete(body, li, axis=1)
    names = [h for k, h in enumerate(header) if k != li]
    meta = tuple(FeatureMeta(n, EQ, "1") for n in names)
    return BinaryDataset(X, y, meta, Path(path).stem)


def load_named(name_or_path, preset_name: Optional[str] = None, schema: Optional[Schema] = None,
               n_bins: Optional[int] = None) -> Tuple[RawTable, Schema]:
    """Resolve a bundled dataset name or a CSV path together with its schema."""
    if schema is None:
        pname = preset_name or (name_or_path if name_or_path in PRESETS else None)
        if pname is None:
            raise DatasetError("no schema: pass a preset or a config file")
        schema = preset(pname)
    if n_bins is not None:
        schema = replace(schema, n_bins=n_bins)
    path = name_or_path
    if name_or_path in PRESETS:
        path = bundled_data(name_or_path)
        if path is None:
            raise DatasetError(f"dataset {name_or_path!r} is not bundled; pass its CSV with --data")
    return load_dataset(path, schema), schema
