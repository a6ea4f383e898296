"""Rating tables, design matrices and CSV ingestion.

A ratings file is long format, one row per (rater, item) rating::

    rater_id,item_id,y,x1,...,xp,z1,...,zq

Covariate columns are recognised by their ``x``/``z`` prefix followed by an
integer.  With no ``z`` columns the design falls back to a varying intercept.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "RatingsError",
    "RatingsTable",
    "DesignBundle",
    "load_ratings",
    "build_design",
    "write_ratings",
]


class RatingsError(ValueError):
    """Raised for malformed or inconsistent rating data."""


@dataclass(frozen=True)
class RatingsTable:
    """Validated long-format ratings.

    ``rater`` holds dense 0-based rater indices; ``rater_ids`` maps them back
    to the identifiers found in the file.  ``item`` keeps the original item
    identifiers.
    """

    rater: np.ndarray
    item: np.ndarray
    y: np.ndarray
    x: np.ndarray  # (n, p)
    z: np.ndarray  # (n, q); q == 0 means "intercept only" was implied
    rater_ids: np.ndarray
    multiple_ratings: bool = False

    def __post_init__(self):
        _validate(self)
        for arr in (self.rater, self.item, self.y, self.x, self.z, self.rater_ids):
            arr.setflags(write=False)

    @property
    def n_obs(self) -> int:
        return int(self.y.shape[0])

    @property
    def n_raters(self) -> int:
        return int(self.rater_ids.shape[0])

    @property
    def p(self) -> int:
        return int(self.x.shape[1])

    @property
    def q(self) -> int:
        return int(self.z.shape[1])

    @classmethod
    def from_arrays(cls, rater_ids, item, y, x=None, z=None, multiple_ratings=False):
        """Build a table from raw arrays, re-indexing raters densely."""
        rater_ids = np.asarray(rater_ids)
        y = np.asarray(y, dtype=float)
        n = y.shape[0]
        if n == 0:
            raise RatingsError("no observations")
        x = np.zeros((n, 0)) if x is None else np.asarray(x, dtype=float).reshape(n, -1)
        z = np.zeros((n, 0)) if z is None else np.asarray(z, dtype=float).reshape(n, -1)
        uniq, dense = np.unique(rater_ids, return_inverse=True)
        return cls(
            rater=dense.astype(np.int64),
            item=np.asarray(item, dtype=np.int64),
            y=y,
            x=x,
            z=z,
            rater_ids=uniq.astype(np.int64),
            multiple_ratings=multiple_ratings,
        )


def _validate(t: RatingsTable) -> None:
    n = t.y.shape[0]
    if n == 0:
        raise RatingsError("no observations")
    for name in ("rater", "item"):
        if getattr(t, name).shape != (n,):
            raise RatingsError(f"{name} must have length {n}")
    if t.x.ndim != 2 or t.x.shape[0] != n or t.z.ndim != 2 or t.z.shape[0] != n:
        raise RatingsError("covariate matrices must have one row per observation")
    for name in ("y", "x", "z"):
        if not np.all(np.isfinite(getattr(t, name))):
            bad = int(np.nonzero(~np.isfinite(getattr(t, name)).reshape(n, -1).all(axis=1))[0][0])
            raise RatingsError(f"non-finite value in {name} at row {bad + 1}")
    pairs = {}
    for row, key in enumerate(zip(t.rater.tolist(), t.item.tolist())):
        if key in pairs:
            raise RatingsError(
                f"duplicate (rater, item) pair ({t.rater_ids[key[0]]}, {key[1]}) at row {row + 1}"
            )
        pairs[key] = row
    if not t.multiple_ratings:
        owner: dict[int, int] = {}
        for row, (r, j) in enumerate(zip(t.rater.tolist(), t.item.tolist())):
            if owner.setdefault(j, r) != r:
                raise RatingsError(
                    f"item shared: item {j} rated by raters {t.rater_ids[owner[j]]} and "
                    f"{t.rater_ids[r]} (row {row + 1}) in single-rating mode"
                )


_COV = re.compile(r"^([xz])(\d+)$")


def load_ratings(path, multiple_ratings: bool = False, columns: dict | None = None) -> RatingsTable:
    """Read and validate a ratings CSV.

    ``columns`` can rename the three required columns, e.g.
    ``{"rater_id": "teacher", "item_id": "essay", "y": "score"}``.
    Errors name the offending 1-based data row.
    """
    names = {"rater_id": "rater_id", "item_id": "item_id", "y": "y"}
    names.update(columns or {})
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise RatingsError(f"{path}: no observations")
        header = [h.strip() for h in header]
        for key, col in names.items():
            if col not in header:
                raise RatingsError(f"{path}: missing column {col!r}")
        x_cols = sorted((int(m.group(2)), i) for i, h in enumerate(header)
                        if (m := _COV.match(h)) and m.group(1) == "x")
        z_cols = sorted((int(m.group(2)), i) for i, h in enumerate(header)
                        if (m := _COV.match(h)) and m.group(1) == "z")
        i_r, i_j, i_y = (header.index(names[k]) for k in ("rater_id", "item_id", "y"))
        raters, items, ys, xs, zs = [], [], [], [], []
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise RatingsError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
            try:
                raters.append(_as_int(row[i_r]))
                items.append(_as_int(row[i_j]))
                ys.append(float(row[i_y]))
                xs.append([float(row[i]) for _, i in x_cols])
                zs.append([float(row[i]) for _, i in z_cols])
            except ValueError as exc:
                raise RatingsError(f"{path}: non-numeric cell at row {lineno}: {exc}") from None
    if not ys:
        raise RatingsError(f"{path}: no observations")
    n = len(ys)
    try:
        return RatingsTable.from_arrays(
            raters, items, ys,
            np.array(xs, dtype=float).reshape(n, len(x_cols)),
            np.array(zs, dtype=float).reshape(n, len(z_cols)),
            multiple_ratings=multiple_ratings,
        )
    except RatingsError as exc:
        raise RatingsError(f"{path}: {exc}") from None


def _as_int(s: str) -> int:
    v = float(s)
    if not math.isfinite(v) or v != int(v):
        raise ValueError(f"{s!r} is not an integer id")
    return int(v)


def write_ratings(table: RatingsTable, path=None) -> str:
    """Canonical CSV serialisation (original rater ids, sorted by rater, item).

    Returns the text; also writes it when ``path`` is given.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rater_id", "item_id", "y"]
               + [f"x{k + 1}" for k in range(table.p)]
               + [f"z{k + 1}" for k in range(table.q)])
    order = np.lexsort((table.item, table.rater))
    for i in order:
        w.writerow([int(table.rater_ids[table.rater[i]]), int(table.item[i]), repr(float(table.y[i]))]
                   + [repr(float(v)) for v in table.x[i]]
                   + [repr(float(v)) for v in table.z[i]])
    text = buf.getvalue()
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    return text


@dataclass(frozen=True)
class DesignBundle:
    """Design matrices grouped by rater.

    Rows are sorted by (rater, item) so rater ``i`` owns the contiguous block
    ``slice(starts[i], starts[i + 1])``; ``y[block]``, ``X[block]`` and
    ``Z[block]`` are the per-rater quantities.  ``item`` is the dense 0-based
    item index used by the optional item effects.
    """

    y: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    rater: np.ndarray
    item: np.ndarray
    starts: np.ndarray
    n_raters: int
    n_items: int
    rater_ids: np.ndarray
    item_ids: np.ndarray
    multiple_ratings: bool = False
    XtX: np.ndarray = field(init=False, repr=False)
    ZtZ: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "XtX", self.X.T @ self.X)
        q = self.Z.shape[1]
        ztz = np.zeros((self.n_raters, q, q))
        np.add.at(ztz, self.rater, self.Z[:, :, None] * self.Z[:, None, :])
        object.__setattr__(self, "ZtZ", ztz)

    @property
    def n_obs(self) -> int:
        return int(self.y.shape[0])

    @property
    def p(self) -> int:
        return int(self.X.shape[1])

    @property
    def q(self) -> int:
        return int(self.Z.shape[1])

    def counts(self) -> np.ndarray:
        return np.diff(self.starts)

    def block(self, i: int) -> slice:
        return slice(int(self.starts[i]), int(self.starts[i + 1]))

    def per_rater_sum(self, values: np.ndarray) -> np.ndarray:
        """Sum rows of ``values`` (n,) or (n, k) within each rater."""
        values = np.asarray(values, dtype=float)
        out = np.zeros((self.n_raters,) + values.shape[1:])
        np.add.at(out, self.rater, values)
        return out

    @classmethod
    def empty(cls, n_raters: int, p: int = 0, q: int = 1, n_items: int = 0) -> "DesignBundle":
        """A design with raters but no observations (prior-only runs)."""
        return cls(
            y=np.zeros(0), X=np.zeros((0, p)), Z=np.zeros((0, q)),
            rater=np.zeros(0, dtype=np.int64), item=np.zeros(0, dtype=np.int64),
            starts=np.zeros(n_raters + 1, dtype=np.int64), n_raters=n_raters, n_items=n_items,
            rater_ids=np.arange(1, n_raters + 1), item_ids=np.arange(1, n_items + 1),
        )


def build_design(table: RatingsTable, intercept_only: bool = True) -> DesignBundle:
    """Group a ratings table into per-rater design blocks.

    With ``intercept_only`` (or when the table has no ``z`` columns) each
    ``Z_i`` is a column of ones.
    """
    order = np.lexsort((table.item, table.rater))
    rater = table.rater[order]
    item_ids, item_dense = np.unique(table.item[order], return_inverse=True)
    Z = np.ones((table.n_obs, 1)) if intercept_only or table.q == 0 else table.z[order]
    starts = np.searchsorted(rater, np.arange(table.n_raters + 1), side="left")
    return DesignBundle(
        y=table.y[order].copy(),
        X=table.x[order].copy(),
        Z=np.ascontiguousarray(Z, dtype=float),
        rater=rater.copy(),
        item=item_dense.astype(np.int64),
        starts=starts.astype(np.int64),
        n_raters=table.n_raters,
        n_items=int(item_ids.shape[0]),
        rater_ids=table.rater_ids.copy(),
        item_ids=item_ids,
        multiple_ratings=table.multiple_ratings,
    )
