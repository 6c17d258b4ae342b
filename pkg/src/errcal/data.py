"""Observed-data containers.

``SubjectRecord`` is the per-subject view; ``Dataset`` holds the same data
column-wise (numpy arrays, NaN where a quantity is not observed) and is what
the estimators operate on.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

DESIGNS = ("reliability", "validation", "biomarker")


@dataclass
class SubjectRecord:
    x_star: list            # k_i replicate p-vectors
    y_star: list            # k_i replicate outcomes
    z: list
    in_subset: bool = False
    x_true: Optional[list] = None
    y_true: Optional[float] = None
    x_bio: Optional[list] = None
    y_bio: Optional[float] = None

    def __post_init__(self):
        k = len(self.x_star)
        if k != len(self.y_star) or k not in (1, 2):
            raise ValueError("x_star and y_star must both hold 1 or 2 replicates")
        if k == 2 and not self.in_subset:
            raise ValueError("second replicate only allowed for subset members")
        if not self.in_subset and (self.x_true is not None or self.x_bio is not None):
            raise ValueError("truth/biomarker values only allowed for subset members")

    def to_dict(self) -> dict:
        out = {
            "x_star": [list(map(float, np.atleast_1d(x))) for x in self.x_star],
            "y_star": [float(y) for y in self.y_star],
            "z": [float(v) for v in np.atleast_1d(self.z)],
            "in_subset": bool(self.in_subset),
        }
        for key in ("x_true", "x_bio"):
            val = getattr(self, key)
            if val is not None:
                out[key] = list(map(float, np.atleast_1d(val)))
        for key in ("y_true", "y_bio"):
            val = getattr(self, key)
            if val is not None:
                out[key] = float(val)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SubjectRecord":
        return cls(**d)


def _nan(shape):
    return np.full(shape, np.nan)


@dataclass
class Dataset:
    """Column-wise cohort data for one design.

    ``x_latent``/``y_latent`` carry the simulated truth for every subject; they
    exist only for generated data and are read only by ``true_fit``.
    """

    design: str
    xstar: np.ndarray                  # (N, p) first replicate
    ystar: np.ndarray                  # (N,)
    z: np.ndarray                      # (N, q)
    in_subset: np.ndarray              # (N,) bool
    xstar_rep: Optional[np.ndarray] = None   # (N, p), NaN off-subset
    ystar_rep: Optional[np.ndarray] = None
    x_true: Optional[np.ndarray] = None      # (N, p), NaN off-subset
    y_true: Optional[np.ndarray] = None
    x_bio: Optional[np.ndarray] = None
    y_bio: Optional[np.ndarray] = None
    x_latent: Optional[np.ndarray] = field(default=None, repr=False)
    y_latent: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.design not in DESIGNS:
            raise ValueError(f"unknown design {self.design!r}")
        self.in_subset = np.asarray(self.in_subset, dtype=bool)

    @property
    def N(self) -> int:
        return self.xstar.shape[0]

    @property
    def n(self) -> int:
        return int(self.in_subset.sum())

    @property
    def p(self) -> int:
        return self.xstar.shape[1]

    @property
    def q(self) -> int:
        return self.z.shape[1]

    _ARRAYS = ("xstar", "ystar", "z", "in_subset", "xstar_rep", "ystar_rep",
               "x_true", "y_true", "x_bio", "y_bio", "x_latent", "y_latent")

    def take(self, idx) -> "Dataset":
        """Row subset/resample; ``idx`` is an integer index array."""
        kw = {}
        for name in self._ARRAYS:
            a = getattr(self, name)
            kw[name] = None if a is None else a[idx]
        return Dataset(design=self.design, **kw)

    def with_arrays(self, **arrays) -> "Dataset":
        return replace(self, **arrays)

    # record conversion -------------------------------------------------

    def records(self) -> list[SubjectRecord]:
        out = []
        for i in range(self.N):
            v = bool(self.in_subset[i])
            xs = [self.xstar[i].tolist()]
            ys = [float(self.ystar[i])]
            if v and self.xstar_rep is not None and not np.isnan(self.ystar_rep[i]):
                xs.append(self.xstar_rep[i].tolist())
                ys.append(float(self.ystar_rep[i]))
            rec = SubjectRecord(x_star=xs, y_star=ys, z=self.z[i].tolist(), in_subset=v)
            if v and self.x_true is not None:
                rec.x_true = self.x_true[i].tolist()
                rec.y_true = float(self.y_true[i])
            if v and self.x_bio is not None:
                rec.x_bio = self.x_bio[i].tolist()
                rec.y_bio = float(self.y_bio[i])
            out.append(rec)
        return out

    @classmethod
    def from_records(cls, records: Sequence[SubjectRecord], design: str | None = None) -> "Dataset":
        if not records:
            raise ValueError("no records")
        if design is None:
            design = infer_design(records)
        N = len(records)
        p = len(np.atleast_1d(records[0].x_star[0]))
        q = len(np.atleast_1d(records[0].z))
        xstar = np.array([np.atleast_1d(r.x_star[0]) for r in records], dtype=float).reshape(N, p)
        ystar = np.array([r.y_star[0] for r in records], dtype=float)
        z = np.array([np.atleast_1d(r.z) for r in records], dtype=float).reshape(N, q)
        v = np.array([r.in_subset for r in records], dtype=bool)
        kw = {}
        if design == "reliability":
            xr, yr = _nan((N, p)), _nan(N)
            for i, r in enumerate(records):
                if len(r.x_star) == 2:
                    xr[i] = r.x_star[1]
                    yr[i] = r.y_star[1]
            kw.update(xstar_rep=xr, ystar_rep=yr)
        elif design == "validation":
            xt, yt = _nan((N, p)), _nan(N)
            for i, r in enumerate(records):
                if r.x_true is not None:
                    xt[i] = r.x_true
                    yt[i] = r.y_true
            kw.update(x_true=xt, y_true=yt)
        else:
            xb, yb = _nan((N, p)), _nan(N)
            for i, r in enumerate(records):
                if r.x_bio is not None:
                    xb[i] = r.x_bio
                    yb[i] = r.y_bio
            kw.update(x_bio=xb, y_bio=yb)
        return cls(design=design, xstar=xstar, ystar=ystar, z=z, in_subset=v, **kw)


def infer_design(records: Sequence[SubjectRecord]) -> str:
    if any(r.x_bio is not None for r in records):
        return "biomarker"
    if any(r.x_true is not None for r in records):
        return "validation"
    return "reliability"


def as_dataset(data, design: str | None = None) -> Dataset:
    if isinstance(data, Dataset):
        return data
    return Dataset.from_records(list(data), design=design)
