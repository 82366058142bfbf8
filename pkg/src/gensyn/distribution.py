"""Sparse probability maps over a categorical tuple space."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .schema import TupleSpace, format_number

#: cells below this are treated as structural zeros and dropped
DROP_BELOW = 1e-15
MASS_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class TupleDistribution:
    """Probabilities on a subset of a :class:`TupleSpace`.

    ``index`` holds sorted, unique flat tuple indices and ``prob`` the
    matching probabilities. Build instances through :meth:`from_pairs`,
    which merges duplicates, drops negligible cells and renormalizes.
    """

    space: TupleSpace
    index: np.ndarray
    prob: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        index = np.array(self.index, dtype=np.int64)
        prob = np.array(self.prob, dtype=float)
        if index.shape != prob.shape or index.ndim != 1:
            raise ValueError("index and prob must be 1-d arrays of equal length")
        if index.size and (index[0] < 0 or index[-1] >= self.space.size or np.any(np.diff(index) <= 0)):
            raise ValueError("support indices must be sorted, unique and inside the tuple space")
        if np.any(prob < 0) or not np.all(np.isfinite(prob)):
            raise ValueError("probabilities must be finite and nonnegative")
        if self.normalized and abs(prob.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"distribution mass is {prob.sum()!r}, expected 1")
        index.setflags(write=False)
        prob.setflags(write=False)
        object.__setattr__(self, "index", index)
        object.__setattr__(self, "prob", prob)

    @classmethod
    def from_pairs(cls, space: TupleSpace, index, weight, normalize: bool = True) -> "TupleDistribution":
        index = np.asarray(index, dtype=np.int64).ravel()
        weight = np.asarray(weight, dtype=float).ravel()
        uniq, inverse = np.unique(index, return_inverse=True)
        summed = np.bincount(inverse.ravel(), weights=weight, minlength=uniq.size)
        if normalize:
            total = summed.sum()
            if not total > 0:
                raise NumericalError("cannot normalize a distribution with zero mass")
            summed = summed / total
        keep = summed >= DROP_BELOW
        uniq, summed = uniq[keep], summed[keep]
        if normalize:
            summed = summed / summed.sum()
        return cls(space, uniq, summed, normalized=normalize)

    @classmethod
    def from_dense(cls, space: TupleSpace, dense) -> "TupleDistribution":
        dense = np.asarray(dense, dtype=float).ravel()
        if dense.size != space.size:
            raise ValueError("dense array does not match the tuple space size")
        nz = np.flatnonzero(dense)
        return cls.from_pairs(space, nz, dense[nz])

    @classmethod
    def uniform(cls, space: TupleSpace) -> "TupleDistribution":
        n = space.size
        return cls(space, np.arange(n), np.full(n, 1.0 / n))

    def __len__(self) -> int:
        return int(self.index.size)

    @property
    def mass(self) -> float:
        return float(self.prob.sum())

    def codes(self) -> np.ndarray:
        return self.space.tuple_of(self.index).reshape(len(self), len(self.space.variables))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.space.size)
        out[self.index] = self.prob
        return out

    def get(self, index: int) -> float:
        pos = np.searchsorted(self.index, index)
        if pos < self.index.size and self.index[pos] == index:
            return float(self.prob[pos])
        return 0.0

    def marginal(self, name: str) -> np.ndarray:
        pos = self.space.position(name)
        return np.bincount(self.codes()[:, pos], weights=self.prob,
                           minlength=self.space.variables[pos].size)

    def pair_table(self, a: str, b: str) -> np.ndarray:
        codes = self.codes()
        ia, ib = self.space.position(a), self.space.position(b)
        ra, rb = self.space.variables[ia].size, self.space.variables[ib].size
        flat = codes[:, ia] * rb + codes[:, ib]
        return np.bincount(flat, weights=self.prob, minlength=ra * rb).reshape(ra, rb)

    def reorder(self, names) -> "TupleDistribution":
        """Same distribution expressed over the variables in ``names`` order."""
        names = tuple(names)
        if sorted(names) != sorted(self.space.names):
            raise ValueError("reorder needs a permutation of the current variables")
        perm = [self.space.position(n) for n in names]
        target = TupleSpace(tuple(self.space.variables[p] for p in perm))
        new_index = target.index_of(self.codes()[:, perm]) if len(self) else np.zeros(0, np.int64)
        order = np.argsort(new_index)
        return TupleDistribution(target, new_index[order], self.prob[order], self.normalized)

    def to_csv(self, path, extra: dict | None = None) -> None:
        """Write ``tuple_index,<categories...>,probability[,extra...]``."""
        extra = extra or {}
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tuple_index", *self.space.names, "probability", *extra])
            codes = self.codes()
            cols = [np.asarray(v) for v in extra.values()]
            for row, (i, p) in enumerate(zip(self.index, self.prob)):
                labels = [v.categories[c] for v, c in zip(self.space.variables, codes[row])]
                w.writerow([int(i), *labels, repr(float(p)), *(format_number(c[row]) for c in cols)])


def same_space(a: TupleSpace, b: TupleSpace) -> bool:
    return a.variables == b.variables
