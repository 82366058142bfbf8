"""Turning tuple weights into individual records."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


def largest_remainder(quotas, total: int) -> np.ndarray:
    """Hamilton apportionment of ``quotas`` to integers summing to ``total``.

    Floors every quota, then hands the leftover units to the largest
    fractional parts; equal remainders go to the lower index first.
    """
    quotas = np.asarray(quotas, dtype=float)
    total = int(total)
    if quotas.size == 0:
        if total:
            raise ValueError("cannot apportion a positive total over nothing")
        return np.zeros(0, dtype=np.int64)
    if np.any(quotas < 0):
        raise ValueError("quotas must be nonnegative")
    s = quotas.sum()
    if s <= 0:
        raise ValueError("quotas must have positive sum")
    quotas = quotas * (total / s)
    base = np.floor(quotas).astype(np.int64)
    # guard against quotas like 2.9999999999 landing on the wrong side
    rem = np.round(quotas - base, 12)
    left = total - int(base.sum())
    if left > 0:
        order = np.lexsort((np.arange(quotas.size), -rem))
        base[order[:left]] += 1
    elif left < 0:
        order = np.lexsort((np.arange(quotas.size), rem))
        base[order[:-left]] -= 1
    return base


@dataclass(frozen=True, eq=False)
class SyntheticPopulation:
    """``records`` is an ``N x K`` array of category codes in schema order."""

    space: object
    records: np.ndarray

    def __post_init__(self):
        rec = np.asarray(self.records, dtype=np.int64)
        if rec.ndim != 2 or rec.shape[1] != len(self.space.variables):
            raise ValueError("records must be an N x K code matrix")
        if rec.size and (rec.min() < 0 or np.any(rec.max(axis=0) >= np.array(self.space.shape))):
            raise ValueError("record codes outside the category ranges")
        rec.setflags(write=False)
        object.__setattr__(self, "records", rec)

    def __len__(self) -> int:
        return int(self.records.shape[0])

    @property
    def names(self):
        return self.space.names

    @classmethod
    def from_counts(cls, space, index, counts) -> "SyntheticPopulation":
        index = np.asarray(index, dtype=np.int64)
        counts = np.asarray(counts, dtype=np.int64)
        order = np.argsort(index, kind="stable")
        index, counts = index[order], counts[order]
        codes = space.tuple_of(np.repeat(index, counts)).reshape(-1, len(space.variables))
        return cls(space, codes)

    def prevalence(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct tuple indices and how often each occurs."""
        if not len(self):
            return np.zeros(0, np.int64), np.zeros(0, np.int64)
        return np.unique(self.space.index_of(self.records), return_counts=True)

    def marginal_counts(self, name: str) -> np.ndarray:
        pos = self.space.position(name)
        return np.bincount(self.records[:, pos], minlength=self.space.variables[pos].size)

    def distribution(self):
        from .distribution import TupleDistribution

        idx, counts = self.prevalence()
        return TupleDistribution.from_pairs(self.space, idx, counts)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.space.names)
            cats = [v.categories for v in self.space.variables]
            for row in self.records.tolist():
                w.writerow([cats[k][c] for k, c in enumerate(row)])

    @classmethod
    def read_csv(cls, path, schema) -> "SyntheticPopulation":
        space = schema.space
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise ConfigError(f"{path}: empty population file")
            if sorted(header) != sorted(space.names):
                raise ConfigError(f"{path}: columns must be the schema variables")
            cols = [space.position(h) for h in header]
            lookup = [{lab: i for i, lab in enumerate(space.variables[c].categories)} for c in cols]
            rows = []
            for lineno, row in enumerate(reader, start=2):
                rec = [0] * len(cols)
                for j, label in enumerate(row):
                    label = schema.translate(header[j], label)
                    try:
                        rec[cols[j]] = lookup[j][label]
                    except KeyError:
                        raise ConfigError(f"{path}:{lineno}: unknown category {label!r}") from None
                rows.append(rec)
        return cls(space, np.array(rows, dtype=np.int64).reshape(len(rows), len(cols)))


def expand(weights, n_pop: int) -> SyntheticPopulation:
    """Replicate each supported tuple ``round(w * n_pop)`` times (Hamilton rounding)."""
    if n_pop < 1:
        raise ValueError("population size must be at least 1")
    counts = largest_remainder(weights.prob * n_pop, n_pop)
    keep = counts > 0
    return SyntheticPopulation.from_counts(weights.space, weights.index[keep], counts[keep])
