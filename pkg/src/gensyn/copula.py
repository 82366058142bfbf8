"""Gaussian-copula estimate of the joint (``p2``) from auxiliary locations.

Each categorical component (one variable category) gets a beta marginal
fitted by moments across the auxiliary locations; their dependence comes
from the locations' sample covariance. Sampled component shares are turned
into individual profiles whose per-variable counts are forced to the target
marginals.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import special

from .distribution import TupleDistribution
from .errors import ConfigError, NumericalError
from .schema import Schema, TupleSpace, UnivariateTable, component_blocks
from .synthesis import largest_remainder

#: eigenvalues below ``-NEG_EIG_TOL * max(1, |lambda_max|)`` mark an indefinite matrix
NEG_EIG_TOL = 1e-12
EIG_FLOOR = 1e-10


@dataclass(frozen=True)
class BetaMarginal:
    alpha: float
    beta: float
    component: int = 0
    point_mass: float | None = None

    def __post_init__(self):
        if self.point_mass is None and not (self.alpha > 0 and self.beta > 0):
            raise ValueError("beta parameters must be positive")

    @property
    def mean(self) -> float:
        if self.point_mass is not None:
            return self.point_mass
        return self.alpha / (self.alpha + self.beta)

    @property
    def var(self) -> float:
        if self.point_mass is not None:
            return 0.0
        a, b = self.alpha, self.beta
        return a * b / ((a + b) ** 2 * (a + b + 1))

    def ppf(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.point_mass is not None:
            return np.full(u.shape, self.point_mass)
        y = special.betaincinv(self.alpha, self.beta, u)
        # betaincinv gives nan for subnormal tails; those sit at the support edges
        bad = np.isnan(y) & ~np.isnan(u)
        if bad.any():
            y = np.where(bad, np.where(u < 0.5, 0.0, 1.0), y)
        return y


def fit_beta(mu: float, var: float, component: int = 0) -> BetaMarginal:
    """Method-of-moments beta fit.

    A zero variance yields a point mass at ``mu``. Variances at or above the
    Bernoulli bound ``mu(1-mu)`` are clamped to 90% of it.
    """
    mu, var = float(mu), float(var)
    if var < 0:
        raise ValueError("variance must be nonnegative")
    if var == 0:
        if not 0 <= mu <= 1:
            raise ValueError(f"point-mass location {mu} outside [0, 1]")
        return BetaMarginal(math.nan, math.nan, component, point_mass=mu)
    if not 0 < mu < 1:
        raise ValueError(f"beta mean must lie in (0, 1), got {mu}")
    bound = mu * (1 - mu)
    if var >= bound:
        var = 0.9 * bound
    common = bound / var - 1.0
    return BetaMarginal(mu * common, (1 - mu) * common, component)


def repair_psd(matrix: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues of an indefinite symmetric matrix.

    Matrices that are PSD up to round-off are returned unchanged (symmetrized).
    """
    sym = (np.asarray(matrix, dtype=float) + np.asarray(matrix, dtype=float).T) / 2
    vals, vecs = np.linalg.eigh(sym)
    if vals.size == 0 or vals.min() >= -NEG_EIG_TOL * max(1.0, abs(vals.max())):
        return sym
    vals = np.maximum(vals, EIG_FLOOR)
    fixed = (vecs * vals) @ vecs.T
    return (fixed + fixed.T) / 2


def correlation_factor(cov: np.ndarray) -> np.ndarray:
    """Matrix ``A`` with ``A @ A.T`` equal to the correlation form of ``cov``.

    Zero-variance components are decoupled (unit variance, no correlation).
    Cholesky is used when it succeeds, otherwise an eigen factor.
    """
    sd = np.sqrt(np.clip(np.diag(cov), 0, None))
    live = sd > 0
    corr = np.eye(cov.shape[0])
    inv = np.where(live, 1.0 / np.where(live, sd, 1.0), 0.0)
    sub = cov * np.outer(inv, inv)
    mask = np.outer(live, live)
    corr[mask] = sub[mask]
    np.fill_diagonal(corr, 1.0)
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh((corr + corr.T) / 2)
        if not np.all(np.isfinite(vals)):
            raise NumericalError("correlation matrix could not be factorized") from None
        return vecs * np.sqrt(np.clip(vals, 0, None))


@dataclass(frozen=True, eq=False)
class CopulaSpec:
    covariance: np.ndarray
    marginals: tuple[BetaMarginal, ...]
    blocks: Mapping[str, slice]
    iterations: int = 20
    n_draw: int = 50_000

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=float)
        m = len(self.marginals)
        if cov.shape != (m, m):
            raise ValueError("covariance dimension does not match the marginals")
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        if self.iterations < 1 or self.n_draw < 1:
            raise ValueError("iterations and n_draw must be positive")
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "_factor", correlation_factor(cov))

    @property
    def factor(self) -> np.ndarray:
        return self._factor

    def with_draws(self, n_draw: int | None = None, iterations: int | None = None) -> "CopulaSpec":
        return CopulaSpec(self.covariance, self.marginals, self.blocks,
                          iterations or self.iterations, n_draw or self.n_draw)

    def to_csv(self, sigma_path, marginals_path, labels: Sequence[str] | None = None) -> None:
        labels = list(labels or [str(i) for i in range(len(self.marginals))])
        with open(sigma_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["component", *labels])
            for lab, row in zip(labels, self.covariance):
                w.writerow([lab, *(repr(float(x)) for x in row)])
        with open(marginals_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["component", "alpha", "beta", "mean", "point_mass"])
            for lab, m in zip(labels, self.marginals):
                w.writerow([lab, repr(m.alpha), repr(m.beta), repr(m.mean),
                            "" if m.point_mass is None else repr(m.point_mass)])


def estimate_spec(normalized: np.ndarray, blocks: Mapping[str, slice], iterations: int = 20,
                  n_draw: int = 50_000) -> CopulaSpec:
    """Beta marginals and covariance from a normalized D3 matrix."""
    d = np.asarray(normalized, dtype=float)
    if d.ndim != 2 or d.shape[0] < 2:
        raise ConfigError("copula estimation needs at least two auxiliary locations")
    mean = d.mean(axis=0)
    cov = np.atleast_2d(np.cov(d, rowvar=False, ddof=1))
    var = np.clip(np.diag(cov).copy(), 0, None)
    var[np.ptp(d, axis=0) == 0] = 0.0
    marginals = tuple(fit_beta(mu, v, m) for m, (mu, v) in enumerate(zip(mean, var)))
    return CopulaSpec(repair_psd(cov), marginals, dict(blocks), iterations, n_draw)


def spec_from_schema(schema: Schema, normalized: np.ndarray, **kw) -> CopulaSpec:
    return estimate_spec(normalized, component_blocks(schema), **kw)


def sample_copula(spec: CopulaSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Raw component values: Z ~ N(0, R), u = Phi(Z), y_m = F_m^{-1}(u_m)."""
    m = len(spec.marginals)
    z = rng.standard_normal((n, m)) @ spec.factor.T
    u = special.ndtr(z)
    y = np.empty_like(u)
    for j, marg in enumerate(spec.marginals):
        y[:, j] = marg.ppf(u[:, j])
    return y


def normalize_blocks(y: np.ndarray, blocks: Mapping[str, slice]) -> np.ndarray:
    out = np.array(y, dtype=float)
    for block in blocks.values():
        part = out[:, block]
        tot = part.sum(axis=1, keepdims=True)
        width = part.shape[1]
        out[:, block] = np.where(tot > 0, part / np.where(tot > 0, tot, 1.0), 1.0 / width)
    return out


def draw_component_probs(spec: CopulaSpec, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """``n_draw x M_comp`` matrix of per-variable category shares."""
    return normalize_blocks(sample_copula(spec, n or spec.n_draw, rng), spec.blocks)


def match_marginals(y: np.ndarray, blocks: Mapping[str, slice], eta: Mapping[str, Sequence[int]],
                    rng: np.random.Generator, names: Sequence[str] | None = None) -> np.ndarray:
    """Assign one category per variable to every row of ``y``.

    Row ``i`` draws variable ``k`` from its block shares; a category whose
    remaining count is exhausted triggers a redraw over the categories that
    still have room (shares renormalized, uniform if they are all zero).
    Returns an ``n x K`` array of category codes whose column counts equal
    ``eta`` exactly.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    names = list(names or blocks)
    out = np.empty((n, len(names)), dtype=np.int64)
    for k, name in enumerate(names):
        p = y[:, blocks[name]]
        width = p.shape[1]
        cap = [int(c) for c in eta[name]]
        if len(cap) != width or min(cap) < 0:
            raise ConfigError(f"target counts for {name!r} do not match its categories")
        if sum(cap) != n:
            raise ConfigError(f"target counts for {name!r} sum to {sum(cap)}, need {n}")
        p = np.clip(p, 0, None)
        tot = p.sum(axis=1, keepdims=True)
        p = np.where(tot > 0, p / np.where(tot > 0, tot, 1.0), 1.0 / width)
        cum = np.cumsum(p, axis=1)
        first = (rng.random(n)[:, None] >= cum[:, :-1]).sum(axis=1)
        extra = rng.random(n)
        col = out[:, k]
        for i, c in enumerate(first.tolist()):
            if cap[c] <= 0:
                room = np.array(cap) > 0
                w = p[i] * room
                if w.sum() <= 0:
                    w = room.astype(float)
                c = int(np.searchsorted(np.cumsum(w), extra[i] * w.sum(), side="right"))
                c = min(c, width - 1)
                while not room[c]:  # guards round-off at the cumsum edge
                    c -= 1
            cap[c] -= 1
            col[i] = c
    return out


def integer_targets(d1: Mapping[str, UnivariateTable], names: Sequence[str], n: int) -> dict[str, np.ndarray]:
    """Largest-remainder integerization of each D1 marginal to total ``n``."""
    return {name: largest_remainder(d1[name].proportions * n, n) for name in names}


def estimate_p2(spec: CopulaSpec, space: TupleSpace, eta: Mapping[str, Sequence[int]] | None = None,
                rng: np.random.Generator | None = None, d1: Mapping[str, UnivariateTable] | None = None,
                iterations: int | None = None) -> TupleDistribution:
    """Average empirical tuple distribution over ``iterations`` copula rounds.

    ``eta`` gives target counts summing to ``spec.n_draw``; alternatively pass
    ``d1`` and they are integerized here. Each round uses its own child
    generator spawned from ``rng``.
    """
    rng = rng if rng is not None else np.random.default_rng()
    names = space.names
    if eta is None:
        if d1 is None:
            raise ConfigError("estimate_p2 needs either eta or D1 tables")
        eta = integer_targets(d1, names, spec.n_draw)
    its = iterations or spec.iterations
    n = spec.n_draw
    indices, weights = [], []
    for child in rng.spawn(its):
        y = draw_component_probs(spec, child, n)
        profiles = match_marginals(y, spec.blocks, eta, child, names)
        idx, counts = np.unique(space.index_of(profiles), return_counts=True)
        indices.append(idx)
        weights.append(counts / (n * its))
    return TupleDistribution.from_pairs(space, np.concatenate(indices), np.concatenate(weights))
