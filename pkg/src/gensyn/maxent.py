"""Minimum cross-entropy reweighting of a prior under marginal constraints.

The prior ``u`` is tilted to ``w_i = u_i exp(f(T_i) . theta - 1)`` where the
multipliers minimize the convex dual

    D(theta) = -theta . eta + sum_i u_i exp(f(T_i) . theta - 1)

with limited-memory BFGS.
"""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
from scipy import optimize, sparse

from .distribution import TupleDistribution, same_space
from .errors import ConfigError, NumericalError
from .schema import Schema, UnivariateTable

log = logging.getLogger(__name__)

EXP_CLIP = 500.0


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Indicator constraints ``sum_i w_i [x_var(i) == cat] = eta``."""

    schema: Schema
    variables: tuple[str, ...]
    categories: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        cats = np.asarray(self.categories, dtype=np.int64)
        eta = np.asarray(self.eta, dtype=float)
        if cats.shape != eta.shape or len(self.variables) != eta.size:
            raise ConfigError("constraint arrays have inconsistent lengths")
        if np.any(eta < 0) or np.any(eta > 1 + 1e-12):
            raise ConfigError("constraint targets must lie in [0, 1]")
        seen = set()
        for var, c in zip(self.variables, cats.tolist()):
            if (var, c) in seen:
                raise ConfigError(f"duplicate constraint for {var}={self.schema[var].categories[c]}")
            seen.add((var, c))
        for var in set(self.variables):
            mask = np.array([v == var for v in self.variables])
            if mask.sum() == self.schema[var].size and abs(eta[mask].sum() - 1) > 1e-9:
                raise ConfigError(f"targets for {var!r} sum to {eta[mask].sum()!r}, expected 1")
        cats.setflags(write=False)
        eta.setflags(write=False)
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "categories", cats)
        object.__setattr__(self, "eta", eta)

    def __len__(self) -> int:
        return int(self.eta.size)

    def features(self, codes: np.ndarray) -> sparse.csr_matrix:
        """Sparse ``n x J`` indicator matrix for tuples given as code rows."""
        codes = np.asarray(codes, dtype=np.int64).reshape(-1, len(self.schema.variables))
        rows, cols = [], []
        for j, (var, cat) in enumerate(zip(self.variables, self.categories)):
            hit = np.flatnonzero(codes[:, self.schema.space.position(var)] == cat)
            rows.append(hit)
            cols.append(np.full(hit.size, j))
        r = np.concatenate(rows) if rows else np.zeros(0, np.int64)
        c = np.concatenate(cols) if cols else np.zeros(0, np.int64)
        return sparse.csr_matrix((np.ones(r.size), (r, c)), shape=(codes.shape[0], len(self)))

    def labels(self) -> list[str]:
        return [f"{v}:{self.schema[v].categories[c]}" for v, c in zip(self.variables, self.categories)]

    def subset(self, keep: np.ndarray, eta: np.ndarray | None = None) -> "ConstraintSet":
        keep = np.asarray(keep, dtype=bool)
        new_eta = self.eta[keep] if eta is None else eta
        return ConstraintSet(self.schema, tuple(v for v, k in zip(self.variables, keep) if k),
                             self.categories[keep], new_eta)


def build_constraints(d1: Mapping[str, UnivariateTable] | Iterable[UnivariateTable],
                      schema: Schema) -> ConstraintSet:
    """One constraint per (variable, category) with the D1 share as target."""
    tables = list(d1.values()) if isinstance(d1, Mapping) else list(d1)
    by_var: dict[str, UnivariateTable] = {}
    for t in tables:
        if t.variable in by_var:
            raise ConfigError(f"duplicate variable-category constraints for {t.variable!r}")
        by_var[t.variable] = t
    variables, cats, eta = [], [], []
    for v in schema.variables:
        if v.name not in by_var:
            raise ConfigError(f"no D1 table for {v.name!r}")
        props = by_var[v.name].proportions
        if props.size != v.size:
            raise ConfigError(f"D1 table for {v.name!r} has {props.size} categories, expected {v.size}")
        variables += [v.name] * v.size
        cats += list(range(v.size))
        eta += props.tolist()
    return ConstraintSet(schema, tuple(variables), np.array(cats), np.array(eta))


@dataclass
class DualState:
    theta: np.ndarray
    value: float
    gradient: np.ndarray


class DualProblem:
    """Dual objective for a fixed prior support; ``F`` is built once."""

    def __init__(self, u: np.ndarray, features: sparse.csr_matrix, eta: np.ndarray):
        self.u = np.asarray(u, dtype=float)
        self.F = features.tocsr()
        self.Ft = self.F.T.tocsr()
        self.eta = np.asarray(eta, dtype=float)

    def exponent(self, theta: np.ndarray) -> np.ndarray:
        return np.clip(self.F @ theta - 1.0, -EXP_CLIP, EXP_CLIP)

    def __call__(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        e = self.u * np.exp(self.exponent(theta))
        value = float(-theta @ self.eta + e.sum())
        grad = -self.eta + self.Ft @ e
        return value, grad

    def weights(self, theta: np.ndarray) -> np.ndarray:
        return self.u * np.exp(self.exponent(theta))


def dual_objective(theta, u: TupleDistribution, constraints: ConstraintSet) -> DualState:
    theta = np.asarray(theta, dtype=float)
    problem = DualProblem(u.prob, constraints.features(u.codes()), constraints.eta)
    value, grad = problem(theta)
    return DualState(theta, value, grad)


@dataclass
class MaxEntResult:
    weights: TupleDistribution
    theta: np.ndarray
    converged: bool
    max_violation: float
    iterations: int
    message: str = ""
    history: list = field(default_factory=list)
    unreachable: tuple[str, ...] = ()

    @property
    def feasible(self) -> bool:
        return not self.unreachable

    def write_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "objective", "gradient_norm", "max_violation"])
            for row in self.history:
                w.writerow([row[0], *(repr(float(x)) for x in row[1:])])


def _violations(w: np.ndarray, F: sparse.csr_matrix, eta: np.ndarray) -> np.ndarray:
    return np.abs(F.T @ w - eta)


def solve(u: TupleDistribution, constraints: ConstraintSet, *, memory: int = 10, gtol: float = 1e-8,
          max_iter: int = 500) -> MaxEntResult:
    """Closest distribution to ``u`` (relative entropy) meeting the constraints.

    Tuples carrying a zero-target category are removed up front (their
    optimal weight is exactly zero). Categories with a positive target but
    no tuple in the support cannot be met; they are reported in
    ``unreachable`` and the remaining targets of that variable are rescaled
    so the problem stays bounded.
    """
    if not same_space(u.space, constraints.schema.space):
        raise ConfigError("prior and constraints refer to different schemas")
    keep = u.prob > 0
    index, prior = u.index[keep], u.prob[keep]
    if index.size == 0:
        raise NumericalError("prior has empty support")
    codes = u.space.tuple_of(index).reshape(index.size, -1)
    F_full = constraints.features(codes)
    eta = constraints.eta.astype(float)

    zero = eta <= 0
    if zero.any():
        banned = np.asarray(F_full[:, np.flatnonzero(zero)].sum(axis=1)).ravel() > 0
        index, prior, codes = index[~banned], prior[~banned], codes[~banned]
        if index.size == 0:
            raise NumericalError("every prior tuple uses a category with zero target")
    F = constraints.features(codes)
    covered = np.asarray(F.sum(axis=0)).ravel() > 0
    active = covered & ~zero
    unreachable = tuple(lab for lab, c, z in zip(constraints.labels(), covered, zero) if not c and not z)

    target = eta.copy()
    variables = np.array(constraints.variables)
    for var in dict.fromkeys(constraints.variables):
        mask = variables == var
        lost = target[mask & ~covered & ~zero].sum()
        if lost > 0:
            live = mask & active
            if not live.any() or target[live].sum() <= 0:
                raise NumericalError(f"no prior tuple covers any category of {var!r}")
            target[live] = target[live] / target[live].sum() * target[mask].sum()

    prior = prior / prior.sum()
    problem = DualProblem(prior, F[:, active], target[active])
    history = []

    def record(theta):
        value, grad = problem(theta)
        w = problem.weights(theta)
        w = w / w.sum()
        viol = float(np.max(_violations(w, F, eta), initial=0.0))
        history.append((len(history) + 1, value, float(np.abs(grad).max(initial=0.0)), viol))

    theta0 = np.zeros(int(active.sum()))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = optimize.minimize(problem, theta0, jac=True, method="L-BFGS-B", callback=record,
                                options={"maxcor": memory, "gtol": gtol, "ftol": 1e-15,
                                         "maxiter": max_iter, "maxls": 50})
    theta = res.x
    w = problem.weights(theta)
    if not np.all(np.isfinite(w)) or w.sum() <= 0:
        raise NumericalError("maximum-entropy weights degenerated")
    w = w / w.sum()
    viol = float(np.max(_violations(w, F, eta), initial=0.0))
    grad_norm = float(np.abs(problem(theta)[1]).max(initial=0.0))
    converged = bool(res.success or grad_norm <= max(gtol, 1e-7))
    if not converged:
        log.warning("max-entropy solve stopped after %d iterations: %s (violation %.3g)",
                    res.nit, res.message, viol)
    full_theta = np.zeros(len(constraints))
    full_theta[active] = theta
    full_theta[zero] = -np.inf
    weights = TupleDistribution.from_pairs(u.space, index, w)
    return MaxEntResult(weights, full_theta, converged, viol, int(res.nit), str(res.message),
                        history, unreachable)


def fuse_priors(p1: TupleDistribution, p2: TupleDistribution) -> TupleDistribution:
    """Equal-weight average of two distributions over the same tuple space."""
    if not same_space(p1.space, p2.space):
        raise ConfigError("cannot fuse distributions over different schemas")
    return TupleDistribution.from_pairs(p1.space, np.concatenate([p1.index, p2.index]),
                                        np.concatenate([p1.prob, p2.prob]) / 2)


def threshold(p: TupleDistribution, tau: float | None = None, n_pop: int | None = None) -> TupleDistribution:
    """Drop tuples with probability below ``tau`` (default ``1/n_pop``) and renormalize."""
    if tau is None:
        if not n_pop:
            raise ValueError("threshold needs tau or n_pop")
        tau = 1.0 / n_pop
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    keep = p.prob >= tau
    if not keep.any():
        raise NumericalError(f"no tuple has probability >= tau={tau:g}")
    return TupleDistribution.from_pairs(p.space, p.index[keep], p.prob[keep])


def tau_grid(n_pop: int, steps: int = 4) -> list[float]:
    """``10/N, 1/N, 1/(10N), ...`` (``steps`` values)."""
    return [10.0 ** (1 - k) / n_pop for k in range(steps)]
