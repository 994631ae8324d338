"""Exact probability primitives on finite spaces.

Conventions (fixed once, used everywhere):

* total variation is the sup-over-sets norm, ``TV(P, Q) = 0.5 * sum |p - q|``,
  so it takes values in [0, 1];
* the Hellinger distance satisfies ``H^2 = sum (sqrt(p) - sqrt(q))^2`` and
  is bounded by sqrt(2).

Divergences accumulate with :func:`math.fsum` so that 1e-10-level assertions
in the test suite are meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError, ErgodicityError

_SUM_TOL = 1e-12


@dataclass(frozen=True)
class FiniteDist:
    """Probability vector on a finite support {0, ..., N-1}."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 1:
            raise DimensionError("weights must be a nonempty 1-d vector")
        if np.any(w < 0):
            raise DomainError("negative probability weight")
        total = math.fsum(w.tolist())
        if abs(total - 1.0) > _SUM_TOL:
            raise DomainError(f"weights sum to {total!r}, not 1 within {_SUM_TOL}")
        w = w / total
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.size

    def __getitem__(self, k: int) -> float:
        return float(self.weights[k])

    @staticmethod
    def uniform(n: int) -> "FiniteDist":
        return FiniteDist(np.full(n, 1.0 / n))


def _check_same_support(p: FiniteDist, q: FiniteDist):
    if p.n != q.n:
        raise DimensionError(f"support sizes differ: {p.n} vs {q.n}")


def hellinger(p: FiniteDist, q: FiniteDist) -> float:
    """Hellinger distance, H^2 = sum_k (sqrt(p_k) - sqrt(q_k))^2, 0 <= H <= sqrt(2)."""
    _check_same_support(p, q)
    terms = (np.sqrt(p.weights) - np.sqrt(q.weights)) ** 2
    return math.sqrt(math.fsum(terms.tolist()))


def total_variation(p: FiniteDist, q: FiniteDist) -> float:
    """Total variation sup_A |P(A) - Q(A)| = 0.5 * sum_k |p_k - q_k|, in [0, 1]."""
    _check_same_support(p, q)
    return 0.5 * math.fsum(np.abs(p.weights - q.weights).tolist())


def kl_divergence(p0: FiniteDist, p: FiniteDist) -> float:
    """Kullback-Leibler divergence sum_k p0_k log(p0_k / p_k).

    Returns ``math.inf`` exactly when some cell has p0_k > 0 but p_k = 0;
    infinity is a value, not an error.
    """
    _check_same_support(p0, p)
    terms = []
    for a, b in zip(p0.weights.tolist(), p.weights.tolist()):
        if a == 0.0:
            continue
        if b == 0.0:
            return math.inf
        terms.append(a * math.log(a / b))
    return max(math.fsum(terms), 0.0)


def hellinger_transform(p: FiniteDist, q: FiniteDist, alpha: float) -> float:
    """Hellinger transform psi(P, Q; alpha) = sum_k p_k^alpha q_k^(1-alpha).

    Cells where both densities vanish contribute 0.  The alpha = 0 and
    alpha = 1 endpoints are resolved by the convention x^0 = 1{x > 0}, so
    they return Q(p > 0) and P(q > 0) respectively.
    """
    _check_same_support(p, q)
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha={alpha} outside [0, 1]")
    terms = []
    for a, b in zip(p.weights.tolist(), q.weights.tolist()):
        if a == 0.0 or b == 0.0:
            if alpha == 0.0 and a > 0.0:
                terms.append(b)
            elif alpha == 1.0 and b > 0.0:
                terms.append(a)
            # otherwise the cell contributes 0
            continue
        terms.append(a**alpha * b ** (1.0 - alpha))
    return min(math.fsum(terms), 1.0)


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic matrix; ``matrix[l, k]`` is the probability of moving to k from l."""

    matrix: np.ndarray
    min_entry: float = field(init=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise DimensionError("transition matrix must be square")
        if np.any(m < 0):
            raise DomainError("negative transition probability")
        row_sums = [math.fsum(row.tolist()) for row in m]
        if any(abs(s - 1.0) > _SUM_TOL for s in row_sums):
            raise DomainError("row sums deviate from 1 beyond tolerance")
        m = m / np.asarray(row_sums)[:, None]
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "min_entry", float(m.min()))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def is_ergodic(self, lam: float = 0.0) -> bool:
        """True when every entry is >= lam > 0 (a sufficient mixing condition)."""
        return self.min_entry >= lam and self.min_entry > 0.0

    def row(self, l: int) -> FiniteDist:
        return FiniteDist(self.matrix[l])


_DIRECT_SOLVE_MAX = 64


def stationary_distribution(t: TransitionMatrix, tol: float = 1e-12) -> FiniteDist:
    """Unique stationary law pi with pi T = pi, ||pi T - pi||_1 <= tol.

    Direct linear solve for N <= 64, power iteration with Aitken
    acceleration above.  Raises :class:`ErgodicityError` when the
    eigenspace at eigenvalue 1 has dimension > 1 (reducible chain).
    """
    m = t.matrix
    n = t.n
    if n == 1:
        return FiniteDist(np.array([1.0]))
    a = m.T - np.eye(n)
    if np.linalg.matrix_rank(a, tol=1e-10) < n - 1:
        raise ErgodicityError("stationary distribution is not unique")
    if n <= _DIRECT_SOLVE_MAX:
        sys = np.vstack([a, np.ones(n)])
        rhs = np.zeros(n + 1)
        rhs[-1] = 1.0
        pi, *_ = np.linalg.lstsq(sys, rhs, rcond=None)
        pi = np.clip(pi, 0.0, None)
        pi = pi / math.fsum(pi.tolist())
    else:
        pi = _power_iterate(m, tol)
    residual = float(np.abs(pi @ m - pi).sum())
    if residual > tol:
        # refine by power iteration from the direct solution
        pi = _power_iterate(m, tol, start=pi)
        residual = float(np.abs(pi @ m - pi).sum())
        if residual > tol:
            raise ErgodicityError(f"stationary residual {residual} exceeds tol {tol}")
    return FiniteDist(pi)


def _power_iterate(m: np.ndarray, tol: float, start=None, max_iter: int = 200_000):
    n = m.shape[0]
    pi = np.full(n, 1.0 / n) if start is None else start.copy()
    prev = None
    prev2 = None
    for _ in range(max_iter):
        nxt = pi @ m
        nxt = nxt / nxt.sum()
        if np.abs(nxt @ m - nxt).sum() <= tol:
            return nxt
        # Aitken extrapolation on componentwise sequences
        if prev2 is not None:
            denom = nxt - 2.0 * prev + prev2
            mask = np.abs(denom) > 1e-300
            acc = nxt.copy()
            acc[mask] = nxt[mask] - (nxt[mask] - prev[mask]) ** 2 / denom[mask]
            if np.all(acc >= 0) and acc.sum() > 0:
                acc = acc / acc.sum()
                if np.abs(acc @ m - acc).sum() <= tol:
                    return acc
        prev2, prev, pi = prev, pi, nxt
    raise ErgodicityError("power iteration did not converge")


def joint_two_step(t: TransitionMatrix, tol: float = 1e-12) -> np.ndarray:
    """Stationary two-step joint probabilities p(k, l) = p(k | l) * pi(l).

    Returned as an (N, N) array indexed ``[k, l]``; both marginals equal pi.
    """
    pi = stationary_distribution(t, tol=tol)
    return t.matrix.T * pi.weights[None, :]
