"""The five concrete model families.

Each family exposes ``sample(parameter, n, rng)`` and
``loglik(parameter, x)``; log-likelihoods are exact and may be ``-inf``
(indicator supports, forbidden symbols, empty categorical cells).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionError, ParameterError, PartitionError
from .measures import FiniteDist, TransitionMatrix, hellinger, joint_two_step, total_variation

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class CategoricalModel:
    """I.i.d. draws from a probability vector on {0, ..., n_cells-1}."""

    n_cells: int

    def __post_init__(self):
        if self.n_cells < 2:
            raise ParameterError("categorical support needs at least two cells")

    def check_parameter(self, p: FiniteDist):
        if p.n != self.n_cells:
            raise ParameterError(f"parameter has {p.n} cells, model has {self.n_cells}")

    def sample(self, p: FiniteDist, n: int, rng: np.random.Generator) -> np.ndarray:
        self.check_parameter(p)
        return rng.choice(self.n_cells, size=n, p=p.weights)

    def loglik(self, p: FiniteDist, x: np.ndarray) -> float:
        self.check_parameter(p)
        x = np.asarray(x, dtype=int)
        counts = np.bincount(x, minlength=self.n_cells)
        if np.any((counts > 0) & (p.weights == 0.0)):
            return -math.inf
        nz = counts > 0
        return float(np.dot(counts[nz], np.log(p.weights[nz])))

    def counts(self, x: np.ndarray) -> np.ndarray:
        return np.bincount(np.asarray(x, dtype=int), minlength=self.n_cells)


@dataclass(frozen=True)
class UniformLocationModel:
    """Uniform distribution on the closed interval [theta, theta + 1]."""

    def sample(self, theta: float, n: int, rng: np.random.Generator) -> np.ndarray:
        return theta + rng.random(n)

    def loglik(self, theta: float, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        if x.min() >= theta and x.max() <= theta + 1.0:
            return 0.0
        return -math.inf


@dataclass(frozen=True)
class MarkovModel:
    """Stationary finite-state chain observed as a path Z_0, ..., Z_n.

    The likelihood includes the initial-state term by default;
    ``condition_on_start`` drops it (conditioning on Z_0).
    """

    n_states: int
    initial: FiniteDist | None = None
    condition_on_start: bool = False

    def check_parameter(self, t: TransitionMatrix):
        if t.n != self.n_states:
            raise ParameterError(f"matrix is {t.n}x{t.n}, model has {self.n_states} states")

    def initial_law(self, t: TransitionMatrix) -> FiniteDist:
        if self.initial is not None:
            return self.initial
        from .measures import stationary_distribution

        return stationary_distribution(t)

    def sample(self, t: TransitionMatrix, n: int, rng: np.random.Generator) -> np.ndarray:
        """Path of n transitions: Z_0 ~ initial law, then n steps (length n + 1)."""
        self.check_parameter(t)
        init = self.initial_law(t)
        path = sample_paths(t, n, 1, rng, init)[0]
        return path

    def loglik(self, t: TransitionMatrix, z: np.ndarray) -> float:
        self.check_parameter(t)
        z = np.asarray(z, dtype=int)
        if z.size < 1:
            raise ParameterError("empty path")
        terms = self.transition_counts(z) * 1.0
        probs = t.matrix
        if np.any((terms > 0) & (probs == 0.0)):
            return -math.inf
        nz = terms > 0
        total = float(np.dot(terms[nz], np.log(probs[nz])))
        if not self.condition_on_start:
            init = self.initial_law(t)
            p0 = init[int(z[0])]
            if p0 == 0.0:
                return -math.inf
            total += math.log(p0)
        return total

    def transition_counts(self, z: np.ndarray) -> np.ndarray:
        """Matrix of transition counts c[l, k] = #{i : z_{i-1} = l, z_i = k}."""
        z = np.asarray(z, dtype=int)
        c = np.zeros((self.n_states, self.n_states), dtype=int)
        np.add.at(c, (z[:-1], z[1:]), 1)
        return c


def sample_paths(
    t: TransitionMatrix,
    n_steps: int,
    n_paths: int,
    rng: np.random.Generator,
    initial: FiniteDist | None = None,
) -> np.ndarray:
    """Vectorized sampling of ``n_paths`` chains of ``n_steps`` transitions each.

    Returns an (n_paths, n_steps + 1) integer array.  All paths share one rng
    stream; callers needing independent replications derive separate streams.
    """
    if initial is None:
        from .measures import stationary_distribution

        initial = stationary_distribution(t)
    n = t.n
    cum = np.cumsum(t.matrix, axis=1)
    cum[:, -1] = 1.0
    out = np.empty((n_paths, n_steps + 1), dtype=np.int64)
    out[:, 0] = rng.choice(n, size=n_paths, p=initial.weights)
    u = rng.random((n_paths, n_steps))
    for i in range(n_steps):
        out[:, i + 1] = (u[:, i, None] >= cum[out[:, i]]).sum(axis=1)
    return out


@dataclass(frozen=True)
class SparseMeansModel:
    """Gaussian sequence observation X = theta + standard normal noise, coordinatewise."""

    dim: int

    def sample(self, theta: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
        theta = self._check(theta)
        if n != self.dim:
            raise ParameterError(f"sample length {n} must equal model dimension {self.dim}")
        return theta + rng.standard_normal(self.dim)

    def loglik(self, theta: np.ndarray, x: np.ndarray) -> float:
        theta = self._check(theta)
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DimensionError("observation shape mismatch")
        return float(-0.5 * self.dim * LOG_2PI - 0.5 * np.sum((x - theta) ** 2))

    def _check(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ParameterError("parameter dimension mismatch")
        return theta


@dataclass(frozen=True)
class FreedmanModel:
    """Distributions on {0, ..., K-1}, a truncation of the positive integers.

    Mechanically identical to the categorical family; kept separate because
    its designated prior atoms carry exactly-zero cells (forbidden symbols)
    and the experiments track the resulting likelihood eliminations.
    """

    truncation: int
    _cat: CategoricalModel = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.truncation < 2:
            raise ParameterError("truncation level must be at least 2")
        object.__setattr__(self, "_cat", CategoricalModel(self.truncation))

    @property
    def n_cells(self) -> int:
        return self.truncation

    def check_parameter(self, p: FiniteDist):
        self._cat.check_parameter(p)

    def sample(self, p: FiniteDist, n: int, rng: np.random.Generator) -> np.ndarray:
        return self._cat.sample(p, n, rng)

    def loglik(self, p: FiniteDist, x: np.ndarray) -> float:
        return self._cat.loglik(p, x)

    def counts(self, x: np.ndarray) -> np.ndarray:
        return self._cat.counts(x)


def bin_data(x: np.ndarray, breakpoints) -> tuple[np.ndarray, np.ndarray]:
    """Map real observations to cells of the partition [b_0, b_1), ..., [b_{N-1}, b_N].

    Returns (cell indices, counts).  A point outside every cell raises
    :class:`PartitionError`.
    """
    b = np.asarray(breakpoints, dtype=float)
    if b.size < 2:
        raise PartitionError("partition needs at least two breakpoints")
    if np.any(np.diff(b) <= 0):
        raise PartitionError("breakpoints must be strictly increasing")
    x = np.asarray(x, dtype=float)
    if x.size and (x.min() < b[0] or x.max() > b[-1]):
        raise PartitionError("observation outside the partition range")
    cells = np.clip(np.searchsorted(b, x, side="right") - 1, 0, b.size - 2)
    counts = np.bincount(cells, minlength=b.size - 1)
    return cells, counts


def param_distance(model, a, b, metric: str) -> float:
    """Distance between two parameters of the same family.

    Tags: ``euclidean``, ``hellinger`` (of the induced single-observation
    laws), ``tv`` (same), ``max-joint-bin`` (Markov only: max absolute
    difference of stationary two-step joint bin probabilities).
    """
    if metric == "euclidean":
        if isinstance(model, UniformLocationModel):
            return abs(float(a) - float(b))
        if isinstance(model, SparseMeansModel):
            return float(np.linalg.norm(np.asarray(a, float) - np.asarray(b, float)))
        if isinstance(model, (CategoricalModel, FreedmanModel)):
            return float(np.linalg.norm(a.weights - b.weights))
        raise ConfigurationError(f"euclidean metric unsupported for {type(model).__name__}")
    if metric in ("hellinger", "tv"):
        if isinstance(model, (CategoricalModel, FreedmanModel)):
            return hellinger(a, b) if metric == "hellinger" else total_variation(a, b)
        raise ConfigurationError(f"{metric} metric needs a finite-support family")
    if metric == "max-joint-bin":
        if not isinstance(model, MarkovModel):
            raise ConfigurationError("max-joint-bin metric is Markov-specific")
        return float(np.abs(joint_two_step(a) - joint_two_step(b)).max())
    raise ConfigurationError(f"unknown metric tag {metric!r}")
