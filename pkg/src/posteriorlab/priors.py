"""Prior representations, exact posterior computation, predictive handles,
regions and credible-set machinery.

Continuous priors enter as grid or Monte-Carlo atomizations; everything
downstream is then exact for the discretized model.  All posterior weight
arithmetic happens in log space with log-sum-exp; minus-infinity atoms are
dropped before normalization, and losing *all* atoms is a first-class
:class:`~posteriorlab.errors.DominationError` with diagnostics, never a
silent renormalization.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from .errors import (
    AccuracyError,
    DimensionError,
    DomainError,
    DominationError,
    EmptyRegionError,
    ParameterError,
    RefusalError,
)
from .measures import FiniteDist, TransitionMatrix, kl_divergence
from .models import (
    CategoricalModel,
    FreedmanModel,
    MarkovModel,
    SparseMeansModel,
    UniformLocationModel,
    param_distance,
)

_SUM_TOL = 1e-12
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# priors


@dataclass(frozen=True)
class AtomicPrior:
    """Finitely many parameter atoms with positive weights summing to 1."""

    parameters: tuple
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size != len(self.parameters):
            raise DimensionError("one weight per atom required")
        if np.any(w <= 0):
            raise DomainError("atom weights must be strictly positive")
        total = math.fsum(w.tolist())
        if abs(total - 1.0) > _SUM_TOL:
            raise DomainError(f"atom weights sum to {total!r}, not 1")
        w = w / total
        w.setflags(write=False)
        object.__setattr__(self, "parameters", tuple(self.parameters))
        object.__setattr__(self, "weights", w)

    @property
    def n_atoms(self) -> int:
        return len(self.parameters)

    @staticmethod
    def uniform(parameters) -> "AtomicPrior":
        parameters = tuple(parameters)
        return AtomicPrior(parameters, np.full(len(parameters), 1.0 / len(parameters)))


@dataclass(frozen=True)
class DirichletPrior:
    concentration: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.concentration, dtype=float)
        if a.ndim != 1 or np.any(a <= 0):
            raise DomainError("concentration entries must be positive")
        a.setflags(write=False)
        object.__setattr__(self, "concentration", a)

    @property
    def n(self) -> int:
        return self.concentration.size


@dataclass(frozen=True)
class ProductDirichletPrior:
    """Independent Dirichlet rows, the conjugate prior for a TransitionMatrix."""

    concentrations: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.concentrations, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or np.any(a <= 0):
            raise DomainError("need a square matrix of positive concentrations")
        a.setflags(write=False)
        object.__setattr__(self, "concentrations", a)

    @property
    def n(self) -> int:
        return self.concentrations.shape[0]


@dataclass(frozen=True)
class SpikeSlabPrior:
    """Sparsity pmf over support sizes plus a slab log-density on the reals.

    ``log_lipschitz`` is the stored constant c of the slab smoothness bound
    |log g(t) - log g(s)| <= c (1 + |t - s|); it is spot-checked on a grid
    at construction.
    """

    sparsity_pmf: FiniteDist
    slab_logpdf: Callable[[float], float]
    log_lipschitz: float

    def __post_init__(self):
        if self.log_lipschitz <= 0:
            raise DomainError("log-Lipschitz constant must be positive")
        grid = np.linspace(-8.0, 8.0, 33)
        vals = np.array([self.slab_logpdf(float(t)) for t in grid])
        for i in range(grid.size):
            for j in range(i + 1, grid.size):
                gap = abs(vals[i] - vals[j])
                allowed = self.log_lipschitz * (1.0 + abs(grid[i] - grid[j]))
                if gap > allowed + 1e-9:
                    raise DomainError(
                        f"slab violates the log-Lipschitz bound at ({grid[i]}, {grid[j]})"
                    )

    @staticmethod
    def laplace(dim: int, sparsity_pmf: FiniteDist, scale: float = 1.0) -> "SpikeSlabPrior":
        b = float(scale)
        return SpikeSlabPrior(
            sparsity_pmf,
            lambda t: -math.log(2.0 * b) - abs(t) / b,
            log_lipschitz=max(1.0 / b, abs(math.log(2.0 * b)) + 1.0),
        )


# ---------------------------------------------------------------------------
# regions


@dataclass(frozen=True)
class Region:
    """Parameter region: a membership predicate, optionally with structure.

    ``ball`` is a (center, radius, metric-tag) triple when the region is a
    metric ball; ``members`` lists explicit member parameters when the region
    was produced atom-by-atom (credible sets).  ``achieved_mass``/``slack``
    carry credible-set bookkeeping.
    """

    predicate: Callable[[object], bool]
    label: str = ""
    ball: tuple | None = None
    members: tuple | None = None
    achieved_mass: float | None = None
    slack: bool = False

    def contains(self, theta) -> bool:
        return bool(self.predicate(theta))

    @staticmethod
    def everything(label: str = "everything") -> "Region":
        return Region(lambda theta: True, label=label)

    @staticmethod
    def empty(label: str = "empty") -> "Region":
        return Region(lambda theta: False, label=label)

    @staticmethod
    def metric_ball(model, center, radius: float, metric: str, label: str = "") -> "Region":
        def predicate(theta):
            return param_distance(model, theta, center, metric) <= radius

        return Region(predicate, label=label, ball=(center, float(radius), metric))

    @staticmethod
    def metric_complement_ball(
        model, center, radius: float, metric: str, label: str = ""
    ) -> "Region":
        """The exterior {theta : dist(theta, center) > radius}."""

        def predicate(theta):
            return param_distance(model, theta, center, metric) > radius

        return Region(predicate, label=label)

    @staticmethod
    def from_members(members, key=None, label: str = "") -> "Region":
        """Region given by an explicit list of member parameters.

        ``key`` maps a parameter to a hashable identity; defaults to identity
        for hashable parameters and to byte-serialization for arrays.
        """
        members = tuple(members)
        if key is None:
            key = _param_key
        table = {key(m) for m in members}
        return Region(lambda theta: key(theta) in table, label=label, members=members)


def _param_key(theta):
    if isinstance(theta, FiniteDist):
        return ("fd", theta.weights.tobytes())
    if isinstance(theta, TransitionMatrix):
        return ("tm", theta.matrix.tobytes())
    if isinstance(theta, np.ndarray):
        return ("arr", theta.tobytes())
    return theta


def kl_ball_region(p0: FiniteDist, eps: float, label: str = "") -> Region:
    """{P : KL(P0, P) < eps^2}, the Kullback-Leibler neighbourhood of p0."""
    return Region(lambda p: kl_divergence(p0, p) < eps**2, label=label or f"kl-ball({eps})")


def ggv_region(p0: FiniteDist, eps: float, label: str = "") -> Region:
    """{P : KL(P0, P) < eps^2 and second log-ratio moment < eps^2}.

    A subset of the plain KL ball with the same radius.
    """

    def predicate(p: FiniteDist) -> bool:
        kl = kl_divergence(p0, p)
        if not kl < eps**2:
            return False
        second = 0.0
        for a, b in zip(p0.weights.tolist(), p.weights.tolist()):
            if a == 0.0:
                continue
            if b == 0.0:
                return False
            second += a * math.log(a / b) ** 2
        return second < eps**2

    return Region(predicate, label=label or f"ggv({eps})")


# ---------------------------------------------------------------------------
# posterior states


@dataclass(frozen=True)
class AtomicPosterior:
    """Re-weighted atoms; also records which prior atoms were eliminated."""

    parameters: tuple
    weights: np.ndarray
    log_weights: np.ndarray
    dead_atoms: tuple = ()

    kind = "atomic"

    @property
    def n_atoms(self) -> int:
        return len(self.parameters)

    def map_atom(self):
        """Posterior-weight-maximizing atom (ties by atom index)."""
        return self.parameters[int(np.argmax(self.weights))]


@dataclass(frozen=True)
class DirichletPosterior:
    concentration: np.ndarray

    kind = "dirichlet"

    def mean(self) -> FiniteDist:
        return FiniteDist(self.concentration / math.fsum(self.concentration.tolist()))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.dirichlet(self.concentration, size=size)


@dataclass(frozen=True)
class ProductDirichletPosterior:
    concentrations: np.ndarray

    kind = "product-dirichlet"

    def mean(self) -> TransitionMatrix:
        rows = self.concentrations / self.concentrations.sum(axis=1, keepdims=True)
        return TransitionMatrix(rows)

    def sample(self, rng: np.random.Generator, size: int) -> list[TransitionMatrix]:
        n = self.concentrations.shape[0]
        draws = np.stack(
            [rng.dirichlet(self.concentrations[l], size=size) for l in range(n)], axis=1
        )
        return [TransitionMatrix(draws[i]) for i in range(size)]


@dataclass(frozen=True)
class SpikeSlabPosterior:
    """Exact posterior over support subsets plus conditional coordinate laws.

    ``subsets`` are index tuples; ``weights`` their posterior probabilities.
    ``log_marginals[i]`` is log m(x_i) with m the slab-convolved density; the
    conditional density of theta_i given i in S is g(t) phi(x_i - t) / m(x_i).
    ``quadrature_error`` is the reported per-coordinate quadrature bound.
    """

    subsets: tuple
    weights: np.ndarray
    log_marginals: np.ndarray
    data: np.ndarray
    prior: SpikeSlabPrior
    quadrature_error: float

    kind = "spike-slab-exact"

    def support_mass(self, subset: tuple) -> float:
        subset = tuple(sorted(subset))
        for s, w in zip(self.subsets, self.weights.tolist()):
            if s == subset:
                return w
        return 0.0

    def region_mass_ssq(self, threshold: float, theta0: np.ndarray, size_cap: int) -> float:
        """Posterior mass of {|S| <= size_cap, sum-of-squares deviation condition}.

        Implemented in :mod:`posteriorlab.experiments`; kept here as mass over
        subsets only when the squared-deviation handling is done by the caller.
        """
        raise NotImplementedError("use experiments.sparse_region_mass")


# ---------------------------------------------------------------------------
# posterior updates


def _first_forbidden_index(model, theta, x) -> int | None:
    """Smallest sample index at which the atom's likelihood hits zero."""
    if isinstance(model, (CategoricalModel, FreedmanModel)):
        zero = theta.weights == 0.0
        for i, xi in enumerate(np.asarray(x, dtype=int).tolist()):
            if zero[xi]:
                return i
        return None
    if isinstance(model, UniformLocationModel):
        for i, xi in enumerate(np.asarray(x, dtype=float).tolist()):
            if xi < theta or xi > theta + 1.0:
                return i
        return None
    if isinstance(model, MarkovModel):
        z = np.asarray(x, dtype=int)
        if not model.condition_on_start and model.initial_law(theta)[int(z[0])] == 0.0:
            return 0
        for i in range(1, z.size):
            if theta.matrix[z[i - 1], z[i]] == 0.0:
                return i
        return None
    return None


def posterior_update_atomic(prior: AtomicPrior, model, x) -> AtomicPosterior:
    """Exact Bayes update of an atomic prior: w_i proportional to
    prior weight times likelihood, normalized by log-sum-exp.

    Raises :class:`DominationError` when every atom has likelihood zero,
    reporting which atoms died and the first forbidden observation index.
    """
    logs = np.array([model.loglik(theta, x) for theta in prior.parameters])
    alive = np.isfinite(logs)
    dead = tuple(int(i) for i in np.flatnonzero(~alive))
    if not alive.any():
        first = None
        for i in dead:
            idx = _first_forbidden_index(model, prior.parameters[i], x)
            if idx is not None:
                first = idx if first is None else min(first, idx)
        raise DominationError(
            "all prior atoms assign likelihood zero to the sample",
            dead_atoms=dead,
            first_forbidden_index=first,
        )
    log_post = np.full(logs.shape, -math.inf)
    live = np.flatnonzero(alive)
    scores = logs[live] + np.log(prior.weights[live])
    log_post[live] = scores - logsumexp(scores)
    weights = np.exp(log_post)
    weights = weights / math.fsum(weights.tolist())
    return AtomicPosterior(prior.parameters, weights, log_post, dead_atoms=dead)


def posterior_update_dirichlet(prior: DirichletPrior, counts) -> DirichletPosterior:
    counts = np.asarray(counts)
    if counts.shape != prior.concentration.shape:
        raise DimensionError("counts shape mismatch")
    if np.any(counts < 0) or not np.issubdtype(counts.dtype, np.integer):
        raise DomainError("counts must be nonnegative integers")
    return DirichletPosterior(prior.concentration + counts)


def posterior_update_product_dirichlet(
    prior: ProductDirichletPrior, transition_counts
) -> ProductDirichletPosterior:
    c = np.asarray(transition_counts)
    if c.shape != prior.concentrations.shape:
        raise DimensionError("transition-count shape mismatch")
    if np.any(c < 0) or not np.issubdtype(c.dtype, np.integer):
        raise DomainError("counts must be nonnegative integers")
    return ProductDirichletPosterior(prior.concentrations + c)


# ---------------------------------------------------------------------------
# spike-and-slab exact posterior (two independent implementation paths)


def _slab_marginal_quad(prior: SpikeSlabPrior, x: float) -> tuple[float, float]:
    """m(x) = int g(t) phi(x - t) dt by adaptive quadrature; returns (value, error)."""

    def integrand(t):
        return math.exp(prior.slab_logpdf(t)) * math.exp(
            -0.5 * (x - t) ** 2 - _LOG_SQRT_2PI
        )

    val, err = integrate.quad(
        integrand, x - 12.0, x + 12.0, epsabs=1e-13, epsrel=1e-12, limit=200,
        points=[0.0] if -12.0 < -x < 12.0 else None,
    )
    return val, err


def _slab_marginal_gauss(prior: SpikeSlabPrior, x: float, panels: int = 24, order: int = 40) -> float:
    """Second quadrature path: composite Gauss-Legendre on [x-12, x+12].

    Panel edges include 0 so slab kinks (Laplace) sit on panel boundaries.
    """
    nodes, wts = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(x - 12.0, x + 12.0, panels + 1)
    if edges[0] < 0.0 < edges[-1]:
        edges = np.unique(np.concatenate([edges, [0.0]]))
    total = []
    for a, b in zip(edges[:-1], edges[1:]):
        t = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        f = np.array(
            [
                math.exp(prior.slab_logpdf(float(ti)))
                * math.exp(-0.5 * (x - ti) ** 2 - _LOG_SQRT_2PI)
                for ti in t
            ]
        )
        total.append(0.5 * (b - a) * float(np.dot(wts, f)))
    return math.fsum(total)


def spike_slab_posterior_exact(
    prior: SpikeSlabPrior,
    x,
    n_max: int = 14,
    subset_cap: int | None = None,
) -> SpikeSlabPosterior:
    """Exact posterior over support subsets S of {0, ..., n-1}.

    weight(S) proportional to
    pmf(|S|) * binom(n, |S|)^-1 * prod_{i in S} m(x_i) * prod_{i not in S} phi(x_i),
    with m the slab-convolved marginal computed by adaptive quadrature and
    cross-checked against a composite Gauss-Legendre rule.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n > n_max:
        raise RefusalError(
            f"n={n} exceeds the exact-enumeration cap n_max={n_max}; refusing"
        )
    if prior.sparsity_pmf.n != n + 1:
        raise ParameterError("sparsity pmf must live on {0, ..., n}")
    cap = n if subset_cap is None else min(subset_cap, n)

    log_m = np.empty(n)
    quad_err = 0.0
    for i, xi in enumerate(x.tolist()):
        val, err = _slab_marginal_quad(prior, xi)
        check = _slab_marginal_gauss(prior, xi)
        if not val > 0.0 or abs(val - check) > 1e-10 * max(val, 1e-300):
            raise AccuracyError(
                f"slab-marginal quadrature disagreement at coordinate {i}: "
                f"{val!r} vs {check!r}"
            )
        log_m[i] = math.log(val)
        quad_err = max(quad_err, err)
    log_phi = -0.5 * x**2 - _LOG_SQRT_2PI
    sum_log_phi = math.fsum(log_phi.tolist())

    subsets = []
    scores = []
    pmf = prior.sparsity_pmf
    for k in range(cap + 1):
        if pmf[k] == 0.0:
            continue
        base = math.log(pmf[k]) - math.log(math.comb(n, k))
        for s in itertools.combinations(range(n), k):
            inc = math.fsum((log_m[list(s)] - log_phi[list(s)]).tolist()) if s else 0.0
            subsets.append(s)
            scores.append(base + sum_log_phi + inc)
    scores = np.array(scores)
    log_w = scores - logsumexp(scores)
    weights = np.exp(log_w)
    weights = weights / math.fsum(weights.tolist())
    return SpikeSlabPosterior(
        subsets=tuple(subsets),
        weights=weights,
        log_marginals=log_m,
        data=x,
        prior=prior,
        quadrature_error=quad_err,
    )


def spike_slab_posterior_bruteforce(
    prior: SpikeSlabPrior, x, subset_cap: int | None = None
) -> dict:
    """Independent re-enumeration of the subset posterior, for cross-checking.

    Walks binary inclusion masks instead of combinations, recomputes every
    marginal with the Gauss-Legendre path only, and accumulates plain
    (non-log) products with compensated summation.  Returns a dict mapping
    subset tuple to posterior weight.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    cap = n if subset_cap is None else min(subset_cap, n)
    m = np.array([_slab_marginal_gauss(prior, xi) for xi in x.tolist()])
    phi = np.exp(-0.5 * x**2) / math.sqrt(2.0 * math.pi)
    pmf = prior.sparsity_pmf

    raw = {}
    for mask in itertools.product((0, 1), repeat=n):
        k = sum(mask)
        if k > cap or pmf[k] == 0.0:
            continue
        prod = pmf[k] / math.comb(n, k)
        for i, bit in enumerate(mask):
            prod *= m[i] if bit else phi[i]
        raw[tuple(i for i, bit in enumerate(mask) if bit)] = prod
    total = math.fsum(raw.values())
    return {s: v / total for s, v in raw.items()}


# ---------------------------------------------------------------------------
# predictive handles


@dataclass(frozen=True)
class PredictiveHandle:
    """Mixture-of-laws handle: draws a parameter, then a sample from it.

    ``logdensity`` evaluates the mixture log density at an n-sample by
    log-sum-exp over the atoms.
    """

    model: object
    parameters: tuple
    weights: np.ndarray
    n: int

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        w = w / math.fsum(w.tolist())
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "parameters", tuple(self.parameters))

    def logdensity(self, x) -> float:
        logs = np.array([self.model.loglik(theta, x) for theta in self.parameters])
        with np.errstate(divide="ignore"):
            scores = logs + np.log(self.weights)
        finite = np.isfinite(scores)
        if not finite.any():
            return -math.inf
        return float(logsumexp(scores[finite]))

    def sample(self, rng: np.random.Generator):
        i = int(rng.choice(len(self.parameters), p=self.weights))
        return self.model.sample(self.parameters[i], self.n, rng)

    def mixture_cell_probs(self) -> FiniteDist:
        """Single-observation mixture vector; finite-support families only."""
        if not isinstance(self.model, (CategoricalModel, FreedmanModel)):
            raise ParameterError("cell probabilities need a finite-support family")
        cells = np.zeros(self.model.n_cells)
        for w, p in zip(self.weights.tolist(), self.parameters):
            cells += w * p.weights
        return FiniteDist(cells / math.fsum(cells.tolist()))


def local_prior_predictive(prior: AtomicPrior, model, b: Region, n: int) -> PredictiveHandle:
    """The prior predictive conditioned on the parameter region B."""
    member = [i for i, theta in enumerate(prior.parameters) if b.contains(theta)]
    if not member:
        raise EmptyRegionError(f"region {b.label or '<anonymous>'} has prior mass 0")
    mass = math.fsum(prior.weights[member].tolist())
    params = tuple(prior.parameters[i] for i in member)
    return PredictiveHandle(model, params, prior.weights[member] / mass, n)


def prior_predictive(prior: AtomicPrior, model, n: int) -> PredictiveHandle:
    return PredictiveHandle(model, prior.parameters, prior.weights.copy(), n)


def posterior_predictive(posterior: AtomicPosterior, model, m: int) -> PredictiveHandle:
    alive = posterior.weights > 0.0
    params = tuple(p for p, a in zip(posterior.parameters, alive.tolist()) if a)
    return PredictiveHandle(model, params, posterior.weights[alive], m)


# ---------------------------------------------------------------------------
# region mass and credible sets


@dataclass(frozen=True)
class RegionMass:
    value: float
    stderr: float
    method: str  # "exact" | "mc"


def region_mass(
    dist,
    b: Region,
    rng: np.random.Generator | None = None,
    n_samples: int = 10_000,
) -> RegionMass:
    """Mass of a region under a prior or posterior.

    Atomic representations are summed exactly (compensated); Dirichlet and
    product-Dirichlet representations are Monte-Carlo estimates with a
    binomial standard error and require an explicit rng.
    """
    if isinstance(dist, (AtomicPrior, AtomicPosterior)):
        terms = [
            w for theta, w in zip(dist.parameters, dist.weights.tolist()) if b.contains(theta)
        ]
        return RegionMass(math.fsum(terms), 0.0, "exact")
    if isinstance(dist, (DirichletPrior, DirichletPosterior)):
        conc = dist.concentration
        if rng is None:
            raise ParameterError("Monte-Carlo region mass needs an rng")
        draws = rng.dirichlet(conc, size=n_samples)
        hits = np.fromiter(
            (b.contains(FiniteDist(row)) for row in draws), dtype=bool, count=n_samples
        )
        p = hits.mean()
        return RegionMass(float(p), math.sqrt(p * (1.0 - p) / n_samples), "mc")
    if isinstance(dist, (ProductDirichletPrior, ProductDirichletPosterior)):
        if rng is None:
            raise ParameterError("Monte-Carlo region mass needs an rng")
        conc = getattr(dist, "concentrations")
        n = conc.shape[0]
        rows = np.stack([rng.dirichlet(conc[l], size=n_samples) for l in range(n)], axis=1)
        hits = np.fromiter(
            (b.contains(TransitionMatrix(rows[i])) for i in range(n_samples)),
            dtype=bool,
            count=n_samples,
        )
        p = hits.mean()
        return RegionMass(float(p), math.sqrt(p * (1.0 - p) / n_samples), "mc")
    raise ParameterError(f"unsupported distribution type {type(dist).__name__}")


def credible_set(
    posterior: AtomicPosterior,
    level: float,
    shape: str = "atom-upper-level-set",
    metric: str | None = None,
    model=None,
) -> Region:
    """Smallest credible region of the requested shape at the given level.

    ``atom-upper-level-set``: fewest atoms of largest weight reaching the
    level, ties broken by atom index.  ``metric-ball``: smallest-radius ball
    centered at the maximum-weight atom.  When atomic granularity overshoots
    the level, the smallest achievable superset is returned with the
    ``slack`` flag set.
    """
    if not 0.0 < level <= 1.0:
        raise DomainError("level must lie in (0, 1]")
    w = posterior.weights
    if shape == "atom-upper-level-set":
        order = sorted(range(len(w)), key=lambda i: (-w[i], i))
        chosen = []
        mass = 0.0
        for i in order:
            if mass >= level - _SUM_TOL:
                break
            if w[i] == 0.0:
                break
            chosen.append(i)
            mass = math.fsum(w[chosen].tolist())
        members = [posterior.parameters[i] for i in sorted(chosen)]
        region = Region.from_members(members, label=f"credible-{level}")
        return _with_credible_fields(region, mass, level)
    if shape == "metric-ball":
        if metric is None or model is None:
            raise ParameterError("metric-ball shape needs a metric tag and a model")
        center = posterior.map_atom()
        dists = np.array(
            [param_distance(model, theta, center, metric) for theta in posterior.parameters]
        )
        order = sorted(range(len(w)), key=lambda i: (dists[i], i))
        mass = 0.0
        radius = 0.0
        chosen = []
        for i in order:
            if mass >= level - _SUM_TOL:
                break
            chosen.append(i)
            mass = math.fsum(w[chosen].tolist())
            radius = max(radius, float(dists[i]))
        region = Region.metric_ball(model, center, radius, metric, label=f"credible-{level}")
        members = [
            posterior.parameters[i] for i in range(len(w)) if dists[i] <= radius
        ]
        region = Region(
            region.predicate,
            label=region.label,
            ball=region.ball,
            members=tuple(members),
        )
        return _with_credible_fields(region, math.fsum(w[dists <= radius].tolist()), level)
    raise ParameterError(f"unknown credible-set shape {shape!r}")


def _with_credible_fields(region: Region, mass: float, level: float) -> Region:
    return Region(
        region.predicate,
        label=region.label,
        ball=region.ball,
        members=region.members,
        achieved_mass=mass,
        slack=mass > level + _SUM_TOL,
    )


def enlarge_credible(d: Region, eps: float, metric: str, model=None) -> Region:
    """Metric enlargement C = {theta : dist(theta, D) <= eps}; always contains D.

    With eps = 0 the enlargement is exactly D.  Ball-shaped regions enlarge
    by radius arithmetic; atom-listed regions minimize over members.
    """
    if eps < 0:
        raise DomainError("enlargement radius must be nonnegative")
    if eps == 0.0:
        return d
    if d.ball is not None and d.ball[2] == metric:
        center, radius, _ = d.ball
        if model is None:
            raise ParameterError("ball enlargement needs the model for the metric")
        region = Region.metric_ball(
            model, center, radius + eps, metric, label=f"{d.label}+{eps}"
        )
        return Region(
            region.predicate,
            label=region.label,
            ball=region.ball,
            members=d.members,
            achieved_mass=d.achieved_mass,
            slack=d.slack,
        )
    if d.members is None:
        raise ParameterError("enlargement needs a ball descriptor or explicit members")
    if model is None:
        raise ParameterError("enlargement needs the model for the metric")
    members = d.members

    def predicate(theta):
        if d.contains(theta):
            return True
        return any(param_distance(model, theta, m, metric) <= eps for m in members)

    return Region(
        predicate,
        label=f"{d.label}+{eps}",
        members=members,
        achieved_mass=d.achieved_mass,
        slack=d.slack,
    )


def region_diameter(d: Region, metric: str, model) -> float:
    """Diameter: 2*radius bookkeeping for balls, else pairwise max over members."""
    if d.ball is not None:
        return 2.0 * d.ball[1]
    if d.members is None:
        raise ParameterError("diameter needs explicit members or a ball descriptor")
    best = 0.0
    for a, b in itertools.combinations(d.members, 2):
        best = max(best, param_distance(model, a, b, metric))
    return best
