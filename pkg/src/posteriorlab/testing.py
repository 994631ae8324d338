"""Bayesian test sequences: constructions, exact/Monte-Carlo power reports,
and the inequalities that bound them.

Integrated type-I error is the unnormalized integral of the test over the
B-region, int_B P_theta(phi) dPi, and likewise for type-II over V; with that
convention the barycentre likelihood-ratio test's total error equals the
pointwise minimum of the two weighted predictive densities on enumerable
spaces.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CoverError, DomainError, EmptyRegionError, RefusalError
from .measures import FiniteDist, hellinger
from .models import CategoricalModel, FreedmanModel
from .priors import (
    AtomicPrior,
    PredictiveHandle,
    Region,
    local_prior_predictive,
    posterior_update_atomic,
    region_mass,
)

ENUMERATION_CUTOFF = 10**7
DEFAULT_ALPHA_GRID = np.round(np.linspace(0.0, 1.0, 101), 2)


@dataclass(frozen=True)
class TestFunction:
    """Measurable map from an n-sample to [0, 1]."""

    __test__ = False  # not a pytest test class despite the name

    evaluator: object
    kind: str
    meta: dict = field(default_factory=dict)

    def __call__(self, x) -> float:
        value = float(self.evaluator(x))
        if not 0.0 <= value <= 1.0:
            raise DomainError(f"test value {value} outside [0, 1]")
        return value


@dataclass(frozen=True)
class PowerReport:
    type_i: float
    type_ii: float
    total: float
    method: str  # "exact" | "mc"
    stderr_i: float = 0.0
    stderr_ii: float = 0.0


def enumerate_samples(n_cells: int, n: int):
    """All n-samples from a finite space, or a refusal past the cutoff."""
    if n_cells**n > ENUMERATION_CUTOFF:
        raise RefusalError(
            f"{n_cells}^{n} sample points exceed the enumeration cutoff "
            f"{ENUMERATION_CUTOFF}; use Monte-Carlo evaluation"
        )
    return (np.array(x, dtype=int) for x in itertools.product(range(n_cells), repeat=n))


def _require_finite_family(model):
    if not isinstance(model, (CategoricalModel, FreedmanModel)):
        raise RefusalError("exact enumeration needs a finite-support family")
    return model.n_cells


def barycentre_lr_test(prior: AtomicPrior, b: Region, v: Region, model, n: int) -> TestFunction:
    """Likelihood-ratio test between the two local prior predictives:
    phi(x) = 1 when Pi(V) p_V(x) > Pi(B) p_B(x), with ties at 1/2.
    """
    mass_b = region_mass(prior, b).value
    mass_v = region_mass(prior, v).value
    if mass_b <= 0.0 or mass_v <= 0.0:
        raise EmptyRegionError("both regions need positive prior mass")
    pb = local_prior_predictive(prior, model, b, n)
    pv = local_prior_predictive(prior, model, v, n)
    log_b, log_v = math.log(mass_b), math.log(mass_v)

    def evaluator(x):
        sb = log_b + pb.logdensity(x)
        sv = log_v + pv.logdensity(x)
        if sv > sb:
            return 1.0
        if sv < sb:
            return 0.0
        return 0.5

    return TestFunction(
        evaluator,
        kind="barycentre-lr",
        meta={"mass_b": mass_b, "mass_v": mass_v, "n": n},
    )


def bayes_test_power(
    test: TestFunction,
    prior: AtomicPrior,
    b: Region,
    v: Region,
    model,
    n: int,
    method: str = "exact",
    replications: int = 2000,
    rng: np.random.Generator | None = None,
) -> PowerReport:
    """Integrated type-I error over B plus integrated type-II error over V."""
    mass_b = region_mass(prior, b).value
    mass_v = region_mass(prior, v).value
    if mass_b <= 0.0 or mass_v <= 0.0:
        raise EmptyRegionError("both regions need positive prior mass")
    pb = local_prior_predictive(prior, model, b, n)
    pv = local_prior_predictive(prior, model, v, n)
    if method == "exact":
        n_cells = _require_finite_family(model)
        t1, t2 = [], []
        for x in enumerate_samples(n_cells, n):
            phi = test(x)
            if phi > 0.0:
                t1.append(phi * math.exp(pb.logdensity(x)))
            if phi < 1.0:
                t2.append((1.0 - phi) * math.exp(pv.logdensity(x)))
        type_i = mass_b * math.fsum(t1)
        type_ii = mass_v * math.fsum(t2)
        return PowerReport(type_i, type_ii, type_i + type_ii, "exact")
    if method == "mc":
        if rng is None:
            raise DomainError("Monte-Carlo power evaluation needs an rng")
        phis_b = np.array([test(pb.sample(rng)) for _ in range(replications)])
        phis_v = np.array([1.0 - test(pv.sample(rng)) for _ in range(replications)])
        type_i = mass_b * float(phis_b.mean())
        type_ii = mass_v * float(phis_v.mean())
        return PowerReport(
            type_i,
            type_ii,
            type_i + type_ii,
            "mc",
            stderr_i=mass_b * float(phis_b.std(ddof=1)) / math.sqrt(replications),
            stderr_ii=mass_v * float(phis_v.std(ddof=1)) / math.sqrt(replications),
        )
    raise DomainError(f"unknown power method {method!r}")


def _weighted_predictive_vectors(prior, b, v, model, n):
    n_cells = _require_finite_family(model)
    mass_b = region_mass(prior, b).value
    mass_v = region_mass(prior, v).value
    pb = local_prior_predictive(prior, model, b, n)
    pv = local_prior_predictive(prior, model, v, n)
    wb, wv = [], []
    for x in enumerate_samples(n_cells, n):
        wb.append(mass_b * math.exp(pb.logdensity(x)))
        wv.append(mass_v * math.exp(pv.logdensity(x)))
    return np.array(wb), np.array(wv)


def _transform_value(wb: np.ndarray, wv: np.ndarray, alpha: float) -> float:
    if alpha == 0.0:
        terms = np.where(wb > 0.0, wv, 0.0)
    elif alpha == 1.0:
        terms = np.where(wv > 0.0, wb, 0.0)
    else:
        terms = np.where((wb > 0.0) & (wv > 0.0), wb**alpha * wv ** (1.0 - alpha), 0.0)
    return math.fsum(terms.tolist())


def hellinger_transform_power_curve(
    prior, b, v, model, n, alpha_grid=DEFAULT_ALPHA_GRID
) -> tuple[np.ndarray, np.ndarray]:
    wb, wv = _weighted_predictive_vectors(prior, b, v, model, n)
    alphas = np.asarray(alpha_grid, dtype=float)
    if np.any(alphas < 0) or np.any(alphas > 1):
        raise DomainError("alpha grid must lie in [0, 1]")
    return alphas, np.array([_transform_value(wb, wv, a) for a in alphas])


def hellinger_transform_power_bound(
    prior, b, v, model, n, alpha_grid=DEFAULT_ALPHA_GRID
) -> float:
    """inf over the alpha-grid of sum_x (Pi(B) p_B(x))^alpha (Pi(V) p_V(x))^(1-alpha);
    an upper bound for the barycentre test's total error.
    """
    _, values = hellinger_transform_power_curve(prior, b, v, model, n, alpha_grid)
    return float(values.min())


def half_alpha_separation_bound(mass_b: float, mass_v: float, n: int, eps: float) -> float:
    """The alpha = 1/2 specialization 2 sqrt(Pi(B) Pi(V)) exp(-n eps^2) for
    Hellinger-separated convex B, V."""
    return 2.0 * math.sqrt(mass_b * mass_v) * math.exp(-n * eps**2)


def covering_test(
    p0: FiniteDist,
    eps: float,
    candidate_grid,
    prior: AtomicPrior,
    model,
    n: int,
) -> TestFunction:
    """Cover {H(P0, P) >= 4 eps} by radius-eps Hellinger balls around grid
    points and take the pointwise maximum of the per-ball barycentre tests
    against B = {H(P0, P) <= eps}.
    """
    if eps <= 0:
        raise DomainError("eps must be positive")
    b = Region(lambda p: hellinger(p0, p) <= eps, label="hellinger-core")
    v_atoms = [p for p in prior.parameters if hellinger(p0, p) >= 4.0 * eps]
    if not v_atoms:
        return TestFunction(lambda x: 0.0, kind="covering", meta={"balls": 0})
    centers = [q for q in candidate_grid if hellinger(p0, q) >= 3.0 * eps]
    uncovered = [
        p for p in v_atoms if all(hellinger(p, q) > eps for q in centers)
    ]
    if uncovered:
        raise CoverError(
            f"{len(uncovered)} region atoms farther than eps from every grid point"
        )
    subtests = []
    for q in centers:
        ball = Region(lambda p, q=q: hellinger(p, q) <= eps, label="cover-ball")
        if region_mass(prior, ball).value > 0.0:
            subtests.append(barycentre_lr_test(prior, b, ball, model, n))
    if not subtests:
        return TestFunction(lambda x: 0.0, kind="covering", meta={"balls": 0})

    def evaluator(x):
        return max(t(x) for t in subtests)

    return TestFunction(evaluator, kind="covering", meta={"balls": len(subtests)})


def empirical_joint_bins(z: np.ndarray, n_states: int) -> np.ndarray:
    """hat p_n(k, l) = n^-1 sum_i 1{Z_i = k, Z_{i-1} = l} for a path of n transitions."""
    z = np.asarray(z, dtype=int)
    n = z.size - 1
    if n < 1:
        raise DomainError("need at least one transition")
    c = np.zeros((n_states, n_states))
    np.add.at(c, (z[1:], z[:-1]), 1.0)
    return c / n


def hoeffding_markov_test(p0_joint: np.ndarray, eps: float) -> TestFunction:
    """Reject when any joint bin frequency deviates from its stationary value
    by eps or more (two-sided, maximum over bins)."""
    if eps <= 0:
        raise DomainError("eps must be positive")
    p0_joint = np.asarray(p0_joint, dtype=float)
    n_states = p0_joint.shape[0]

    def evaluator(z):
        hat = empirical_joint_bins(z, n_states)
        return 1.0 if np.abs(hat - p0_joint).max() >= eps else 0.0

    return TestFunction(evaluator, kind="hoeffding-markov", meta={"eps": eps})


def hoeffding_bound(lam: float, delta: float, n: int) -> float:
    """Per-bin one-sided exceedance bound exp(-lam^2 (n delta - 2/lam)^2 / (2n))
    for an ergodic chain with minimum transition entry lam; vacuously 1 when
    n delta <= 2/lam."""
    if lam <= 0 or delta <= 0 or n < 1:
        raise DomainError("need lam > 0, delta > 0, n >= 1")
    if n * delta <= 2.0 / lam:
        return 1.0
    return math.exp(-(lam**2) * (n * delta - 2.0 / lam) ** 2 / (2.0 * n))


def uniform_location_test(theta0: float, eps_n: float, side: str = "right") -> TestFunction:
    """One-sided support test for the uniform-location family."""
    if eps_n <= 0:
        raise DomainError("eps_n must be positive")
    if side == "right":
        evaluator = lambda x: 1.0 if float(np.min(x)) > theta0 + eps_n else 0.0
    elif side == "left":
        evaluator = lambda x: 1.0 if float(np.max(x)) < theta0 + 1.0 - eps_n else 0.0
    else:
        raise DomainError(f"unknown side {side!r}")
    return TestFunction(evaluator, kind="uniform-location", meta={"side": side, "eps": eps_n})


def weak_neighborhood_test(p0: FiniteDist, f, eps: float) -> TestFunction:
    """phi = 1{|mean of f over the sample - P0 f| >= (3/2) eps} for 0 <= f <= 1;
    separates |Pf - P0f| < eps from >= 2 eps."""
    f = np.asarray(f, dtype=float)
    if f.shape != (p0.n,):
        raise DomainError("f must be defined on the support of p0")
    if f.min() < 0.0 or f.max() > 1.0:
        raise DomainError("f must take values in [0, 1]")
    p0f = math.fsum((p0.weights * f).tolist())

    def evaluator(x):
        stat = float(f[np.asarray(x, dtype=int)].mean())
        return 1.0 if abs(stat - p0f) >= 1.5 * eps else 0.0

    return TestFunction(evaluator, kind="weak-neighborhood", meta={"eps": eps, "p0f": p0f})


def weak_neighborhood_bound(eps: float, n: int) -> float:
    """Two-sided Hoeffding bound 2 exp(-n eps^2 / 2) on each error of the
    weak-neighborhood test; vacuous (>= 1) for small n, reported not asserted."""
    return 2.0 * math.exp(-n * eps**2 / 2.0)


def freedman_escape_test(forbidden_symbols) -> TestFunction:
    """phi = product over m of 1{some observation equals the forbidden symbol k(m)}."""
    symbols = tuple(int(k) for k in forbidden_symbols)
    if not symbols:
        raise DomainError("need at least one forbidden symbol")

    def evaluator(x):
        x = np.asarray(x, dtype=int)
        if x.size == 0:
            return 0.0
        return 1.0 if all((x == k).any() for k in symbols) else 0.0

    return TestFunction(evaluator, kind="freedman-escape", meta={"symbols": symbols})


def freedman_escape_expectation(p: FiniteDist, forbidden_symbols, n: int) -> float:
    """Closed-form E phi_n = P(every forbidden symbol appears in n draws),
    by inclusion-exclusion over the set of missing symbols."""
    symbols = tuple(int(k) for k in forbidden_symbols)
    terms = []
    for r in range(len(symbols) + 1):
        for t in itertools.combinations(symbols, r):
            miss = math.fsum(p[k] for k in t)
            terms.append((-1.0) ** r * (1.0 - miss) ** n)
    return min(max(math.fsum(terms), 0.0), 1.0)


@dataclass(frozen=True)
class ConcentrationReport:
    lhs: float
    rhs: float
    slack: float
    type_i_conditional: float
    type_ii_over_v: float
    mass_b: float
    quotient: float  # measured total power over Pi(B)


def concentration_check(
    prior: AtomicPrior, b: Region, v: Region, test: TestFunction, model, n: int
) -> ConcentrationReport:
    """Both sides of the posterior-concentration inequality

        int P_theta Pi(V|X) dPi(theta|B)
            <= int P_theta phi dPi(theta|B) + Pi(B)^-1 int_V P_theta(1-phi) dPi,

    evaluated exactly by full sample enumeration.  Slack is rhs - lhs.
    """
    n_cells = _require_finite_family(model)
    mass_b = region_mass(prior, b).value
    if mass_b <= 0.0:
        raise EmptyRegionError("B needs positive prior mass")
    mass_v = region_mass(prior, v).value
    pb = local_prior_predictive(prior, model, b, n)
    pv = local_prior_predictive(prior, model, v, n) if mass_v > 0.0 else None
    lhs_terms, t1_terms, t2_terms = [], [], []
    for x in enumerate_samples(n_cells, n):
        density_b = math.exp(pb.logdensity(x))
        phi = test(x)
        if density_b > 0.0:
            posterior = posterior_update_atomic(prior, model, x)
            lhs_terms.append(density_b * region_mass(posterior, v).value)
            t1_terms.append(density_b * phi)
        if pv is not None and phi < 1.0:
            t2_terms.append((1.0 - phi) * math.exp(pv.logdensity(x)))
    lhs = math.fsum(lhs_terms)
    type_i = math.fsum(t1_terms)
    type_ii = mass_v * math.fsum(t2_terms)
    rhs = type_i + type_ii / mass_b
    power = mass_b * type_i + type_ii
    return ConcentrationReport(
        lhs=lhs,
        rhs=rhs,
        slack=rhs - lhs,
        type_i_conditional=type_i,
        type_ii_over_v=type_ii,
        mass_b=mass_b,
        quotient=power / mass_b,
    )


@dataclass(frozen=True)
class LeCamReport:
    lhs: float
    tv_term: float
    type_i_conditional: float
    type_ii_scaled: float
    rhs: float
    holds: bool


def lecam_inequality_terms(
    prior: AtomicPrior,
    b: Region,
    v: Region,
    test: TestFunction,
    model,
    p0: FiniteDist,
    n: int,
) -> LeCamReport:
    """Three-term upper bound for the true-law posterior mass of V:

        P0^n Pi(V|X) <= ||P0^n - P^(Pi|B)_n|| + int P_theta phi dPi(theta|B)
                        + Pi(B)^-1 int_V P_theta(1-phi) dPi.
    """
    n_cells = _require_finite_family(model)
    mass_b = region_mass(prior, b).value
    mass_v = region_mass(prior, v).value
    pb = local_prior_predictive(prior, model, b, n)
    pv = local_prior_predictive(prior, model, v, n) if mass_v > 0.0 else None
    lhs_terms, tv_terms, t1_terms, t2_terms = [], [], [], []
    base_model = CategoricalModel(n_cells) if not isinstance(model, CategoricalModel) else model
    for x in enumerate_samples(n_cells, n):
        d0 = math.exp(base_model.loglik(p0, x))
        db = math.exp(pb.logdensity(x))
        phi = test(x)
        tv_terms.append(abs(d0 - db))
        if d0 > 0.0:
            posterior = posterior_update_atomic(prior, model, x)
            lhs_terms.append(d0 * region_mass(posterior, v).value)
        if db > 0.0:
            t1_terms.append(db * phi)
        if pv is not None and phi < 1.0:
            t2_terms.append((1.0 - phi) * math.exp(pv.logdensity(x)))
    lhs = math.fsum(lhs_terms)
    tv_term = 0.5 * math.fsum(tv_terms)
    type_i = math.fsum(t1_terms)
    type_ii = (mass_v * math.fsum(t2_terms)) / mass_b if mass_v > 0.0 else 0.0
    rhs = tv_term + type_i + type_ii
    return LeCamReport(lhs, tv_term, type_i, type_ii, rhs, holds=rhs >= lhs - 1e-12)
