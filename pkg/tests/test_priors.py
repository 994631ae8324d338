import itertools
import math

import numpy as np
import pytest

from posteriorlab import FiniteDist, hellinger, kl_divergence, total_variation
from posteriorlab.errors import (
    DominationError,
    EmptyRegionError,
    RefusalError,
)
from posteriorlab.models import CategoricalModel, UniformLocationModel
from posteriorlab.priors import (
    AtomicPrior,
    DirichletPrior,
    ProductDirichletPrior,
    Region,
    SpikeSlabPrior,
    credible_set,
    enlarge_credible,
    ggv_region,
    kl_ball_region,
    local_prior_predictive,
    posterior_predictive,
    posterior_update_atomic,
    posterior_update_dirichlet,
    posterior_update_product_dirichlet,
    prior_predictive,
    region_diameter,
    region_mass,
    spike_slab_posterior_bruteforce,
    spike_slab_posterior_exact,
)

CAT2 = CategoricalModel(2)
FIVE_ATOMS = AtomicPrior(
    tuple(FiniteDist([p, 1 - p]) for p in (0.1, 0.3, 0.5, 0.7, 0.9)),
    np.array([0.1, 0.2, 0.4, 0.2, 0.1]),
)


class TestAtomicPosterior:
    def test_single_atom_prior_unchanged(self):
        prior = AtomicPrior.uniform([FiniteDist([0.5, 0.5])])
        post = posterior_update_atomic(prior, CAT2, np.array([0, 1, 1]))
        assert post.weights.tolist() == [1.0]

    def test_hand_multiplied_weight_ratio(self):
        prior = AtomicPrior.uniform([FiniteDist([0.5, 0.5]), FiniteDist([0.9, 0.1])])
        post = posterior_update_atomic(prior, CAT2, np.array([1, 1]))
        # likelihoods 0.25 and 0.01; equal prior weights
        assert post.weights[0] / post.weights[1] == pytest.approx(0.25 / 0.01, rel=1e-12)

    def test_matches_full_enumeration_oracle(self):
        """Independent oracle: plain products of probabilities, no log-space."""
        for n in range(1, 9):
            for x in itertools.product(range(2), repeat=n):
                x = np.array(x)
                post = posterior_update_atomic(FIVE_ATOMS, CAT2, x)
                raw = np.array(
                    [
                        w * math.prod(p[k] for k in x.tolist())
                        for p, w in zip(FIVE_ATOMS.parameters, FIVE_ATOMS.weights)
                    ]
                )
                oracle = raw / raw.sum()
                assert np.abs(post.weights - oracle).max() < 1e-12

    def test_uniform_location_grid_support(self):
        um = UniformLocationModel()
        grid = AtomicPrior.uniform([round(t, 3) for t in np.arange(-1, 1.001, 0.05)])
        x = um.sample(0.0, 50, np.random.default_rng(0))
        post = posterior_update_atomic(grid, um, x)
        lo, hi = x.max() - 1.0, x.min()
        feasible = [lo <= t <= hi for t in grid.parameters]
        # uniform prior weights restricted to the feasible window stay uniform
        alive = post.weights > 0
        assert alive.tolist() == feasible
        live = post.weights[alive]
        assert np.allclose(live, live[0])

    def test_domination_failure_diagnostics(self):
        prior = AtomicPrior.uniform([FiniteDist([1.0, 0.0]), FiniteDist([0.0, 1.0])])
        with pytest.raises(DominationError) as err:
            posterior_update_atomic(prior, CAT2, np.array([0, 1, 0]))
        assert err.value.dead_atoms == (0, 1)
        # atom 1 dies at observation 0, atom 0 at observation 1
        assert err.value.first_forbidden_index == 0


class TestConjugate:
    def test_zero_counts_identity(self):
        prior = DirichletPrior(np.array([2.0, 3.0]))
        post = posterior_update_dirichlet(prior, np.zeros(2, dtype=int))
        assert post.concentration.tolist() == [2.0, 3.0]

    def test_conjugacy_arithmetic(self):
        post = posterior_update_dirichlet(DirichletPrior(np.ones(3)), np.array([3, 0, 1]))
        assert post.concentration.tolist() == [4.0, 1.0, 2.0]

    def test_posterior_mean_matches_mc(self):
        post = posterior_update_dirichlet(DirichletPrior(np.ones(3)), np.array([5, 2, 3]))
        draws = post.sample(np.random.default_rng(11), 40000)
        mc = draws.mean(axis=0)
        stderr = draws.std(axis=0) / math.sqrt(40000)
        assert np.all(np.abs(mc - post.mean().weights) < 3 * stderr)

    def test_product_dirichlet_rowwise(self):
        prior = ProductDirichletPrior(np.ones((2, 2)))
        post = posterior_update_product_dirichlet(prior, np.array([[4, 1], [2, 3]]))
        assert post.concentrations.tolist() == [[5.0, 2.0], [3.0, 4.0]]
        draws = post.sample(np.random.default_rng(3), 20000)
        mc = np.mean([t.matrix for t in draws], axis=0)
        assert np.abs(mc - post.mean().matrix).max() < 0.01


class TestSpikeSlab:
    def pmf(self, n, kind="uniform"):
        if kind == "point0":
            w = np.zeros(n + 1)
            w[0] = 1.0
            return FiniteDist(w)
        return FiniteDist.uniform(n + 1)

    def test_always_empty_sparsity(self):
        prior = SpikeSlabPrior.laplace(3, self.pmf(3, "point0"))
        post = spike_slab_posterior_exact(prior, np.array([1.0, -0.5, 2.0]))
        assert post.subsets == ((),)
        assert post.weights.tolist() == [1.0]

    def test_one_dim_quadrature_oracle(self):
        prior = SpikeSlabPrior.laplace(1, self.pmf(1))
        post = spike_slab_posterior_exact(prior, np.array([0.0]))
        # weight({0}) / weight({}) = m(0) / phi(0) with m the Laplace-normal
        # convolution at 0; both quadrature paths must agree to 1e-10
        from posteriorlab.priors import _slab_marginal_gauss, _slab_marginal_quad

        m0, _ = _slab_marginal_quad(prior, 0.0)
        assert abs(m0 - _slab_marginal_gauss(prior, 0.0)) < 1e-12
        phi0 = 1.0 / math.sqrt(2 * math.pi)
        ratio = post.weights[post.subsets.index((0,))] / post.weights[post.subsets.index(())]
        assert ratio == pytest.approx(m0 / phi0, rel=1e-10)

    def test_true_support_mass_increases_with_signal(self):
        rng = np.random.default_rng(42)
        noise = rng.standard_normal(5)
        prior = SpikeSlabPrior.laplace(5, self.pmf(5))
        masses = []
        for s in (2.0, 5.0, 8.0):
            x = noise.copy()
            x[:2] += s
            post = spike_slab_posterior_exact(prior, x)
            masses.append(post.support_mass((0, 1)))
        assert masses[0] < masses[1] < masses[2]

    def test_refusal_above_cap(self):
        prior = SpikeSlabPrior.laplace(15, FiniteDist.uniform(16))
        with pytest.raises(RefusalError):
            spike_slab_posterior_exact(prior, np.zeros(15))

    def test_bruteforce_reenumeration_matches(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal(7)
        x[:3] += 3
        prior = SpikeSlabPrior.laplace(7, self.pmf(7))
        post = spike_slab_posterior_exact(prior, x, subset_cap=5)
        brute = spike_slab_posterior_bruteforce(prior, x, subset_cap=5)
        assert set(post.subsets) == set(brute)
        for s, w in zip(post.subsets, post.weights.tolist()):
            assert abs(w - brute[s]) < 1e-10


class TestPredictives:
    def test_whole_space_is_prior_predictive(self):
        everything = Region.everything()
        lpp = local_prior_predictive(FIVE_ATOMS, CAT2, everything, 3)
        pp = prior_predictive(FIVE_ATOMS, CAT2, 3)
        x = np.array([0, 1, 0])
        assert lpp.logdensity(x) == pytest.approx(pp.logdensity(x), abs=1e-14)

    def test_single_atom_region(self):
        target = FIVE_ATOMS.parameters[2]
        b = Region.from_members([target])
        lpp = local_prior_predictive(FIVE_ATOMS, CAT2, b, 2)
        x = np.array([0, 1])
        assert lpp.logdensity(x) == pytest.approx(CAT2.loglik(target, x), abs=1e-14)

    def test_two_atom_average(self):
        prior = AtomicPrior.uniform([FiniteDist([0.2, 0.8]), FiniteDist([0.6, 0.4])])
        pp = prior_predictive(prior, CAT2, 1)
        x = np.array([0])
        assert math.exp(pp.logdensity(x)) == pytest.approx(0.5 * 0.2 + 0.5 * 0.6, abs=1e-14)

    def test_empty_region_error(self):
        with pytest.raises(EmptyRegionError):
            local_prior_predictive(FIVE_ATOMS, CAT2, Region.empty(), 2)

    def test_posterior_predictive_mixture_tv(self):
        post = posterior_update_atomic(FIVE_ATOMS, CAT2, np.array([0, 0, 1]))
        pred = posterior_predictive(post, CAT2, 1)
        mix = pred.mixture_cell_probs()
        by_hand = np.zeros(2)
        for p, w in zip(post.parameters, post.weights):
            by_hand += w * p.weights
        assert total_variation(mix, FiniteDist(by_hand)) < 1e-14


def test_disintegration_balance_exact():
    """For every region V and every event A of the enumerable sample space:
    sum_{x in A} Pi(V|x) P^Pi(x) = sum_{theta in V} w_theta P_theta(A)."""
    prior = AtomicPrior(
        tuple(FiniteDist([p, 1 - p]) for p in (0.2, 0.5, 0.8)), np.array([0.3, 0.4, 0.3])
    )
    n = 3
    samples = [np.array(x) for x in itertools.product(range(2), repeat=n)]
    pp = prior_predictive(prior, CAT2, n)
    marginal = [math.exp(pp.logdensity(x)) for x in samples]
    post_v = {}
    for v_atoms in ((0,), (1,), (0, 2), (0, 1, 2)):
        v = Region.from_members([prior.parameters[i] for i in v_atoms])
        post_v[v_atoms] = [
            region_mass(posterior_update_atomic(prior, CAT2, x), v).value for x in samples
        ]
        rng = np.random.default_rng(0)
        for _ in range(40):
            mask = rng.integers(0, 2, size=len(samples)).astype(bool)
            lhs = math.fsum(
                pv * m for pv, m, keep in zip(post_v[v_atoms], marginal, mask) if keep
            )
            rhs = math.fsum(
                prior.weights[i]
                * math.fsum(
                    math.exp(CAT2.loglik(prior.parameters[i], x))
                    for x, keep in zip(samples, mask)
                    if keep
                )
                for i in v_atoms
            )
            assert abs(lhs - rhs) < 1e-12


def test_ggv_region_inside_kl_region():
    p0 = FiniteDist([0.4, 0.35, 0.25])
    for eps in (0.1, 0.3, 0.6):
        ggv = ggv_region(p0, eps)
        kl = kl_ball_region(p0, eps)
        rng = np.random.default_rng(17)
        for _ in range(500):
            p = FiniteDist(rng.dirichlet(np.ones(3)))
            if ggv.contains(p):
                assert kl.contains(p)
                assert kl_divergence(p0, p) < eps**2


class TestRegionMass:
    def test_everything_and_empty(self):
        assert region_mass(FIVE_ATOMS, Region.everything()).value == pytest.approx(1.0)
        assert region_mass(FIVE_ATOMS, Region.empty()).value == 0.0

    def test_dirichlet_mc_deterministic_under_seed(self):
        prior = DirichletPrior(np.ones(3))
        uniform = FiniteDist.uniform(3)
        b = Region(lambda p: total_variation(p, uniform) < 0.2)
        r1 = region_mass(prior, b, rng=np.random.default_rng(99), n_samples=20000)
        r2 = region_mass(prior, b, rng=np.random.default_rng(99), n_samples=20000)
        assert r1.value == r2.value
        assert r1.method == "mc" and 0.0 < r1.value < 1.0 and r1.stderr > 0


class TestCredibleSets:
    def post(self):
        return posterior_update_atomic(FIVE_ATOMS, CAT2, np.array([0, 0, 1, 0]))

    def test_tiny_level_single_atom(self):
        d = credible_set(self.post(), 1e-6)
        assert len(d.members) == 1

    def test_level_one_full_support(self):
        d = credible_set(self.post(), 1.0)
        assert len(d.members) == 5

    def test_minimal_atom_count_vs_exhaustive(self):
        post = self.post()
        level = 0.9
        d = credible_set(post, level)
        best = min(
            sum(mask)
            for mask in itertools.product((0, 1), repeat=post.n_atoms)
            if math.fsum(w for w, m in zip(post.weights, mask) if m) >= level - 1e-12
        )
        assert len(d.members) == best
        assert region_mass(post, d).value >= level - 1e-12

    def test_slack_flag_on_granularity(self):
        prior = AtomicPrior.uniform([FiniteDist([0.3, 0.7]), FiniteDist([0.7, 0.3])])
        post = posterior_update_atomic(prior, CAT2, np.array([0]))
        d = credible_set(post, 0.5)
        # a single atom overshoots the level; the superset is flagged
        assert d.achieved_mass > 0.5 and d.slack

    def test_metric_ball_shape(self):
        post = self.post()
        d = credible_set(post, 0.9, shape="metric-ball", metric="hellinger", model=CAT2)
        assert d.ball is not None
        center, radius, metric = d.ball
        assert metric == "hellinger"
        assert d.achieved_mass >= 0.9
        for theta in d.members:
            assert hellinger(theta, center) <= radius + 1e-12


class TestEnlargement:
    def test_zero_radius_identity(self):
        d = credible_set(self.make_post(), 0.8)
        c = enlarge_credible(d, 0.0, "hellinger", model=CAT2)
        assert c is d

    def make_post(self):
        return posterior_update_atomic(FIVE_ATOMS, CAT2, np.array([1, 1, 0]))

    def test_ball_radius_arithmetic_and_diameter(self):
        d = credible_set(self.make_post(), 0.9, shape="metric-ball", metric="hellinger", model=CAT2)
        eps = 0.05
        c = enlarge_credible(d, eps, "hellinger", model=CAT2)
        assert c.ball[1] == pytest.approx(d.ball[1] + eps)
        assert region_diameter(c, "hellinger", CAT2) == pytest.approx(
            region_diameter(d, "hellinger", CAT2) + 2 * eps
        )

    def test_contains_original_members(self):
        d = credible_set(self.make_post(), 0.7)
        c = enlarge_credible(d, 0.1, "hellinger", model=CAT2)
        for theta in d.members:
            assert c.contains(theta)
        # a point just outside D but within eps joins C
        near = FiniteDist([0.301, 0.699])
        if not d.contains(near):
            gap = min(hellinger(near, m) for m in d.members)
            assert c.contains(near) == (gap <= 0.1)
