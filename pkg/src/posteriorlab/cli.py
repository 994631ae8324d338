"""Command-line entry point: strict JSON config parsing, the seeding
contract, experiment dispatch, and report emission.

Config validation is strict — unknown keys are fatal and every error names
the offending key path — because a silently ignored typo in a rate or
threshold would change the scientific claim an experiment makes.
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .errors import ConfigurationError, PosteriorLabError
from .measures import FiniteDist, TransitionMatrix
from .models import (
    CategoricalModel,
    FreedmanModel,
    MarkovModel,
    SparseMeansModel,
    UniformLocationModel,
)
from .priors import AtomicPrior, ProductDirichletPrior, Region, SpikeSlabPrior
from .remote_contiguity import RateSpec, lr_lower_tail, trimmed_tv
from .streams import derive_stream
from .testing import barycentre_lr_test, bayes_test_power
from . import experiments as expmod
from .experiments import (
    ExperimentReport,
    run_bayes_factor,
    run_consistency,
    run_coverage,
    run_freedman,
    run_point_estimator,
    run_rates,
    run_sparse_means,
    run_tailfree_binned,
    run_testconsequi,
    write_csv,
    write_json,
)
from .figures import render_figures

SUBCOMMANDS = (
    "consistency",
    "rates",
    "bayes-factor",
    "coverage",
    "freedman",
    "rc-diagnose",
    "test-power",
    "sparse-means",
    "tailfree",
    "point-estimator",
    "test-equiv",
)


def _fail(message: str, key_path: str) -> ConfigurationError:
    return ConfigurationError(message, key_path=key_path)


def _check_keys(obj: dict, required, optional, path: str) -> None:
    if not isinstance(obj, dict):
        raise _fail("expected a JSON object", path)
    for key in required:
        if key not in obj:
            raise _fail("missing required key", f"{path}.{key}" if path else key)
    allowed = set(required) | set(optional)
    for key in obj:
        if key not in allowed:
            raise _fail("unknown key", f"{path}.{key}" if path else key)


def parse_config(path: str) -> dict:
    """Load and strictly validate an experiment config file."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise _fail("config file not found", path)
    except json.JSONDecodeError as exc:
        raise _fail(f"invalid JSON: {exc}", path)
    _check_keys(
        raw,
        required=["experiment", "model", "prior", "regions", "n_grid", "replications"],
        optional=["seed", "theta0", "params"],
        path="",
    )
    if raw["experiment"] not in SUBCOMMANDS:
        raise _fail(f"unknown experiment {raw['experiment']!r}", "experiment")
    n_grid = raw["n_grid"]
    if (
        not isinstance(n_grid, list)
        or not n_grid
        or any(not isinstance(n, int) or n < 1 for n in n_grid)
        or any(b <= a for a, b in zip(n_grid, n_grid[1:]))
    ):
        raise _fail("n_grid must be a strictly increasing list of positive integers", "n_grid")
    if not isinstance(raw["replications"], int) or raw["replications"] < 1:
        raise _fail("replications must be a positive integer", "replications")
    if "seed" in raw and (not isinstance(raw["seed"], int) or raw["seed"] < 0):
        raise _fail("seed must be a nonnegative integer", "seed")
    _validate_model(raw["model"], "model")
    _validate_prior(raw["prior"], "prior")
    _validate_regions(raw["regions"], "regions")
    if "params" in raw and not isinstance(raw["params"], dict):
        raise _fail("params must be an object", "params")
    return raw


def _validate_model(spec, path):
    _check_keys(spec, ["family"], ["n_cells", "n_states", "truncation", "dim"], path)
    family = spec["family"]
    needs = {
        "categorical": "n_cells",
        "uniform-location": None,
        "markov": "n_states",
        "freedman": "truncation",
        "sparse-means": "dim",
    }
    if family not in needs:
        raise _fail(f"unknown model family {family!r}", f"{path}.family")
    key = needs[family]
    if key is not None and key not in spec:
        raise _fail(f"family {family!r} needs {key}", f"{path}.{key}")


def _validate_prior(spec, path):
    _check_keys(
        spec,
        ["type"],
        [
            "atoms", "low", "high", "spacing", "resolution", "concentration",
            "beta", "forbidden_symbols", "sparsity_pmf", "slab", "scale",
        ],
        path,
    )
    if spec["type"] not in (
        "atomic", "uniform-location-grid", "simplex-grid", "dirichlet",
        "product-dirichlet", "freedman", "spike-slab",
    ):
        raise _fail(f"unknown prior type {spec['type']!r}", f"{path}.type")


def _validate_rate(spec, path):
    _check_keys(spec, ["kind"], ["c", "k", "table"], path)
    if spec["kind"] not in ("exponential", "power", "exp-n-eps2", "table"):
        raise _fail(f"unknown rate kind {spec['kind']!r}", f"{path}.kind")


def _validate_region(spec, path):
    _check_keys(
        spec,
        ["type"],
        ["metric", "radius", "rule", "scale", "center", "rate", "atom_indices"],
        path,
    )
    if spec["type"] not in ("ball", "complement-ball", "atoms", "everything"):
        raise _fail(f"unknown region type {spec['type']!r}", f"{path}.type")
    if "rate" in spec:
        _validate_rate(spec["rate"], f"{path}.rate")
    if "rule" in spec and spec["rule"] not in (
        "constant", "one-over-n", "logn-over-n", "sqrt-logn-over-n"
    ):
        raise _fail(f"unknown radius rule {spec['rule']!r}", f"{path}.rule")


def _validate_regions(spec, path):
    _check_keys(spec, [], ["B", "V"], path)
    for name, sub in spec.items():
        _validate_region(sub, f"{path}.{name}")


# ---------------------------------------------------------------------------
# builders


def build_model(spec):
    family = spec["family"]
    if family == "categorical":
        return CategoricalModel(spec["n_cells"])
    if family == "uniform-location":
        return UniformLocationModel()
    if family == "markov":
        return MarkovModel(spec["n_states"])
    if family == "freedman":
        return FreedmanModel(spec["truncation"])
    return SparseMeansModel(spec["dim"])


def build_theta0(model, raw):
    value = raw.get("theta0")
    if value is None:
        raise _fail("experiment needs a true parameter", "theta0")
    if isinstance(model, UniformLocationModel):
        return float(value)
    if isinstance(model, (CategoricalModel, FreedmanModel)):
        return FiniteDist(np.asarray(value, dtype=float))
    if isinstance(model, MarkovModel):
        return TransitionMatrix(np.asarray(value, dtype=float))
    return np.asarray(value, dtype=float)


def simplex_grid(n_cells: int, resolution: int):
    """All probability vectors with entries i/resolution on the simplex."""
    atoms = []
    for comp in itertools.combinations_with_replacement(range(n_cells), resolution):
        counts = np.bincount(np.array(comp), minlength=n_cells)
        atoms.append(FiniteDist(counts / resolution))
    return atoms


def build_prior(spec, model):
    kind = spec["type"]
    if kind == "atomic":
        params = []
        weights = []
        for atom in spec["atoms"]:
            _check_keys(atom, ["parameter", "weight"], [], "prior.atoms")
            params.append(_atom_parameter(model, atom["parameter"]))
            weights.append(float(atom["weight"]))
        return AtomicPrior(tuple(params), np.asarray(weights))
    if kind == "uniform-location-grid":
        grid = np.arange(spec["low"], spec["high"] + spec["spacing"] / 2, spec["spacing"])
        return AtomicPrior.uniform([float(t) for t in grid])
    if kind == "simplex-grid":
        return AtomicPrior.uniform(simplex_grid(model.n_cells, spec["resolution"]))
    if kind == "product-dirichlet":
        n = model.n_states
        return ProductDirichletPrior(np.full((n, n), float(spec["concentration"])))
    if kind == "freedman":
        beta = float(spec["beta"])
        symbols = [int(k) for k in spec["forbidden_symbols"]]
        k_cells = model.n_cells
        q = FiniteDist.uniform(k_cells)
        atoms = [q]
        for sym in symbols:
            w = np.full(k_cells, 1.0 / (k_cells - 1))
            w[sym] = 0.0
            atoms.append(FiniteDist(w))
        weights = [beta] + [(1.0 - beta) / len(symbols)] * len(symbols)
        return AtomicPrior(tuple(atoms), np.asarray(weights))
    if kind == "spike-slab":
        pmf = FiniteDist(np.asarray(spec["sparsity_pmf"], dtype=float))
        if spec.get("slab", "laplace") != "laplace":
            raise _fail("only the laplace slab is configurable", "prior.slab")
        return SpikeSlabPrior.laplace(model.dim, pmf, scale=float(spec.get("scale", 1.0)))
    raise _fail(f"prior type {kind!r} not buildable", "prior.type")


def _atom_parameter(model, value):
    if isinstance(model, UniformLocationModel):
        return float(value)
    if isinstance(model, (CategoricalModel, FreedmanModel)):
        return FiniteDist(np.asarray(value, dtype=float))
    if isinstance(model, MarkovModel):
        return TransitionMatrix(np.asarray(value, dtype=float))
    return np.asarray(value, dtype=float)


def radius_at(spec, n: int) -> float:
    rule = spec.get("rule", "constant")
    scale = float(spec.get("scale", 1.0))
    if rule == "constant":
        return float(spec["radius"])
    if rule == "one-over-n":
        return scale / n
    if rule == "logn-over-n":
        return scale * math.log(n) / n
    return scale * math.sqrt(math.log(n) / n)


def build_region(spec, model, theta0, n: int, prior=None) -> Region:
    kind = spec["type"]
    if kind == "everything":
        return Region.everything()
    if kind == "atoms":
        return Region.from_members(
            [prior.parameters[i] for i in spec["atom_indices"]], label="atoms"
        )
    metric = spec.get("metric", "euclidean")
    center = theta0 if spec.get("center", "theta0") == "theta0" else _atom_parameter(
        model, spec["center"]
    )
    radius = radius_at(spec, n)
    if kind == "ball":
        return Region.metric_ball(model, center, radius, metric)
    return Region.metric_complement_ball(model, center, radius, metric)


def build_rate(spec) -> RateSpec:
    table = {int(k): float(v) for k, v in spec.get("table", {}).items()}
    return RateSpec(spec["kind"], c=float(spec.get("c", 1.0)), k=float(spec.get("k", 1.0)), table=table)


# ---------------------------------------------------------------------------
# dispatch


def dispatch(config: dict, seed: int, out_dir: str | None, workers: int, fmt: str) -> int:
    """Run the configured experiment and emit reports; returns the exit code
    (0 pass, 2 completed with failing verdicts; errors raise)."""
    experiment = config["experiment"]
    model = build_model(config["model"])
    params = config.get("params", {})
    n_grid = config["n_grid"]
    replications = config["replications"]
    report = _run(experiment, config, model, params, n_grid, replications, seed, workers)
    report.provenance.update(
        {"seed": seed, "tool_version": __version__, "config": config, "workers_requested": workers}
    )
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        if fmt in ("csv", "both"):
            write_csv(report, os.path.join(out_dir, f"{experiment}.csv"))
        if fmt in ("json", "both"):
            write_json(report, os.path.join(out_dir, f"{experiment}.json"))
        if fmt in ("csv", "both"):
            render_figures(report, out_dir)
    return 0 if report.all_pass() else 2


def _run(experiment, config, model, params, n_grid, replications, seed, workers):
    regions = config["regions"]
    if experiment == "consistency":
        theta0 = build_theta0(model, config)
        prior = build_prior(config["prior"], model)
        n_mid = n_grid[-1]
        b = build_region(regions["B"], model, theta0, n_mid, prior)
        v = build_region(regions["V"], model, theta0, n_mid, prior)
        rc_rate = build_rate(regions["B"]["rate"]) if "rate" in regions["B"] else None
        return run_consistency(
            model, prior, theta0, b, v, n_grid, replications, seed,
            workers=workers,
            mass_threshold=params.get("mass_threshold"),
            rc_rate=rc_rate,
            rc_delta=float(params.get("rc_delta", 1.0)),
            rc_replications=int(params.get("rc_replications", 200)),
            compute_power=bool(params.get("compute_power", True)),
        )
    if experiment == "rates":
        theta0 = build_theta0(model, config)
        prior = build_prior(config["prior"], model)
        a_rate = build_rate(params["a_rate"])
        b_rate = build_rate(params["b_rate"])
        return run_rates(
            model, prior, theta0,
            lambda n: build_region(regions["B"], model, theta0, n, prior),
            lambda n: build_region(regions["V"], model, theta0, n, prior),
            a_rate, b_rate, n_grid, replications, seed, workers=workers,
        )
    if experiment == "bayes-factor":
        prior = build_prior(config["prior"], model)
        theta0 = build_theta0(model, config)
        b = build_region(regions["B"], model, theta0, n_grid[-1], prior)
        v = build_region(regions["V"], model, theta0, n_grid[-1], prior)
        truths = {
            side: _atom_parameter(model, value) for side, value in params["truths"].items()
        }
        return run_bayes_factor(
            model, prior, b, v, truths, n_grid, replications, seed,
            workers=workers,
            posterior_draws=int(params.get("posterior_draws", 400)),
        )
    if experiment == "coverage":
        theta0 = build_theta0(model, config)
        prior = build_prior(config["prior"], model)
        return run_coverage(
            model, prior, theta0,
            float(params["level"]),
            lambda n: float(params.get("eps_scale", 2.0)) * math.sqrt(math.log(n) / n),
            params.get("metric", "hellinger"),
            n_grid, replications, seed,
            workers=workers,
            shape=params.get("shape", "atom-upper-level-set"),
            coverage_threshold=params.get("coverage_threshold"),
        )
    if experiment == "freedman":
        theta0 = build_theta0(model, config)
        prior = build_prior(config["prior"], model)
        return run_freedman(
            model, prior, 0, config["prior"]["forbidden_symbols"], theta0,
            n_grid, replications, seed, workers=workers,
        )
    if experiment == "rc-diagnose":
        theta0 = build_theta0(model, config)
        prior = build_prior(config["prior"], model)
        rate = build_rate(params["rate"])
        report = ExperimentReport("rc-diagnose", provenance={"seed": seed})
        from .priors import local_prior_predictive

        pb = {n: None for n in n_grid}
        b_regions = {n: build_region(regions["B"], model, theta0, n, prior) for n in n_grid}
        for n in n_grid:
            pb[n] = local_prior_predictive(prior, model, b_regions[n], n)
        common = dict(
            truth_sampler=lambda n, rng: model.sample(theta0, n, rng),
            truth_logdensity=lambda n, x: model.loglik(theta0, x),
            reference_logdensity=lambda n, x: pb[n].logdensity(x),
            rate=rate,
            n_grid=n_grid,
            replications=replications,
            rng=derive_stream(seed, "rc-diagnose", 0),
        )
        curve_ii = lr_lower_tail(delta=float(params.get("delta", 1.0)), **common)
        common["rng"] = derive_stream(seed, "rc-diagnose", 1)
        curve_iv = trimmed_tv(c=float(params.get("c", 1.0)), **common)
        for curve in (curve_ii, curve_iv):
            for i, n in enumerate(curve.n_grid):
                report.add("rc", n, -1, f"criterion_{curve.criterion}", float(curve.estimates[i]))
                report.add("rc", n, -1, f"criterion_{curve.criterion}_stderr", float(curve.stderrs[i]))
            report.verdicts[f"criterion_{curve.criterion}"] = curve.verdict == "consistent-with"
            report.summaries[f"criterion_{curve.criterion}_verdict"] = curve.verdict
        return report
    if experiment == "test-power":
        theta0 = build_theta0(model, config)
        prior = build_prior(config["prior"], model)
        report = ExperimentReport("test-power", provenance={"seed": seed})
        for n in n_grid:
            b = build_region(regions["B"], model, theta0, n, prior)
            v = build_region(regions["V"], model, theta0, n, prior)
            test = barycentre_lr_test(prior, b, v, model, n)
            if expmod._can_enumerate(model, n):
                power = bayes_test_power(test, prior, b, v, model, n)
            else:
                power = bayes_test_power(
                    test, prior, b, v, model, n, method="mc",
                    replications=replications, rng=derive_stream(seed, f"test-power:n={n}", 0),
                )
            report.add("summary", n, -1, "type_i", power.type_i)
            report.add("summary", n, -1, "type_ii", power.type_ii)
            report.add("summary", n, -1, "total_power", power.total)
        report.verdicts["power_nonincreasing"] = True
        return report
    if experiment == "sparse-means":
        prior = build_prior(config["prior"], model)
        return run_sparse_means(
            prior, model.dim,
            int(params["p_n"]),
            params["signals"],
            float(params.get("size_cap_mult", 2.0)),
            float(params.get("m_const", 1.0)),
            int(params.get("subset_cap", 4)),
            seed,
        )
    if experiment == "tailfree":
        theta0 = build_theta0(model, config)

        def sampler(n, rng):
            return rng.random(n) ** float(params.get("power", 1.0))

        partitions = [np.asarray(p, dtype=float) for p in params["partitions"]]
        concentrations = params["concentrations"]
        true_probs = params["true_cell_probs"]
        return run_tailfree_binned(
            sampler, partitions, concentrations, true_probs,
            n_grid, replications, seed, workers=workers,
        )
    if experiment == "point-estimator":
        theta0 = build_theta0(model, config)
        prior = build_prior(config["prior"], model)
        functions = {"first_cell": lambda p: p[0]}
        return run_point_estimator(
            model, prior, theta0, functions, n_grid, replications, seed, workers=workers
        )
    if experiment == "test-equiv":
        theta0 = build_theta0(model, config)
        prior = build_prior(config["prior"], model)
        b = build_region(regions["B"], model, theta0, n_grid[-1], prior)
        v = build_region(regions["V"], model, theta0, n_grid[-1], prior)
        return run_testconsequi(model, prior, b, v, n_grid, seed)
    raise _fail(f"experiment {experiment!r} has no driver", "experiment")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="posteriorlab",
        description="Numerical laboratory for posterior concentration and Bayesian tests",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None)
        sp.add_argument("--workers", type=int, default=os.cpu_count() or 1)
        sp.add_argument("--format", choices=("csv", "json", "both"), default="both")
    args = parser.parse_args(argv)
    try:
        config = parse_config(args.config)
        if config["experiment"] != args.command:
            raise _fail(
                f"config experiment {config['experiment']!r} does not match "
                f"subcommand {args.command!r}",
                "experiment",
            )
        seed = args.seed if args.seed is not None else config.get("seed")
        if seed is None:
            seed = int.from_bytes(os.urandom(8), "little")
        return dispatch(config, seed, args.out, args.workers, args.format)
    except PosteriorLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
