"""End-to-end runs behind the command line: data splits, model fitting,
certificates, comparisons, sweeps and the property battery.

Every stochastic step draws from its own stream derived from the master seed,
so outputs depend only on the resolved config.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .averaging import (
    FUNCTION_TOL, ParameterProjection, average_function, build_parameter_projection, check_equivariant,
    check_fixed_point, check_idempotent, equivariant_family,
)
from .bounds import (
    BoundSettings, OptimizerSettings, PosteriorSpec, build_prior, complexity_term, improved_bound,
    mcallester_bound, optimize_posterior, representative_bound, skipped_row,
)
from .config import RunConfig
from .data import Dataset, GenerativeSpec, builtin_scenario, canonicalize, invariance_defect, load_dataset
from .errors import ClosureNotCertified, ConfigError, NonFreeOrbit
from .families import LinearFamily, Predictor, TabularFamily
from .groups import verify_group_axioms
from .kernels import GroupKernel, estimate_kernel
from .measures import (
    DiscreteMeasure, GaussianMeasure, kl_decompose_discrete, kl_decompose_gaussian, pushforward_gaussian,
)
from .risk import (
    LossFn, RiskEstimate, check_canonical, loss_distribution, posterior_expected_risk, risk_on_representatives,
    same_weighted_multiset, true_risk_enumerate,
)

SPLITS = ("prior", "train", "val", "representatives")
_STREAMS = {"prior": 1, "train": 2, "val": 3, "opt-baseline": 5, "opt-equivariant": 6,
            "bound": 7, "draws": 8}


def stream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, _STREAMS[name]]))


def stream_seed(seed: int, name: str) -> int:
    return int(np.random.SeedSequence([seed, _STREAMS[name]]).generate_state(1)[0])


def scenario_from_config(cfg: RunConfig) -> GenerativeSpec:
    try:
        return builtin_scenario(cfg["scenario.name"], cfg["scenario.kernel"], cfg["scenario.kernel_mix"],
                                cfg["group.order"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def generate_splits(spec: GenerativeSpec, cfg: RunConfig, seed: int) -> dict[str, Dataset]:
    """Independent prior/train/val draws; representatives are the canonicalized train split."""
    out = {}
    for split in ("prior", "train", "val"):
        ds = spec.sample(cfg[f"scenario.n_{split}"], stream(seed, split), seed=seed)
        out[split] = Dataset(ds.X, ds.y, dict(ds.provenance, split=split))
    reps = canonicalize(out["train"], spec.resolver)
    out["representatives"] = Dataset(reps.X, reps.y, dict(reps.provenance, split="representatives"))
    return out


def load_or_generate(spec: GenerativeSpec, cfg: RunConfig, seed: int) -> dict[str, Dataset]:
    if not cfg["data.dir"]:
        return generate_splits(spec, cfg, seed)
    root = Path(cfg["data.dir"])
    return {s: load_dataset(root / f"{s}.csv") for s in SPLITS}


def averaging_kernel(spec: GenerativeSpec, cfg: RunConfig, splits: dict) -> GroupKernel:
    if cfg["kernel.kind"] == "scenario":
        return spec.kernel
    return estimate_kernel(splits["prior"].X, spec.resolver, cfg["kernel.bucketing"], cfg["kernel.n_buckets"])


def baseline_family(spec: GenerativeSpec, cfg: RunConfig):
    if cfg["model.family"] == "linear":
        return LinearFamily(spec.action.dim)
    return TabularFamily(spec.input_domain())


@dataclass
class FittedModel:
    tag: str
    prior: PosteriorSpec
    posterior: PosteriorSpec
    projection: ParameterProjection | None
    skip_reason: str = ""


def _opt_settings(cfg: RunConfig, seed: int) -> OptimizerSettings:
    return OptimizerSettings(cfg["opt.steps"], cfg["opt.lr"], cfg["opt.draws"], cfg["opt.eval_every"], seed)


def fit_models(spec: GenerativeSpec, cfg: RunConfig, splits: dict, seed: int) -> tuple[FittedModel, FittedModel | None]:
    """Baseline trained on the full sample and the tied equivariant model trained on representatives."""
    opt_loss = LossFn(cfg["opt.loss"])
    delta, sigma = cfg["bound.delta"], cfg["bound.prior_std"]
    kernel = averaging_kernel(spec, cfg, splits)
    prior_ds, train, reps = splits["prior"], splits["train"], splits["representatives"]

    base = baseline_family(spec, cfg)
    base_prior = build_prior(prior_ds.X, prior_ds.y, base, opt_loss, sigma)
    base_post = optimize_posterior(base_prior, train.X, train.y, opt_loss, delta,
                                   _opt_settings(cfg, stream_seed(seed, "opt-baseline")))
    try:
        projection = build_parameter_projection(base, spec.resolver, kernel)
        reason = ""
    except ClosureNotCertified as exc:
        projection, reason = None, str(exc)
    baseline = FittedModel("baseline", base_prior, base_post, projection, reason)

    if isinstance(base, LinearFamily) and projection is None:
        return baseline, None
    tied = equivariant_family(base, spec.resolver, projection)
    try:
        tied_projection = build_parameter_projection(tied, spec.resolver, kernel)
        reason = ""
    except ClosureNotCertified as exc:
        tied_projection, reason = None, str(exc)
    eq_prior = build_prior(prior_ds.X, prior_ds.y, tied, opt_loss, sigma)
    eq_post = optimize_posterior(eq_prior, reps.X, reps.y, opt_loss, delta,
                                 _opt_settings(cfg, stream_seed(seed, "opt-equivariant")))
    return baseline, FittedModel("equivariant", eq_prior, eq_post, tied_projection, reason)


def _bound_settings(cfg: RunConfig, seed: int) -> BoundSettings:
    return BoundSettings(cfg["bound.delta"], cfg["bound.empirical"], cfg["bound.n_models"], stream_seed(seed, "bound"))


def certificate_rows(model: FittedModel, spec: GenerativeSpec, splits: dict, loss: LossFn,
                     settings: BoundSettings) -> tuple[list, dict]:
    train, reps = splits["train"], splits["representatives"]
    rows, reports = [], {}
    plain = mcallester_bound(model.posterior, model.prior, train.X, train.y, loss, settings, model.tag)
    rows.append(plain.to_row())
    reports["mcallester"] = plain
    if model.projection is None:
        for variant in ("improved", "representative"):
            rows.append(skipped_row(model.tag, variant, "closure not certified: " + model.skip_reason))
        return rows, reports
    improved = improved_bound(model.posterior, model.prior, model.projection, train.X, train.y, loss, settings,
                              model.tag)
    rep = representative_bound(model.posterior, model.prior, model.projection, reps.X, reps.y, spec.resolver,
                               loss, settings, model.tag)
    rows += [improved.to_row(), rep.to_row()]
    reports.update(improved=improved, representative=rep)
    return rows, reports


def run_certify(cfg: RunConfig) -> dict:
    seed = cfg.require_seed()
    spec = scenario_from_config(cfg)
    splits = load_or_generate(spec, cfg, seed)
    loss = LossFn(cfg["bound.loss"])
    settings = _bound_settings(cfg, seed)
    models = [m for m in fit_models(spec, cfg, splits, seed) if m is not None]
    rows, reports, risk_rows = [], {}, []
    for model in models:
        r, rep = certificate_rows(model, spec, splits, loss, settings)
        rows += r
        reports[model.tag] = rep
        val = posterior_expected_risk(model.posterior.measure, model.posterior.family, loss, splits["val"])
        risk_rows.append(val.row(f"{model.tag}/validation"))
        if spec.enumerable:
            true = posterior_expected_risk(model.posterior.measure, model.posterior.family, loss, spec)
            risk_rows.append(true.row(f"{model.tag}/true"))
    return {"rows": rows, "reports": reports, "risk_rows": risk_rows, "models": models}


def run_compare(cfg: RunConfig) -> dict:
    """Baseline (plain bound, full sample) against the equivariant model (representative bound)."""
    seed = cfg.require_seed()
    spec = scenario_from_config(cfg)
    if not spec.enumerable:
        raise ConfigError("compare scores test error by exact enumeration and needs an enumerable scenario")
    splits = load_or_generate(spec, cfg, seed)
    loss = LossFn(cfg["bound.loss"])
    settings = _bound_settings(cfg, seed)
    baseline, equivariant = fit_models(spec, cfg, splits, seed)
    if equivariant is None or equivariant.projection is None:
        raise ClosureNotCertified("no certified equivariant model for this configuration")
    law = spec.enumerate()
    draws = stream(seed, "draws")
    hist, summary = [], []
    for model, variant in ((baseline, "mcallester"), (equivariant, "representative")):
        _, reports = certificate_rows(model, spec, splits, loss, settings)
        params = model.posterior.measure.sample(cfg["bound.n_models"], draws)
        preds = np.asarray(model.posterior.family.design(law.X) @ params.T)
        errors = law.weights @ loss(preds, law.Y[:, None])
        hist += [[model.tag, i, float(e)] for i, e in enumerate(errors)]
        report = reports[variant]
        summary.append([model.tag, variant, report.rhs, report.conservative_rhs,
                        math.fsum(errors) / len(errors), len(errors)])
    return {"histogram": hist, "summary": summary}


HISTOGRAM_HEADER = ["model_tag", "sample_index", "test_error"]
SUMMARY_HEADER = ["model_tag", "bound_variant", "rhs", "conservative_rhs", "mean_test_error", "n_models"]
SWEEP_AXES = {"n": "scenario.n_train", "delta": "bound.delta", "kernel_mix": "scenario.kernel_mix",
              "group_order": "group.order"}
SWEEP_HEADER = ["n", "delta", "kernel_mix", "group_order", "status", "rhs", "empirical_term", "complexity_term",
                "kl", "kl_pushforward", "residual", "mcallester_rhs", "invariance_defect", "error"]


def sweep_grid(cfg: RunConfig) -> list[dict]:
    axes = {name: cfg[f"sweep.{name}"] for name in SWEEP_AXES}
    present = {k: v for k, v in axes.items() if v is not None}
    if any(len(v) == 0 for v in present.values()):
        return []
    names = list(present)
    return [dict(zip(names, combo)) for combo in itertools.product(*(present[n] for n in names))]


def run_sweep(cfg: RunConfig) -> list[list]:
    """One projected-bound certificate per grid point of the declared axes.

    Failures at a grid point are recorded in its ``error`` column.
    """
    seed = cfg.require_seed()
    rows = []
    for point in sweep_grid(cfg):
        local = cfg.copy()
        for name, value in point.items():
            local.set(SWEEP_AXES[name], value)
        values = [local["scenario.n_train"], local["bound.delta"], local["scenario.kernel_mix"],
                  "" if local["group.order"] is None else local["group.order"]]
        try:
            spec = scenario_from_config(local)
            splits = generate_splits(spec, local, seed)
            loss = LossFn(local["bound.loss"])
            baseline, _ = fit_models(spec, local, splits, seed)
            _, reports = certificate_rows(baseline, spec, splits, loss, _bound_settings(local, seed))
            plain = reports["mcallester"]
            if "improved" not in reports:
                rows.append(values + ["skipped", "", "", "", plain.kl, "", "", plain.rhs, invariance_defect(spec),
                                      "closure not certified: " + baseline.skip_reason])
                continue
            imp = reports["improved"]
            rows.append(values + [imp.status, imp.rhs, imp.empirical_term, imp.complexity_term, plain.kl, imp.kl,
                                  plain.kl - imp.kl, plain.rhs, invariance_defect(spec), ""])
        except (ValueError, ArithmeticError) as exc:
            rows.append(values + ["error"] + [""] * 8 + [f"{type(exc).__name__}: {exc}"])
    return rows


# --- worked Gaussian example -------------------------------------------------

APPENDIX_EXPECTED = {"average": (0.5, 0.25, 0.25), "identity": (0.5, 0.5, 0.0)}
KL_DEMO_HEADER = ["projection", "total", "pushforward_kl", "residual", "cross_check", "expected_total",
                  "expected_pushforward_kl", "expected_residual", "match"]


def kl_demo(projection: str = "average") -> tuple[list, bool]:
    """Swap-symmetric linear maps on R^2, posterior N((1, 0), I) against prior N(0, I)."""
    from .groups import OrbitResolver, swap_action
    from .kernels import uniform_kernel

    family = LinearFamily(2)
    resolver = OrbitResolver(swap_action())
    if projection == "average":
        A = build_parameter_projection(family, resolver, uniform_kernel(resolver.group)).matrix
    elif projection == "identity":
        A = ParameterProjection(np.eye(2), family, "identity").matrix
    elif projection == "corrupt":
        A = ParameterProjection(np.array([[1.0, 1.0], [0.0, 1.0]]), family, "corrupt").matrix
    else:
        raise ConfigError(f"unknown projection {projection!r}")
    nu = GaussianMeasure([1.0, 0.0], np.eye(2))
    mu = GaussianMeasure([0.0, 0.0], np.eye(2))
    dec = kl_decompose_gaussian(nu, mu, A)
    expected = APPENDIX_EXPECTED[projection]
    got = (dec.total, dec.pushforward_kl, dec.residual)
    match = all(abs(a - b) <= 1e-12 for a, b in zip(got, expected))
    row = [projection, *got, "" if dec.cross_check is None else dec.cross_check, *expected, match]
    return [row], match


# --- property battery --------------------------------------------------------

AXIOMS_HEADER = ["suite", "status", "max_deviation", "n_checked", "detail"]


@dataclass
class SuiteResult:
    suite: str
    status: str
    max_deviation: float | str = ""
    n_checked: int | str = ""
    detail: str = ""

    def row(self):
        return [self.suite, self.status, self.max_deviation, self.n_checked, self.detail]


def _verdict(ok: bool) -> str:
    return "pass" if ok else "fail"


def random_discrete_triple(rng: np.random.Generator):
    """``(nu, mu, alpha)`` with ``nu << mu`` on a random finite support."""
    size = int(rng.integers(2, 9))
    mu_w = rng.dirichlet(np.ones(size))
    nu_w = rng.dirichlet(np.ones(size)) * (rng.random(size) > 0.2)
    if nu_w.sum() == 0:
        nu_w[0] = 1.0
    nu_w = nu_w / nu_w.sum()
    support = tuple(range(size))
    images = rng.integers(0, max(1, size // 2) + 1, size)
    alpha = {s: int(t) for s, t in zip(support, images)}
    mu = DiscreteMeasure(support, mu_w / math.fsum(mu_w))
    nu = DiscreteMeasure(support, nu_w / math.fsum(nu_w))
    return nu, mu, alpha


def _materialize(f, family: TabularFamily) -> Predictor:
    return Predictor(family, np.asarray(f(family.domain), dtype=float))


def run_axioms(cfg: RunConfig, group_override=None) -> list[SuiteResult]:
    """The full property battery on the configured scenario.

    ``group_override`` replaces the group table checked by the group-axioms
    suite; tests use it to inject a corrupted table.
    """
    spec = scenario_from_config(cfg)
    seed = cfg["run.seed"] if cfg["run.seed"] is not None else 0
    rng = np.random.default_rng(np.random.SeedSequence([seed, 99]))
    resolver, action, kernel = spec.resolver, spec.action, spec.kernel
    loss = LossFn(cfg["axioms.loss"])
    n_pred = cfg["axioms.n_predictors"]
    results = []

    report = verify_group_axioms(group_override if group_override is not None else action.group)
    bad = report.failures()
    results.append(SuiteResult("group-axioms", _verdict(report.passed), "", len(report.results),
                               "failed: " + ", ".join(bad) if bad else ""))

    domain = spec.input_domain()
    try:
        reps, parts = resolver.resolve_batch(domain)
        elements = action.group.elements if action.group.is_finite else ()
        fixed = 0
        for g in elements:
            if g != action.group.identity:
                fixed += int(np.all(action.act(g, domain) == domain, axis=1).sum())
        results.append(SuiteResult("free-action", _verdict(fixed == 0), "", len(domain),
                                   f"{fixed} inputs with a nontrivial stabilizer" if fixed else ""))
    except NonFreeOrbit as exc:
        results.append(SuiteResult("free-action", "fail", "", len(domain), str(exc)))
        return results

    back = np.stack([action.act(int(g), r) for g, r in zip(parts, reps)])
    law = spec.enumerate()
    law_reps, law_parts = resolver.resolve_batch(law.X)
    dev = max(float(np.max(np.abs(back - domain))),
              float(np.max(np.abs(law_reps - spec.representatives[law.rep_index]))))
    ok = dev <= 1e-9 and bool(np.all(law_parts == law.group_part)) and bool(resolver.canonical_mask(reps).all())
    results.append(SuiteResult("resolver-roundtrip", _verdict(ok), dev, len(domain) + len(law.X)))

    family = TabularFamily(domain)
    predictors = [Predictor(family, rng.uniform(0.0, 1.0, family.n_params)) for _ in range(n_pred)]
    averaged = [_materialize(average_function(f, kernel, resolver), family) for f in predictors]

    worst, n = 0.0, 0
    for f in predictors:
        rep = check_equivariant(average_function(f, kernel, resolver), action, domain)
        worst, n = max(worst, rep.max_deviation), n + rep.n_checked
    results.append(SuiteResult("equivariance", _verdict(worst <= FUNCTION_TOL), worst, n))

    rep = check_idempotent(kernel, resolver, family, n_predictors=n_pred, probes=domain, seed=seed)
    results.append(SuiteResult("idempotency", _verdict(rep.passed), rep.max_deviation, rep.n_checked))

    worst, n, ok = 0.0, 0, True
    for f, qf in zip(predictors[:10], averaged[:10]):
        for candidate in (f, qf):
            rep = check_fixed_point(candidate, kernel, resolver, domain)
            ok &= rep.passed
            n += rep.n_checked
        worst = max(worst, check_fixed_point(qf, kernel, resolver, domain).max_deviation)
    results.append(SuiteResult("fixed-point", _verdict(ok), worst, n))

    worst, ok = 0.0, True
    for _ in range(cfg["axioms.kl_trials"]):
        nu, mu, alpha = random_discrete_triple(rng)
        dec = kl_decompose_discrete(nu, mu, alpha)
        ok &= dec.pushforward_kl <= dec.total + 1e-12 and dec.residual >= -1e-12 and dec.defect <= 1e-9
        worst = max(worst, dec.pushforward_kl - dec.total, dec.defect)
    results.append(SuiteResult("kl-monotonicity", _verdict(ok), worst, cfg["axioms.kl_trials"]))

    if not spec.enumerable:
        for name in ("averaged-risk", "loss-distribution", "representative-risk"):
            results.append(SuiteResult(name, "skipped", detail="scenario noise is not enumerable"))
        return results

    if loss.convex_in_first:
        worst = max(true_risk_enumerate(qf, spec, loss).value - true_risk_enumerate(f, spec, loss).value
                    for f, qf in zip(predictors, averaged))
        results.append(SuiteResult("averaged-risk", _verdict(worst <= 1e-12), worst, n_pred))
    else:
        results.append(SuiteResult("averaged-risk", "skipped", detail=f"loss {loss.kind} is not convex"))

    ok, n = True, 0
    for qf in averaged[:20]:
        full = loss_distribution(qf, spec, loss)
        on_reps = loss_distribution(qf, spec, loss, representatives=True)
        ok &= same_weighted_multiset(full, on_reps)
        n += len(full)
    results.append(SuiteResult("loss-distribution", _verdict(ok), "", n))

    worst = max(abs(true_risk_enumerate(qf, spec, loss).value - risk_on_representatives(qf, spec, loss).value)
                for qf in averaged)
    results.append(SuiteResult("representative-risk", _verdict(worst <= 1e-12), worst, n_pred))
    return results


def projected_posterior_risk(posterior: PosteriorSpec, projection: ParameterProjection, loss: LossFn,
                             spec: GenerativeSpec) -> RiskEstimate:
    """Exact expected true risk of the projected posterior."""
    measure = pushforward_gaussian(projection.matrix, posterior.measure)
    return posterior_expected_risk(measure, posterior.family, loss, spec)

