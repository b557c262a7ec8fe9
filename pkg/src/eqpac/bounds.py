"""PAC-Bayes certificates: the plain McAllester bound, its projected variant and
the variant evaluated on orbit representatives; prior construction, posterior
optimization and statistical validity trials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .averaging import ParameterProjection
from .data import canonicalize
from .families import TabularFamily, TiedFamily
from .measures import GaussianMeasure, kl_gaussian, pushforward_gaussian
from .risk import LossFn, check_canonical, posterior_expected_risk

# additive constant inside the complexity radical; the only place it lives
COMPLEXITY_CONSTANT = 2.0
DEFAULT_DELTA = 0.05
DEFAULT_PRIOR_STD = 0.05
DEFAULT_N_MODELS = 256
MIN_POSTERIOR_STD = 1e-4

CERTIFICATE_HEADER = [
    "model", "variant", "status", "rhs", "empirical_term", "complexity_term", "kl", "n", "delta",
    "n_models", "seed", "conservative_rhs", "empirical_std_error", "kl_provenance", "sample_provenance",
]


@dataclass(frozen=True)
class BoundInputs:
    expected_empirical_risk: float
    kl: float
    n: int
    delta: float

    def __post_init__(self):
        if not 0.0 <= self.expected_empirical_risk <= 1.0:
            raise ValueError(f"expected empirical risk {self.expected_empirical_risk!r} is outside [0, 1]")
        if not self.kl >= 0.0:
            raise ValueError(f"KL must be nonnegative, got {self.kl!r}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"sample size must be a positive integer, got {self.n!r}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta!r}")


def complexity_term(kl: float, n: int, delta: float) -> float:
    if n < 1:
        raise ValueError("sample size must be positive")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if math.isinf(kl):
        return math.inf
    return math.sqrt((kl + math.log(1.0 / delta) + math.log(n) + COMPLEXITY_CONSTANT) / (2 * n - 1))


def mcallester_rhs(inputs: BoundInputs) -> float:
    """Posterior-expected empirical risk plus the complexity radical."""
    return inputs.expected_empirical_risk + complexity_term(inputs.kl, inputs.n, inputs.delta)


@dataclass(frozen=True)
class BoundReport:
    variant: str
    rhs: float
    empirical_term: float
    complexity_term: float
    kl: float
    n: int
    delta: float
    n_models: int
    seed: int | None
    empirical_std_error: float = 0.0
    kl_provenance: str = "closed-form"
    sample_provenance: str = "full"
    model: str = ""
    status: str = "ok"
    unprojected_rhs: float | None = None

    @property
    def conservative_rhs(self) -> float:
        return self.rhs + 3.0 * self.empirical_std_error

    def consistent(self, tol: float = 1e-12) -> bool:
        if math.isinf(self.rhs):
            return math.isinf(self.complexity_term)
        return abs(self.rhs - self.empirical_term - self.complexity_term) <= tol

    def to_row(self) -> list:
        return [self.model, self.variant, self.status, self.rhs, self.empirical_term, self.complexity_term,
                self.kl, self.n, self.delta, self.n_models, "" if self.seed is None else self.seed,
                self.conservative_rhs, self.empirical_std_error, self.kl_provenance, self.sample_provenance]


def skipped_row(model: str, variant: str, reason: str) -> list:
    row = [model, variant, "skipped: " + reason] + [""] * (len(CERTIFICATE_HEADER) - 3)
    return row


@dataclass(frozen=True, eq=False)
class PosteriorSpec:
    """A Gaussian law over the parameters of ``family``."""

    measure: GaussianMeasure
    family: object
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.measure.dim != self.family.n_params:
            raise ValueError(f"measure on R^{self.measure.dim} does not match {self.family.n_params} parameters")

    @property
    def tag(self) -> str:
        return self.family.tag


@dataclass(frozen=True)
class BoundSettings:
    """How the empirical term is computed and at which confidence."""

    delta: float = DEFAULT_DELTA
    empirical: str = "monte-carlo"
    n_models: int = DEFAULT_N_MODELS
    seed: int | None = None


def _require_bounded(loss: LossFn):
    if not loss.bounded01:
        raise ValueError(f"loss {loss.kind!r} is not bounded in [0, 1]; bounds need a bounded loss")


def _report(variant, measure_q, measure_p, family, X, y, loss, settings, model, sample_provenance, unprojected=None):
    _require_bounded(loss)
    n = len(y)
    risk = posterior_expected_risk(measure_q, family, loss, (X, y), settings.n_models, settings.seed,
                                   method=settings.empirical)
    kl = kl_gaussian(measure_q, measure_p)
    emp = min(max(risk.value, 0.0), 1.0)
    inputs = BoundInputs(emp, kl, n, settings.delta)
    comp = complexity_term(kl, n, settings.delta)
    return BoundReport(
        variant=variant, rhs=mcallester_rhs(inputs), empirical_term=emp, complexity_term=comp, kl=kl, n=n,
        delta=settings.delta, n_models=settings.n_models if settings.empirical == "monte-carlo" else 0,
        seed=settings.seed, empirical_std_error=risk.std_error, model=model,
        sample_provenance=sample_provenance, status="vacuous" if math.isinf(kl) else "ok",
        unprojected_rhs=unprojected,
    )


def _check_pair(posterior: PosteriorSpec, prior: PosteriorSpec):
    if posterior.measure.dim != prior.measure.dim:
        raise ValueError("posterior and prior live on different parameter spaces")


def mcallester_bound(posterior: PosteriorSpec, prior: PosteriorSpec, X, y, loss: LossFn,
                     settings: BoundSettings = BoundSettings(), model: str = "") -> BoundReport:
    _check_pair(posterior, prior)
    return _report("mcallester", posterior.measure, prior.measure, posterior.family, X, y, loss, settings,
                   model or posterior.tag, "full")


def improved_bound(posterior: PosteriorSpec, prior: PosteriorSpec, projection: ParameterProjection, X, y,
                   loss: LossFn, settings: BoundSettings = BoundSettings(), model: str = "") -> BoundReport:
    """Bound on the projected posterior, with the divergence of the projected measures."""
    _check_pair(posterior, prior)
    plain = mcallester_bound(posterior, prior, X, y, loss, settings, model)
    q, p = (pushforward_gaussian(projection.matrix, m) for m in (posterior.measure, prior.measure))
    return _report("improved", q, p, posterior.family, X, y, loss, settings, model or posterior.tag, "full",
                   unprojected=plain.rhs)


def representative_bound(posterior: PosteriorSpec, prior: PosteriorSpec, projection: ParameterProjection,
                         X_rep, y_rep, resolver, loss: LossFn, settings: BoundSettings = BoundSettings(),
                         model: str = "") -> BoundReport:
    """As :func:`improved_bound`, with the empirical term taken on orbit representatives."""
    _check_pair(posterior, prior)
    check_canonical(X_rep, resolver)
    q, p = (pushforward_gaussian(projection.matrix, m) for m in (posterior.measure, prior.measure))
    return _report("representative", q, p, posterior.family, X_rep, y_rep, loss, settings,
                   model or posterior.tag, "representatives")


def _dense(phi) -> np.ndarray:
    return phi.toarray() if hasattr(phi, "toarray") else np.asarray(phi)


def build_prior(X, y, family, loss: LossFn, sigma: float = DEFAULT_PRIOR_STD,
                steps: int = 500, lr: float = 0.5) -> PosteriorSpec:
    """Isotropic Gaussian centred on the empirical risk minimizer of the prior split.

    Squared-type losses use the minimum-norm least-squares solution; the
    logistic loss uses plain gradient descent from zero.  Zero-one loss falls
    back to least squares on the labels.
    """
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise ValueError("prior split is empty")
    phi = _dense(family.design(X))
    notes = {"sigma": sigma, "prior_n": len(y)}
    if loss.kind == "logistic-normalized":
        mean = np.zeros(family.n_params)
        for _ in range(steps):
            grad = phi.T @ loss.derivative(phi @ mean, y) / len(y)
            mean -= lr * grad
        notes["fit"] = "gradient-descent"
    else:
        mean, _, rank, _ = np.linalg.lstsq(phi, y, rcond=None)
        notes["fit"] = "least-squares"
        notes["rank_deficient"] = bool(rank < family.n_params)
    cov = np.full(family.n_params, float(sigma) ** 2)
    return PosteriorSpec(GaussianMeasure(mean, np.diag(cov)), family, notes)


@dataclass(frozen=True)
class OptimizerSettings:
    steps: int = 2000
    lr: float = 1e-2
    draws: int = 8
    eval_every: int = 50
    seed: int = 0


def _diag_kl(mu, log_std, prior_mean, prior_var):
    var = np.exp(2 * log_std)
    kl = 0.5 * np.sum(var / prior_var + (mu - prior_mean) ** 2 / prior_var - 1.0 + np.log(prior_var) - 2 * log_std)
    return kl, (mu - prior_mean) / prior_var, var / prior_var - 1.0


def optimize_posterior(prior: PosteriorSpec, X, y, loss: LossFn, delta: float = DEFAULT_DELTA,
                       settings: OptimizerSettings = OptimizerSettings(), n_bound: int | None = None) -> PosteriorSpec:
    """Diagonal Gaussian minimizing the bound's right-hand side by Adam on reparameterized draws.

    The rhs with an exact empirical term is re-evaluated every
    ``eval_every`` steps and the best iterate is returned.
    """
    _require_bounded(loss)
    if not loss.differentiable:
        raise ValueError("zero-one loss cannot be optimized; use it for reporting only")
    if not prior.measure.is_diagonal:
        raise ValueError("the optimizer needs a diagonal prior")
    y = np.asarray(y, dtype=float)
    n = n_bound or len(y)
    family = prior.family
    phi = family.design(X)
    prior_mean = prior.measure.mean
    prior_var = np.diag(prior.measure.covariance).copy()
    if np.any(prior_var <= 0):
        raise ValueError("the optimizer needs a prior with positive variances")
    rng = np.random.default_rng(settings.seed)
    mu = prior_mean.copy()
    log_std = 0.5 * np.log(prior_var)
    floor = math.log(MIN_POSTERIOR_STD)
    const = math.log(1.0 / delta) + math.log(n) + COMPLEXITY_CONSTANT

    def exact_rhs(m, ls):
        q = GaussianMeasure(m, np.diag(np.exp(2 * ls)))
        emp = posterior_expected_risk(q, family, loss, (X, y)).value
        kl = _diag_kl(m, ls, prior_mean, prior_var)[0]
        return emp + math.sqrt(max(kl, 0.0) + const) / math.sqrt(2 * n - 1)

    best = (exact_rhs(mu, log_std), mu.copy(), log_std.copy(), 0)
    state = [np.zeros_like(mu), np.zeros_like(mu), np.zeros_like(mu), np.zeros_like(mu)]
    b1, b2, eps = 0.9, 0.999, 1e-8
    for step in range(1, settings.steps + 1):
        std = np.exp(log_std)
        noise = rng.standard_normal((settings.draws, len(mu)))
        params = mu + noise * std
        preds = np.asarray(phi @ params.T)
        g = loss.derivative(preds, y[:, None]) / (len(y) * settings.draws)
        back = np.asarray(phi.T @ g)
        grad_mu = back.sum(axis=1)
        grad_ls = np.sum(back.T * noise, axis=0) * std
        kl, dkl_mu, dkl_ls = _diag_kl(mu, log_std, prior_mean, prior_var)
        scale = 0.5 / math.sqrt((max(kl, 0.0) + const) * (2 * n - 1))
        grad_mu = grad_mu + scale * dkl_mu
        grad_ls = grad_ls + scale * dkl_ls
        if not (np.all(np.isfinite(grad_mu)) and np.all(np.isfinite(grad_ls))):
            raise FloatingPointError(f"non-finite gradient at step {step}")
        lr = settings.lr * 0.5 * (1.0 + math.cos(math.pi * (step - 1) / settings.steps))
        for i, (param, grad) in enumerate(((mu, grad_mu), (log_std, grad_ls))):
            m1, m2 = state[2 * i], state[2 * i + 1]
            m1 *= b1
            m1 += (1 - b1) * grad
            m2 *= b2
            m2 += (1 - b2) * grad**2
            param -= lr * (m1 / (1 - b1**step)) / (np.sqrt(m2 / (1 - b2**step)) + eps)
        np.maximum(log_std, floor, out=log_std)
        if step % settings.eval_every == 0 or step == settings.steps:
            value = exact_rhs(mu, log_std)
            if value < best[0]:
                best = (value, mu.copy(), log_std.copy(), step)
    measure = GaussianMeasure(best[1], np.diag(np.exp(2 * best[2])))
    notes = dict(prior.notes, best_step=best[3], best_rhs=best[0], steps=settings.steps, lr=settings.lr,
                 draws=settings.draws, eval_every=settings.eval_every, opt_seed=settings.seed)
    return PosteriorSpec(measure, family, notes)


@dataclass(frozen=True)
class ValidityReport:
    trials: int
    delta: float
    violations: dict
    rhs_mean: dict

    def frequency(self, variant: str) -> float:
        return self.violations[variant] / self.trials

    def interval(self, variant: str) -> tuple[float, float]:
        """Exact (Clopper-Pearson) 95% interval for the violation frequency."""
        from scipy.stats import beta

        k, n = self.violations[variant], self.trials
        lo = 0.0 if k == 0 else float(beta.ppf(0.025, k, n - k + 1))
        hi = 1.0 if k == n else float(beta.ppf(0.975, k + 1, n - k))
        return lo, hi

    def threshold(self) -> float:
        return self.delta + 2.0 * math.sqrt(self.delta * (1 - self.delta) / self.trials)


def validity_trial(spec, family, projection: ParameterProjection, loss: LossFn, trials: int, delta: float,
                   seed: int, n_prior: int = 50, n_train: int = 100, opt_steps: int = 300,
                   prior_std: float = DEFAULT_PRIOR_STD) -> ValidityReport:
    """Repeat data, prior, posterior and all three bounds; count bound violations.

    A violation means the exact expected true risk of the (projected)
    posterior exceeds the certified right-hand side.  Empirical terms are
    exact so the only randomness left is the data.
    """
    variants = ("mcallester", "improved", "representative")
    violations = dict.fromkeys(variants, 0)
    totals = dict.fromkeys(variants, 0.0)
    exact = BoundSettings(delta=delta, empirical="exact")
    for child in np.random.SeedSequence(seed).spawn(trials):
        rng = np.random.default_rng(child)
        prior_ds = spec.sample(n_prior, rng)
        train = spec.sample(n_train, rng)
        reps = canonicalize(train, spec.resolver)
        prior = build_prior(prior_ds.X, prior_ds.y, family, loss, prior_std)
        opt = OptimizerSettings(steps=opt_steps, eval_every=max(1, opt_steps // 10),
                                seed=int(rng.integers(2**31)))
        post = optimize_posterior(prior, train.X, train.y, loss, delta, opt)
        projected = pushforward_gaussian(projection.matrix, post.measure)
        risk_q = posterior_expected_risk(post.measure, family, loss, spec).value
        risk_qq = posterior_expected_risk(projected, family, loss, spec).value
        reports = (
            (mcallester_bound(post, prior, train.X, train.y, loss, exact), risk_q),
            (improved_bound(post, prior, projection, train.X, train.y, loss, exact), risk_qq),
            (representative_bound(post, prior, projection, reps.X, reps.y, spec.resolver, loss, exact), risk_qq),
        )
        for report, risk in reports:
            violations[report.variant] += int(risk > report.rhs)
            totals[report.variant] += report.rhs
    return ValidityReport(trials, delta, violations, {v: totals[v] / trials for v in variants})


def project_posterior(posterior: PosteriorSpec, projection: ParameterProjection) -> PosteriorSpec:
    return replace(posterior, measure=pushforward_gaussian(projection.matrix, posterior.measure))


def identity_projection(family) -> ParameterProjection:
    return ParameterProjection(np.eye(family.n_params), family, "identity")


def is_tabular_like(family) -> bool:
    return isinstance(family, TabularFamily) or (isinstance(family, TiedFamily) and isinstance(family.base, TabularFamily))
