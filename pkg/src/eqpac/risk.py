"""Losses, true and empirical risks, and risks under Gaussian parameter laws."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from .data import Dataset, GenerativeSpec
from .errors import NonCanonicalRow
from .measures import GaussianMeasure

LOSS_KINDS = ("squared", "squared-clipped", "zero-one", "logistic-normalized")
ZERO_ONE_THRESHOLD = 0.5
VALUE_BUCKET = 1e-12
# below this spread the prediction is treated as a point mass
POINT_MASS_STD = 1e-12
_LEGENDRE_NODES, _LEGENDRE_WEIGHTS = np.polynomial.legendre.leggauss(96)
# standard-normal tail beyond this many deviations is dropped (mass below 1e-23)
_TAIL = 10.0


@dataclass(frozen=True)
class LossFn:
    """Loss ``l(prediction, target)`` on scalar outputs.

    ``squared-clipped`` is ``min((p - y)^2, 1)``.  ``logistic-normalized`` is
    ``min(1, log2(1 + exp(-m)))`` with margin ``m = (2y - 1)(2p - 1)``, an upper
    bound of the zero-one loss for binary targets.  Zero-one thresholds
    predictions at 0.5.
    """

    kind: str = "squared-clipped"

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss {self.kind!r}; expected one of {LOSS_KINDS}")

    @property
    def convex_in_first(self) -> bool:
        return self.kind == "squared"

    @property
    def g_invariant(self) -> bool:
        # scalar outputs carry the trivial output action
        return True

    @property
    def bounded01(self) -> bool:
        return self.kind != "squared"

    @property
    def differentiable(self) -> bool:
        return self.kind != "zero-one"

    def __call__(self, pred, y) -> np.ndarray:
        pred = np.asarray(pred, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "squared":
            return (pred - y) ** 2
        if self.kind == "squared-clipped":
            return np.minimum((pred - y) ** 2, 1.0)
        if self.kind == "zero-one":
            return ((pred >= ZERO_ONE_THRESHOLD) != (y >= ZERO_ONE_THRESHOLD)).astype(float)
        margin = (2.0 * y - 1.0) * (2.0 * pred - 1.0)
        return np.minimum(1.0, np.logaddexp(0.0, -margin) / math.log(2.0))

    def derivative(self, pred, y) -> np.ndarray:
        """Derivative in the prediction (zero where the loss is clipped)."""
        pred = np.asarray(pred, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "squared":
            return 2.0 * (pred - y)
        if self.kind == "squared-clipped":
            u = pred - y
            return np.where(np.abs(u) < 1.0, 2.0 * u, 0.0)
        if self.kind == "logistic-normalized":
            sign = 2.0 * y - 1.0
            margin = sign * (2.0 * pred - 1.0)
            raw = np.logaddexp(0.0, -margin) / math.log(2.0)
            return np.where(raw < 1.0, -2.0 * sign * expit(-margin) / math.log(2.0), 0.0)
        raise ValueError("zero-one loss has no useful derivative")

    def expected(self, mean, std, y) -> np.ndarray:
        """``E[l(P, y)]`` for ``P ~ N(mean, std^2)``, elementwise and in closed form where possible."""
        mean, std, y = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (mean, std, y)))
        if self.kind == "squared":
            return (mean - y) ** 2 + std**2
        point = std <= POINT_MASS_STD
        s = np.where(point, 1.0, std)
        if self.kind == "squared-clipped":
            m = mean - y
            lo, hi = (-1.0 - m) / s, (1.0 - m) / s
            mass = norm.cdf(hi) - norm.cdf(lo)
            plo, phi = norm.pdf(lo), norm.pdf(hi)
            inner = m**2 * mass + 2 * m * s * (plo - phi) + s**2 * (mass + lo * plo - hi * phi)
            out = inner + (1.0 - mass)
        elif self.kind == "zero-one":
            up = norm.sf((ZERO_ONE_THRESHOLD - mean) / s)
            out = np.where(y >= ZERO_ONE_THRESHOLD, 1.0 - up, up)
        else:
            out = self._expected_logistic(mean, s, y)
        return np.where(point, self(mean, y), np.clip(out, 0.0, None))

    @staticmethod
    def _expected_logistic(mean, s, y):
        # margin u = c + d z is clipped to loss 1 for u <= 0; integrate the smooth side only
        c = (2.0 * y - 1.0) * (2.0 * mean - 1.0)
        spread = 2.0 * s * np.abs(2.0 * y - 1.0)
        flat = spread <= POINT_MASS_STD
        d = np.where(flat, 1.0, spread)
        z0 = np.clip(-c / d, -_TAIL, _TAIL)
        half = 0.5 * (_TAIL - z0)
        z = z0[..., None] + half[..., None] * (_LEGENDRE_NODES + 1.0)
        u = c[..., None] + d[..., None] * z
        smooth = (np.logaddexp(0.0, -u) / math.log(2.0) * norm.pdf(z)) @ _LEGENDRE_WEIGHTS
        at_mean = np.minimum(1.0, np.logaddexp(0.0, -c) / math.log(2.0))
        return np.where(flat, at_mean, norm.cdf(-c / d) + half * smooth)

    def check_flags(self, rng: np.random.Generator, n: int = 2000) -> dict:
        """Spot-check the declared flags on random probes."""
        a, b, y = rng.uniform(-2, 3, (3, n))
        y = np.round(np.clip(y, 0, 1)) if self.kind in ("zero-one", "logistic-normalized") else y
        t = rng.uniform(0, 1, n)
        mid = self(t * a + (1 - t) * b, y)
        chord = t * self(a, y) + (1 - t) * self(b, y)
        values = self(np.r_[a, b], np.r_[y, y])
        return {
            "convex_in_first": bool(np.all(mid <= chord + 1e-12)),
            "bounded01": bool(np.all((values >= 0) & (values <= 1))),
            "nonnegative": bool(np.all(values >= 0)),
        }


@dataclass(frozen=True)
class RiskEstimate:
    value: float
    method: str
    std_error: float = 0.0
    n_samples: int = 0
    seed: int | None = None

    def row(self, tag: str) -> list:
        return [tag, self.method, self.value, self.std_error, self.n_samples, "" if self.seed is None else self.seed]


RISK_HEADER = ["tag", "method", "value", "std_error", "n", "seed"]


def _predict(f, X) -> np.ndarray:
    return np.asarray(f(np.atleast_2d(X)), dtype=float).reshape(len(np.atleast_2d(X)))


def empirical_risk(f, X, y, loss: LossFn) -> float:
    """Mean loss of ``f`` over a sample."""
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise ValueError("empirical risk of an empty sample is undefined")
    return float(np.mean(loss(_predict(f, X), y)))


def _require_enumerable(spec: GenerativeSpec):
    if not spec.enumerable:
        raise ValueError(f"spec {spec.name!r} has continuous noise; use Monte Carlo")


def true_risk_enumerate(f, spec: GenerativeSpec, loss: LossFn) -> RiskEstimate:
    """Exact risk by summing over every (representative, group part, noise) atom."""
    _require_enumerable(spec)
    law = spec.enumerate()
    value = math.fsum(law.weights * loss(_predict(f, law.X), law.Y))
    return RiskEstimate(value, "exact", 0.0, len(law.weights))


def true_risk_mc(f, spec: GenerativeSpec, loss: LossFn, n: int, seed: int) -> RiskEstimate:
    if n < 1:
        raise ValueError("Monte Carlo risk needs n >= 1")
    ds = spec.sample(n, np.random.default_rng(seed))
    losses = loss(_predict(f, ds.X), ds.y)
    se = float(np.std(losses, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return RiskEstimate(float(np.mean(losses)), "monte-carlo", se, n, seed)


def check_canonical(X, resolver) -> None:
    """Raise :class:`NonCanonicalRow` at the first row that is not a representative."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    mask = resolver.canonical_mask(X) if len(X) else np.ones(0, dtype=bool)
    if not mask.all():
        i = int(np.argmin(mask))
        raise NonCanonicalRow(i, "input is not the canonical representative of its orbit")


def risk_on_representatives(f, source, loss: LossFn, resolver=None) -> RiskEstimate:
    """Risk with inputs restricted to orbit representatives.

    ``source`` is a :class:`GenerativeSpec` (exact) or a representative
    :class:`Dataset` together with the ``resolver`` that certifies it.
    """
    if isinstance(source, GenerativeSpec):
        _require_enumerable(source)
        law = source.enumerate(representatives_only=True)
        if len(law.weights) == 0:
            raise ValueError("spec has no representatives")
        value = math.fsum(law.weights * loss(_predict(f, law.X), law.Y))
        return RiskEstimate(value, "exact", 0.0, len(law.weights))
    if len(source) == 0:
        raise ValueError("empty representative sample")
    if resolver is None:
        raise ValueError("a resolver is needed to verify representative inputs")
    check_canonical(source.X, resolver)
    return RiskEstimate(empirical_risk(f, source.X, source.y, loss), "exact", 0.0, len(source))


def loss_distribution(f, spec: GenerativeSpec, loss: LossFn, representatives: bool = False) -> dict:
    """Law of the loss as ``{bucketed value: probability}``; values are bucketed at 1e-12."""
    _require_enumerable(spec)
    law = spec.enumerate(representatives_only=representatives)
    acc = defaultdict(list)
    for v, w in zip(loss(_predict(f, law.X), law.Y), law.weights):
        acc[int(round(v / VALUE_BUCKET))].append(w)
    return {k * VALUE_BUCKET: math.fsum(ws) for k, ws in sorted(acc.items())}


def same_weighted_multiset(a: dict, b: dict, tol: float = 1e-12) -> bool:
    return set(a) == set(b) and all(abs(a[k] - b[k]) <= tol for k in a)


def prediction_moments(family, posterior: GaussianMeasure, X) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard deviation of ``Phi w`` for ``w ~ posterior``, per input."""
    if posterior.dim != family.n_params:
        raise ValueError(f"posterior lives on R^{posterior.dim}, family has {family.n_params} parameters")
    phi = family.design(X)
    mean = np.asarray(phi @ posterior.mean).reshape(-1)
    cov = posterior.covariance
    if posterior.is_diagonal:
        sq = phi.multiply(phi) if hasattr(phi, "multiply") else phi**2
        var = np.asarray(sq @ np.diag(cov)).reshape(-1)
    else:
        var = np.asarray((phi @ cov) * (phi.toarray() if hasattr(phi, "toarray") else phi)).sum(axis=1)
    return mean, np.sqrt(np.clip(var, 0.0, None))


def _data_atoms(data):
    if isinstance(data, GenerativeSpec):
        _require_enumerable(data)
        law = data.enumerate()
        return law.X, law.Y, law.weights
    if isinstance(data, Dataset):
        if len(data) == 0:
            raise ValueError("empty sample")
        return data.X, data.y, np.full(len(data), 1.0 / len(data))
    X, y = data
    y = np.asarray(y, dtype=float)
    return np.atleast_2d(X), y, np.full(len(y), 1.0 / len(y))


def posterior_expected_risk(posterior: GaussianMeasure, family, loss: LossFn, data,
                            n_models: int = 256, seed: int | None = None,
                            method: str = "exact") -> RiskEstimate:
    """``E_{w ~ posterior}`` of the risk of ``w`` on ``data``.

    ``data`` is an enumerable spec (true risk), a :class:`Dataset` or an
    ``(X, y)`` pair (empirical risk).  ``method="exact"`` integrates the
    Gaussian prediction at every atom in closed form; ``"monte-carlo"``
    averages ``n_models`` parameter draws and reports their standard error.
    """
    X, y, w = _data_atoms(data)
    if method == "exact":
        mean, std = prediction_moments(family, posterior, X)
        return RiskEstimate(math.fsum(w * loss.expected(mean, std, y)), "exact", 0.0, len(y), seed)
    if method != "monte-carlo":
        raise ValueError(f"unknown method {method!r}")
    if posterior.dim != family.n_params:
        raise ValueError(f"posterior lives on R^{posterior.dim}, family has {family.n_params} parameters")
    params = posterior.sample(n_models, np.random.default_rng(seed))
    preds = np.asarray(family.design(X) @ params.T)
    risks = w @ loss(preds, y[:, None])
    se = float(np.std(risks, ddof=1) / math.sqrt(n_models)) if n_models > 1 else 0.0
    return RiskEstimate(float(np.mean(risks)), "monte-carlo", se, n_models, seed)
