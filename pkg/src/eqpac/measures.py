"""Gaussian and finite discrete measures, KL divergences and their decompositions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .errors import NotIdempotent

EIG_TOL = 1e-10
NULL_MEAN_TOL = 1e-8
SYMMETRY_TOL = 1e-12
SUBSPACE_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class GaussianMeasure:
    """``N(mean, covariance)`` on R^p; the covariance may be singular."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        p = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (p, p):
            raise ValueError(f"mean of length {p} needs a {p}x{p} covariance, got {cov.shape}")
        if np.max(np.abs(cov - cov.T), initial=0.0) > SYMMETRY_TOL:
            raise ValueError("covariance is not symmetric")
        cov = 0.5 * (cov + cov.T)
        if p and not _is_diagonal(cov):
            vals, vecs = np.linalg.eigh(cov)
            if vals.min() < -EIG_TOL:
                raise ValueError(f"covariance has eigenvalue {vals.min():.3g} < 0")
            if vals.min() < 0:
                cov = (vecs * np.clip(vals, 0, None)) @ vecs.T
        elif p and np.diag(cov).min() < -EIG_TOL:
            raise ValueError("covariance has a negative variance")
        elif p:
            cov = np.diag(np.clip(np.diag(cov), 0, None))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @classmethod
    def diagonal(cls, mean, std) -> "GaussianMeasure":
        std = np.broadcast_to(np.asarray(std, dtype=float), np.shape(mean))
        return cls(mean, np.diag(std**2))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def is_diagonal(self) -> bool:
        return _is_diagonal(self.covariance)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((n, self.dim))
        if self.is_diagonal:
            return self.mean + z * np.sqrt(np.diag(self.covariance))
        vals, vecs = np.linalg.eigh(self.covariance)
        return self.mean + (z * np.sqrt(np.clip(vals, 0, None))) @ vecs.T

    def to_csv(self) -> str:
        rows = [self.mean] + list(self.covariance)
        return "".join(",".join(format(v, ".17g") for v in r) + "\n" for r in rows)

    @classmethod
    def from_csv(cls, text: str) -> "GaussianMeasure":
        rows = [[float(v) for v in ln.split(",")] for ln in text.splitlines() if ln.strip()]
        return cls(rows[0], rows[1:])


def _is_diagonal(m: np.ndarray) -> bool:
    return not np.any(m - np.diag(np.diag(m)))


def _image(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal basis of the range of ``cov`` and the matching eigenvalues."""
    if _is_diagonal(cov):
        d = np.diag(cov)
        keep = np.flatnonzero(d > EIG_TOL)
        return np.eye(len(d))[:, keep], d[keep]
    vals, vecs = np.linalg.eigh(cov)
    keep = vals > EIG_TOL
    return vecs[:, keep], vals[keep]


def kl_gaussian(nu: GaussianMeasure, mu: GaussianMeasure) -> float:
    """``KL(nu || mu)`` in closed form on the common image of the covariances.

    Returns ``inf`` when ``nu`` is not absolutely continuous with respect to
    ``mu``: the covariance images differ, or the mean difference has a
    component above ``1e-8`` outside the image of ``mu``'s covariance.
    """
    if nu.dim != mu.dim:
        raise ValueError(f"dimension mismatch: {nu.dim} vs {mu.dim}")
    U, lam = _image(mu.covariance)
    Un, _ = _image(nu.covariance)
    if Un.shape[1] != U.shape[1]:
        return math.inf
    if U.shape[1] and np.max(np.abs(Un - U @ (U.T @ Un)), initial=0.0) > SUBSPACE_TOL:
        return math.inf
    diff = nu.mean - mu.mean
    if np.linalg.norm(diff - U @ (U.T @ diff)) > NULL_MEAN_TOL:
        return math.inf
    k = U.shape[1]
    if k == 0:
        return 0.0
    Sn = U.T @ nu.covariance @ U
    dp = U.T @ diff
    trace = float(np.sum(np.diag(Sn) / lam))
    maha = float(np.sum(dp**2 / lam))
    sign, logdet_n = np.linalg.slogdet(Sn)
    if sign <= 0:
        return math.inf
    return float(0.5 * (trace + maha - k + float(np.sum(np.log(lam))) - logdet_n))


def pushforward_gaussian(A, m: GaussianMeasure) -> GaussianMeasure:
    """Law of ``A w`` for ``w ~ m``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[1] != m.dim:
        raise ValueError(f"map has {A.shape[1]} columns, measure lives on R^{m.dim}")
    cov = A @ m.covariance @ A.T
    return GaussianMeasure(A @ m.mean, 0.5 * (cov + cov.T))


@dataclass(frozen=True)
class KlDecomposition:
    """``total = pushforward_kl + residual``; ``cross_check`` is ``total - pushforward_kl`` when the residual was summed directly."""

    total: float
    pushforward_kl: float
    residual: float
    cross_check: float | None = None

    @property
    def defect(self) -> float:
        if math.isinf(self.total):
            return 0.0
        return abs(self.total - self.pushforward_kl - self.residual)


def _check_idempotent(A: np.ndarray):
    dev = float(np.max(np.abs(A @ A - A), initial=0.0))
    if dev > EIG_TOL:
        raise NotIdempotent(f"map is not idempotent: max |A A - A| = {dev:.3g}")


def kl_decompose_gaussian(nu: GaussianMeasure, mu: GaussianMeasure, A) -> KlDecomposition:
    """Split ``KL(nu || mu)`` into the divergence of the pushforwards under ``A`` and a residual.

    With nonsingular covariances the residual is computed directly as an
    expected conditional divergence and ``cross_check`` holds
    ``total - pushforward_kl``; otherwise the residual is that difference.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    _check_idempotent(A)
    total = kl_gaussian(nu, mu)
    push = kl_gaussian(pushforward_gaussian(A, nu), pushforward_gaussian(A, mu))
    if math.isinf(total):
        return KlDecomposition(total, push, math.inf)
    direct = conditional_residual_gaussian(nu, mu, A)
    if direct is not None:
        return KlDecomposition(total, push, direct, total - push)
    residual = total - push
    if residual < -1e-12:
        raise ArithmeticError(f"negative residual {residual!r}: pushforward increased the divergence")
    return KlDecomposition(total, push, residual)


def _conditional_law(m: GaussianMeasure, T: np.ndarray, r: int):
    """Image coordinates ``z`` and the affine law of ``v | z`` after the change of variables ``T``."""
    S = T @ m.covariance @ T.T
    d = T @ m.mean
    Szz, Szv, Svv = S[:r, :r], S[:r, r:], S[r:, r:]
    if r:
        gain = np.linalg.solve(Szz, Szv).T
        cond = Svv - gain @ Szv
    else:
        gain, cond = np.zeros((Svv.shape[0], 0)), Svv
    return d[:r], d[r:], Szz, gain, 0.5 * (cond + cond.T)


def conditional_residual_gaussian(nu: GaussianMeasure, mu: GaussianMeasure, A) -> float | None:
    """``E_nu KL(nu(v | z) || mu(v | z))`` for nonsingular covariances, else ``None``.

    Coordinates ``z = U^T A w`` (``U`` an orthonormal basis of the image of
    ``A``) and ``v = K^T w`` (``K`` a basis of the kernel of ``A``) form an
    invertible change of variables, so the chain rule splits the divergence
    into the pushforward part on ``z`` and this conditional part on ``v``.
    Both conditionals are Gaussian with means affine in ``z``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    for m in (nu, mu):
        if np.linalg.matrix_rank(m.covariance, tol=EIG_TOL) < m.dim:
            return None
    u, s, vt = np.linalg.svd(A)
    r = int(np.sum(s > 1e-10))
    k = A.shape[0] - r
    if k == 0:
        return 0.0
    T = np.vstack([u[:, :r].T @ A, vt[r:]])
    zn, vn, Szz_n, gain_n, cond_n = _conditional_law(nu, T, r)
    zm, vm, _, gain_m, cond_m = _conditional_law(mu, T, r)
    # mean gap of the conditionals, affine in z; averaged over z ~ nu
    offset = vn - vm - gain_m @ (zn - zm)
    slope = gain_n - gain_m
    spread = slope @ Szz_n @ slope.T
    trace = float(np.trace(np.linalg.solve(cond_m, cond_n + spread)))
    maha = float(offset @ np.linalg.solve(cond_m, offset))
    logdet = np.linalg.slogdet(cond_m)[1] - np.linalg.slogdet(cond_n)[1]
    return 0.5 * (trace + maha - k + float(logdet))


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """A probability measure on a finite labeled support."""

    support: tuple
    weights: np.ndarray

    def __post_init__(self):
        support = tuple(self.support)
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(support),):
            raise ValueError("one weight per support label is required")
        if len(set(support)) != len(support):
            raise ValueError("support labels must be distinct")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(math.fsum(w) - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {math.fsum(w)!r}, not 1")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_dict(cls, d: Mapping) -> "DiscreteMeasure":
        keys = sorted(d)
        return cls(tuple(keys), [d[k] for k in keys])

    def as_dict(self) -> dict:
        return dict(zip(self.support, self.weights))

    def prob(self, label) -> float:
        return self.as_dict().get(label, 0.0)


def kl_discrete(nu: DiscreteMeasure, mu: DiscreteMeasure) -> float:
    """``KL(nu || mu)`` by exact summation; ``inf`` unless ``nu << mu``."""
    q = mu.as_dict()
    terms = []
    for s, p in zip(nu.support, nu.weights):
        if p == 0:
            continue
        qs = q.get(s, 0.0)
        if qs == 0:
            return math.inf
        terms.append(p * math.log(p / qs))
    return math.fsum(terms)


def _as_map(alpha) -> Callable:
    return alpha.__getitem__ if isinstance(alpha, Mapping) else alpha


def pushforward_discrete(alpha, m: DiscreteMeasure) -> DiscreteMeasure:
    """Law of ``alpha(s)`` for ``s ~ m``; ``alpha`` is a mapping or a callable."""
    f = _as_map(alpha)
    acc: dict = {}
    for s, p in zip(m.support, m.weights):
        t = f(s)
        acc.setdefault(t, []).append(p)
    keys = sorted(acc, key=repr)
    return DiscreteMeasure(tuple(keys), [math.fsum(acc[k]) for k in keys])


def kl_decompose_discrete(nu: DiscreteMeasure, mu: DiscreteMeasure, alpha) -> KlDecomposition:
    """Chain-rule split of ``KL(nu || mu)`` along the map ``alpha``.

    The residual is summed directly from the two density ratios;
    ``cross_check`` holds ``total - pushforward_kl``.
    """
    f = _as_map(alpha)
    total = kl_discrete(nu, mu)
    a_nu, a_mu = pushforward_discrete(f, nu), pushforward_discrete(f, mu)
    push = kl_discrete(a_nu, a_mu)
    if math.isinf(total):
        return KlDecomposition(total, push, math.inf)
    q, an, am = mu.as_dict(), a_nu.as_dict(), a_mu.as_dict()
    terms = []
    for s, p in zip(nu.support, nu.weights):
        if p == 0:
            continue
        t = f(s)
        terms.append(p * (math.log(p / q[s]) - math.log(an[t] / am[t])))
    return KlDecomposition(total, push, math.fsum(terms), total - push)
