"""Conditional distributions of the group part given the orbit representative.

A :class:`GroupKernel` is a finitely supported distribution over group
elements, either shared by every representative (``"global"`` bucketing) or
stored per hash bucket of the representative.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .groups import OrbitResolver

GLOBAL = "global"
NORMALIZATION_TOL = 1e-12


def _as_distribution(weights: Mapping) -> tuple[tuple, np.ndarray]:
    items = sorted((int(g), float(w)) for g, w in weights.items())
    elements = tuple(g for g, _ in items)
    return elements, np.array([w for _, w in items], dtype=float)


@dataclass(frozen=True, eq=False)
class GroupKernel:
    """Per-bucket discrete distributions over group elements.

    Parameters
    ----------
    tables : mapping
        ``bucket_id -> {element: weight}``.  Global kernels use the single
        bucket ``"global"``.
    bucketing : {"global", "hash"}
    n_buckets : int, optional
        Number of hash buckets, required for ``"hash"`` bucketing.
    fallback : mapping, optional
        Distribution used for representatives whose bucket was never observed.
    validate : bool
        Check non-negativity and normalization.  Only audits of deliberately
        corrupted kernels turn this off.
    """

    tables: Mapping
    bucketing: str = GLOBAL
    n_buckets: int | None = None
    fallback: Mapping | None = None
    validate: bool = True

    def __post_init__(self):
        if self.bucketing not in (GLOBAL, "hash"):
            raise ValueError(f"unknown bucketing rule {self.bucketing!r}")
        if self.bucketing == "hash" and not self.n_buckets:
            raise ValueError("hash bucketing needs n_buckets")
        if self.bucketing == GLOBAL and set(self.tables) != {GLOBAL}:
            raise ValueError("a global kernel has exactly the bucket 'global'")
        dists = {str(b): _as_distribution(w) for b, w in self.tables.items()}
        object.__setattr__(self, "tables", dists)
        if self.fallback is not None:
            object.__setattr__(self, "fallback", _as_distribution(self.fallback))
        if self.validate:
            for bucket, (_, w) in list(dists.items()) + ([("fallback", self.fallback)] if self.fallback else []):
                if np.any(w < 0):
                    raise ValueError(f"negative weight in bucket {bucket}")
                if abs(w.sum() - 1.0) > NORMALIZATION_TOL:
                    raise ValueError(f"weights of bucket {bucket} sum to {w.sum()!r}, not 1")

    @property
    def is_global(self) -> bool:
        return self.bucketing == GLOBAL

    @property
    def support(self) -> tuple:
        """Union of elements carrying positive weight in any bucket."""
        out = set()
        for elements, w in self.tables.values():
            out.update(g for g, p in zip(elements, w) if p > 0)
        return tuple(sorted(out))

    def bucket_of(self, x_phi) -> str:
        if self.is_global:
            return GLOBAL
        key = np.round(np.asarray(x_phi, dtype=float), 9) + 0.0
        digest = hashlib.sha1(key.tobytes()).digest()
        return str(int.from_bytes(digest[:8], "big") % self.n_buckets)

    def distribution(self, x_phi=None) -> tuple[tuple, np.ndarray]:
        """``(elements, weights)`` of the distribution attached to ``x_phi``."""
        bucket = self.bucket_of(x_phi)
        if bucket in self.tables:
            return self.tables[bucket]
        if self.fallback is not None:
            return self.fallback
        raise KeyError(f"representative falls in unobserved bucket {bucket} and no fallback is set")

    def probability(self, x_phi, g) -> float:
        elements, w = self.distribution(x_phi)
        return float(w[elements.index(g)]) if g in elements else 0.0


def kernel_probability(kernel: GroupKernel, x_phi, g) -> float:
    """Probability the kernel assigns to the single element ``g`` at ``x_phi``."""
    return kernel.probability(x_phi, g)


def sample_group(kernel: GroupKernel, x_phi, rng: np.random.Generator) -> int:
    elements, w = kernel.distribution(x_phi)
    return int(elements[rng.choice(len(elements), p=w)])


def sample_groups(kernel: GroupKernel, reps: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Vectorized :func:`sample_group` for a batch of representatives."""
    reps = np.atleast_2d(reps)
    out = np.empty(len(reps), dtype=np.int64)
    if kernel.is_global:
        elements, w = kernel.distribution()
        out[:] = np.asarray(elements)[rng.choice(len(elements), size=len(reps), p=w)]
        return out
    buckets = np.array([kernel.bucket_of(r) for r in reps])
    for b in np.unique(buckets):
        sel = np.flatnonzero(buckets == b)
        elements, w = kernel.distribution(reps[sel[0]])
        out[sel] = np.asarray(elements)[rng.choice(len(elements), size=len(sel), p=w)]
    return out


def uniform_kernel(group) -> GroupKernel:
    """Equal weight on every element of a finite group."""
    if not group.is_finite:
        raise ValueError("the uniform kernel needs a finite group")
    n = group.order
    return GroupKernel({GLOBAL: {g: 1.0 / n for g in group.elements}})


def table_kernel(weights: Mapping) -> GroupKernel:
    return GroupKernel({GLOBAL: dict(weights)})


def mix_kernels(a: GroupKernel, b: GroupKernel, lam: float) -> GroupKernel:
    """``(1 - lam) * a + lam * b`` for global kernels."""
    if not (a.is_global and b.is_global):
        raise ValueError("only global kernels can be mixed")
    if not 0.0 <= lam <= 1.0:
        raise ValueError("mixing weight must lie in [0, 1]")
    mixed = {}
    for kern, scale in ((a, 1.0 - lam), (b, lam)):
        for g, w in zip(*kern.distribution()):
            mixed[g] = mixed.get(g, 0.0) + scale * w
    return table_kernel({g: w for g, w in mixed.items() if w > 0})


def estimate_kernel(X, resolver: OrbitResolver, bucketing: str = GLOBAL, n_buckets: int | None = None) -> GroupKernel:
    """Empirical frequencies of group parts, per representative bucket.

    Buckets that receive no data are left out; a pooled estimate is stored as
    fallback for them when bucketing by hash.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if len(X) == 0:
        raise ValueError("cannot estimate a kernel from an empty dataset")
    reps, parts = resolver.resolve_batch(X)

    def freq(p):
        values, counts = np.unique(p, return_counts=True)
        return {int(v): c / len(p) for v, c in zip(values, counts)}

    pooled = freq(parts)
    if bucketing == GLOBAL:
        return GroupKernel({GLOBAL: pooled})
    probe = GroupKernel({"0": {0: 1.0}}, bucketing="hash", n_buckets=n_buckets)
    buckets = np.array([probe.bucket_of(r) for r in reps])
    tables = {b: freq(parts[buckets == b]) for b in np.unique(buckets)}
    return GroupKernel(tables, bucketing="hash", n_buckets=n_buckets, fallback=pooled)


def total_variation(a: GroupKernel, b: GroupKernel, x_phi=None) -> float:
    """Total variation distance between the distributions both kernels attach to ``x_phi``."""
    pa = dict(zip(*a.distribution(x_phi)))
    pb = dict(zip(*b.distribution(x_phi)))
    return 0.5 * sum(abs(pa.get(g, 0.0) - pb.get(g, 0.0)) for g in set(pa) | set(pb))


def kernel_to_csv(kernel: GroupKernel) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["bucket_id", "element_id", "weight"])
    for bucket in sorted(kernel.tables):
        for g, w in zip(*kernel.tables[bucket]):
            writer.writerow([bucket, g, format(w, ".17g")])
    if kernel.fallback is not None:
        for g, w in zip(*kernel.fallback):
            writer.writerow(["fallback", g, format(w, ".17g")])
    return buf.getvalue()


def kernel_from_csv(text: str, n_buckets: int | None = None) -> GroupKernel:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["bucket_id", "element_id", "weight"]:
        raise ValueError("kernel CSV must start with the header bucket_id,element_id,weight")
    tables: dict = {}
    fallback: dict = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise ValueError(f"line {lineno}: expected 3 fields, got {len(row)}")
        target = fallback if row[0] == "fallback" else tables.setdefault(row[0], {})
        target[int(row[1])] = float(row[2])
    if set(tables) == {GLOBAL}:
        return GroupKernel(tables)
    if n_buckets is None:
        raise ValueError("hash-bucketed kernel CSV needs n_buckets")
    return GroupKernel(tables, bucketing="hash", n_buckets=n_buckets, fallback=fallback or None)


class KernelEstimator(BaseEstimator):
    """Estimate the group-part kernel from unlabeled inputs.

    After ``fit``, ``kernel_`` holds the estimated :class:`GroupKernel` and
    ``transform`` maps inputs to their canonical representatives.
    """

    def __init__(self, resolver=None, bucketing=GLOBAL, n_buckets=None):
        self.resolver = resolver
        self.bucketing = bucketing
        self.n_buckets = n_buckets

    def fit(self, X, y=None):
        if self.resolver is None:
            raise ValueError("KernelEstimator needs an OrbitResolver")
        X = check_array(X)
        self.kernel_ = estimate_kernel(X, self.resolver, self.bucketing, self.n_buckets)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "kernel_")
        X = check_array(X)
        return self.resolver.resolve_batch(X)[0]
