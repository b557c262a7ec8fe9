"""Kernel-weighted averaging of predictors over orbits.

``average_function`` evaluates

    Q(f)(x) = pi_G(x) . sum_g kappa(x_phi, g) g^-1 . f(g . x_phi)

exactly over the finite kernel support.  For families that stay closed under
``Q`` the same map is realized on parameters by a :class:`ParameterProjection`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ClosureNotCertified, NotIdempotent, NotInDomain, ShiftOutOfWindow
from .families import LinearFamily, Predictor, TabularFamily, TiedFamily, predict
from .groups import GroupAction, OrbitResolver
from .kernels import GroupKernel

FUNCTION_TOL = 1e-9
MATRIX_TOL = 1e-10
AUDIT_SEED = 20240917
N_PROBES = 256


class AveragedPredictor:
    """The averaged function ``Q(f)``; callable on one input or a batch."""

    def __init__(self, f, kernel: GroupKernel, resolver: OrbitResolver):
        self.f = f
        self.kernel = kernel
        self.resolver = resolver

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X2 = np.atleast_2d(X)
        action = self.resolver.action
        group = action.group
        reps, parts = self.resolver.resolve_batch(X2)
        if self.kernel.is_global:
            groups = [np.arange(len(X2))]
        else:
            buckets = np.array([self.kernel.bucket_of(r) for r in reps])
            groups = [np.flatnonzero(buckets == b) for b in np.unique(buckets)]
        out = None
        for rows in groups:
            elements, weights = self.kernel.distribution(reps[rows[0]])
            acc = 0.0
            for g, w in zip(elements, weights):
                if w == 0:
                    continue
                values = np.asarray(self.f(action.act(g, reps[rows])), dtype=float)
                acc = acc + w * action.act_output(group.inverse(g), values)
            acc = np.asarray(acc, dtype=float)
            if out is None:
                out = np.zeros((len(X2),) + acc.shape[1:])
            out[rows] = acc
        if action.output != "trivial":
            for g in np.unique(parts):
                sel = parts == g
                out[sel] = action.act_output(int(g), out[sel])
        return out[0] if single else out


def average_function(f, kernel: GroupKernel, resolver: OrbitResolver) -> AveragedPredictor:
    """Return ``Q(f)``, the kernel-weighted orbit average of ``f``."""
    return AveragedPredictor(f, kernel, resolver)


@dataclass(frozen=True)
class PropertyReport:
    name: str
    passed: bool
    max_deviation: float
    n_checked: int
    witness: object = None
    detail: str = ""


def _safe_eval(f, X) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate ``f`` row-wise where it is defined; returns ``(mask, values)``."""
    try:
        return np.ones(len(X), dtype=bool), np.asarray(f(X), dtype=float)
    except (NotInDomain, ShiftOutOfWindow):
        pass
    mask = np.zeros(len(X), dtype=bool)
    values = []
    for i, x in enumerate(X):
        try:
            values.append(np.asarray(f(x), dtype=float))
            mask[i] = True
        except (NotInDomain, ShiftOutOfWindow):
            continue
    if not values:
        return mask, np.zeros(len(X))
    stacked = np.stack(values)
    full = np.zeros((len(X),) + stacked.shape[1:])
    full[mask] = stacked
    return mask, full


def _act_valid(action: GroupAction, g, X) -> tuple[np.ndarray, np.ndarray]:
    if action.kind != "shift":
        return np.ones(len(X), dtype=bool), action.act(g, X)
    mask = np.zeros(len(X), dtype=bool)
    out = np.zeros_like(X)
    for i, x in enumerate(X):
        try:
            out[i] = action.act(g, x)
            mask[i] = True
        except ShiftOutOfWindow:
            continue
    return mask, out


def _group_elements(action: GroupAction, extent: int | None = None):
    if action.group.is_finite:
        return action.group.elements
    r = extent if extent is not None else action.dim - 1
    return tuple(range(-r, r + 1))


def check_equivariant(f, action: GroupAction, probes, elements=None, tol: float = FUNCTION_TOL) -> PropertyReport:
    """Largest ``|f(g.x) - g.f(x)|`` over probe/element pairs where both sides are defined."""
    X = np.atleast_2d(np.asarray(probes, dtype=float))
    elements = _group_elements(action) if elements is None else elements
    base_mask, base = _safe_eval(f, X)
    worst, n, witness = 0.0, 0, None
    for g in elements:
        moved_mask, moved = _act_valid(action, g, X)
        rows = np.flatnonzero(base_mask & moved_mask)
        if len(rows) == 0:
            continue
        ok, lhs = _safe_eval(f, moved[rows])
        rows, lhs = rows[ok], lhs[ok]
        if len(rows) == 0:
            continue
        rhs = action.act_output(g, base[rows])
        dev = np.abs(lhs - rhs).reshape(len(rows), -1).max(axis=1)
        n += len(rows)
        i = int(np.argmax(dev))
        if dev[i] > worst:
            worst, witness = float(dev[i]), (int(g), X[rows[i]].copy())
    return PropertyReport("equivariance", worst <= tol, worst, n, witness if worst > tol else None)


def default_probes(family, resolver: OrbitResolver, kernel: GroupKernel | None = None,
                   n: int = N_PROBES, seed: int = AUDIT_SEED) -> np.ndarray:
    """Probe inputs for property audits.

    Every enumerated input for tabular families, otherwise ``n`` standard
    Gaussian draws (shift actions draw short left-aligned patterns and move
    them by kernel-supported shifts so they stay inside the window).
    """
    base = family.base if isinstance(family, TiedFamily) else family
    if isinstance(base, TabularFamily):
        return base.domain
    rng = np.random.default_rng(seed)
    action = resolver.action
    d = action.dim
    if action.kind != "shift":
        return rng.standard_normal((n, d))
    support = kernel.support if kernel is not None else (0,)
    room = d - max(support)
    out = np.zeros((n, d))
    for i in range(n):
        length = rng.integers(1, room + 1)
        out[i, :length] = rng.standard_normal(length)
        out[i, 0] = rng.choice([-1.0, 1.0]) * (0.5 + rng.random())
        out[i] = action.act(int(rng.choice(support)), out[i])
    return out


def check_idempotent(kernel: GroupKernel, resolver: OrbitResolver, family, n_predictors: int = 8,
                     probes=None, seed: int = AUDIT_SEED, tol: float = FUNCTION_TOL) -> PropertyReport:
    """Compare ``Q(Q(f))`` with ``Q(f)`` for random members of ``family``."""
    probes = default_probes(family, resolver, kernel, seed=seed) if probes is None else probes
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_predictors):
        f = Predictor(family, rng.standard_normal(family.n_params))
        qf = average_function(f, kernel, resolver)
        qqf = average_function(qf, kernel, resolver)
        worst = max(worst, float(np.max(np.abs(qqf(probes) - qf(probes)))))
    return PropertyReport("idempotency", worst <= tol, worst, n_predictors * len(probes))


def check_fixed_point(f, kernel: GroupKernel, resolver: OrbitResolver, probes,
                      tol: float = FUNCTION_TOL) -> PropertyReport:
    """Check that ``f`` is equivariant exactly when ``Q(f) == f`` on the probes.

    ``max_deviation`` is ``max |Q(f) - f|``; ``detail`` records both verdicts.
    """
    X = np.atleast_2d(np.asarray(probes, dtype=float))
    equiv = check_equivariant(f, resolver.action, X, tol=tol)
    mask, fx = _safe_eval(f, X)
    qfx = average_function(f, kernel, resolver)(X[mask])
    dev = float(np.max(np.abs(qfx - fx[mask]))) if mask.any() else 0.0
    fixed = dev <= tol
    return PropertyReport(
        "fixed-point", equiv.passed == fixed, dev, int(mask.sum()),
        detail=f"equivariant={equiv.passed} fixed={fixed}",
    )


@dataclass(frozen=True, eq=False)
class ParameterProjection:
    """Linear realization ``w -> A w`` of the averaging operator on parameters."""

    matrix: np.ndarray
    family: object
    provenance: str = ""

    def __post_init__(self):
        A = np.asarray(self.matrix, dtype=float)
        p = self.family.n_params
        if A.shape != (p, p):
            raise ValueError(f"projection must be {p}x{p}, got {A.shape}")
        dev = float(np.max(np.abs(A @ A - A))) if p else 0.0
        if dev > MATRIX_TOL:
            raise NotIdempotent(f"projection is not idempotent: max |A A - A| = {dev:.3g}")
        object.__setattr__(self, "matrix", A)

    def apply(self, params) -> np.ndarray:
        return np.asarray(params) @ self.matrix.T

    @property
    def rank(self) -> int:
        return int(np.linalg.matrix_rank(self.matrix, tol=1e-8)) if self.matrix.size else 0

    def to_csv(self) -> str:
        p = self.matrix.shape[0]
        lines = [f"dim,{p}"]
        lines += [",".join(format(v, ".17g") for v in row) for row in self.matrix]
        return "\n".join(lines) + "\n"


def projection_matrix_from_csv(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split(",")
    if head[0] != "dim" or len(head) != 2:
        raise ValueError("projection CSV must start with 'dim,<p>'")
    p = int(head[1])
    A = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    if A.shape != (p, p):
        raise ValueError(f"expected a {p}x{p} matrix, got {A.shape}")
    return A


def _tabular_matrix(family: TabularFamily, resolver: OrbitResolver, kernel: GroupKernel) -> np.ndarray:
    action = resolver.action
    if action.output != "trivial":
        raise ClosureNotCertified("tabular families carry scalar outputs; the output action must be trivial")
    reps, _ = resolver.resolve_batch(family.domain)
    A = np.zeros((family.n_params, family.n_params))
    for i, rep in enumerate(reps):
        elements, weights = kernel.distribution(rep)
        for g, w in zip(elements, weights):
            if w == 0:
                continue
            try:
                j = family.index(action.act(g, rep)[None, :])[0]
            except (NotInDomain, ShiftOutOfWindow) as exc:
                raise ClosureNotCertified(
                    f"kernel element {action.group.name(g)} maps input {i} outside the enumerated domain"
                ) from exc
            A[i, j] += w
    return A


def _linear_matrix(family: LinearFamily, resolver: OrbitResolver, kernel: GroupKernel) -> np.ndarray:
    action = resolver.action
    group = action.group
    if action.output != "trivial":
        raise ClosureNotCertified("linear families carry scalar outputs; the output action must be trivial")
    if not (action.is_linear and group.is_finite):
        raise ClosureNotCertified("linear families are certified only for orthogonal actions of finite groups")
    if not kernel.is_global:
        raise ClosureNotCertified("linear families need a representative-independent kernel")
    elements, weights = kernel.distribution()
    uniform = set(elements) == set(group.elements) and np.allclose(weights, 1.0 / group.order, rtol=0, atol=1e-12)
    if not uniform:
        raise ClosureNotCertified("averaging a linear family with a non-uniform kernel leaves the family")
    mats = [action.matrix(g) for g in group.elements]
    for m in mats:
        if np.max(np.abs(m.T @ m - np.eye(action.dim))) > 1e-12:
            raise ClosureNotCertified("the input representation is not orthogonal")
    return sum(m.T for m in mats) / group.order


def build_parameter_projection(family, resolver: OrbitResolver, kernel: GroupKernel,
                               verify: bool = True, n_probe_predictors: int = 100,
                               seed: int = AUDIT_SEED) -> ParameterProjection:
    """Matrix ``A`` with ``Predictor(family, A w) == Q(Predictor(family, w))``.

    Certified combinations: tabular families with any finite kernel, linear
    families with the uniform kernel of a finite orthogonal action, and tied
    families whose sharing pattern spans exactly the fixed space of the base
    projection (on which ``Q`` is the identity).  Anything else raises
    :class:`ClosureNotCertified`.
    """
    if isinstance(family, TabularFamily):
        A, prov = _tabular_matrix(family, resolver, kernel), "tabular orbit average"
    elif isinstance(family, LinearFamily):
        A, prov = _linear_matrix(family, resolver, kernel), "linear group average"
    elif isinstance(family, TiedFamily):
        A, prov = _tied_matrix(family, resolver, kernel, seed), "tied family (identity on fixed space)"
    else:
        raise ClosureNotCertified(f"no closure certificate for family {family!r}")
    proj = ParameterProjection(A, family, prov)
    if verify:
        dev = _closure_deviation(proj, resolver, kernel, n_probe_predictors, seed)
        if dev > FUNCTION_TOL:
            raise ClosureNotCertified(f"parameter and function averaging disagree by {dev:.3g}")
    return proj


def _tied_matrix(family: TiedFamily, resolver, kernel, seed) -> np.ndarray:
    B = family.sharing
    try:
        base = build_parameter_projection(family.base, resolver, kernel, verify=False).matrix
    except ClosureNotCertified:
        base = None
    if base is not None:
        if np.max(np.abs(base @ B - B), initial=0.0) > FUNCTION_TOL:
            raise ClosureNotCertified("sharing pattern leaves the fixed space of the averaging operator")
        if np.linalg.matrix_rank(B, tol=1e-8) != np.linalg.matrix_rank(base, tol=1e-8):
            raise ClosureNotCertified("sharing pattern does not span the image of the averaging operator")
    else:
        probes = default_probes(family, resolver, kernel, seed=seed)
        for j in range(B.shape[1]):
            f = Predictor(family.base, B[:, j])
            dev = np.max(np.abs(average_function(f, kernel, resolver)(probes) - f(probes)))
            if dev > FUNCTION_TOL:
                raise ClosureNotCertified(f"sharing column {j} is not a fixed point of averaging")
    return np.eye(family.n_params)


def _closure_deviation(proj: ParameterProjection, resolver, kernel, n: int, seed: int) -> float:
    family = proj.family
    probes = default_probes(family, resolver, kernel, seed=seed)
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((n, family.n_params))
    param_side = predict(family, proj.apply(W), probes)
    worst = 0.0
    for w, row in zip(W, param_side):
        fn_side = average_function(Predictor(family, w), kernel, resolver)(probes)
        worst = max(worst, float(np.max(np.abs(fn_side - row))))
    return worst


def check_closure(proj: ParameterProjection, resolver: OrbitResolver, kernel: GroupKernel,
                  n_predictors: int = 100, seed: int = AUDIT_SEED) -> PropertyReport:
    dev = _closure_deviation(proj, resolver, kernel, n_predictors, seed)
    return PropertyReport("closure", dev <= FUNCTION_TOL, dev, n_predictors)


def orbit_sharing(family: TabularFamily, resolver: OrbitResolver) -> np.ndarray:
    """0/1 matrix tying every enumerated input to its orbit (one column per orbit)."""
    reps, _ = resolver.resolve_batch(family.domain)
    keys = np.round(reps, 7) + 0.0
    _, orbit = np.unique(keys, axis=0, return_inverse=True)
    orbit = orbit.ravel()
    B = np.zeros((family.n_params, orbit.max() + 1))
    B[np.arange(family.n_params), orbit] = 1.0
    return B


def equivariant_family(family, resolver: OrbitResolver, projection: ParameterProjection | None = None) -> TiedFamily:
    """The subfamily of equivariant members, parametrized by a sharing pattern.

    Tabular families tie entries along orbits; linear families use an
    orthonormal basis of the image of their projection.
    """
    if isinstance(family, TabularFamily):
        return TiedFamily(family, orbit_sharing(family, resolver))
    if projection is None:
        raise ValueError("a projection is needed to find the equivariant subspace")
    U, s, _ = np.linalg.svd(projection.matrix)
    return TiedFamily(family, U[:, s > 1e-10])
