"""Generative scenarios with equivariant targets and dataset CSV I/O.

A :class:`GenerativeSpec` draws a canonical pattern, a group part from the
kernel and a noise atom, then emits ``x = g . x_phi`` and
``y = g . f*(x_phi, xi)``.  Targets live on representatives and are extended
along orbits, so they are equivariant on the support of ``X`` by
construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._io import write_text_atomic
from .errors import DatasetFormatError, NonFreeOrbit
from .groups import OrbitResolver, rotation_action, shift_action, swap_action
from .kernels import GroupKernel, mix_kernels, sample_groups, table_kernel, uniform_kernel

SCENARIOS = ("swap-toy", "restricted-rotation", "shifted-signals")
SCENARIO_SEED = 1729


@dataclass(frozen=True)
class Noise:
    """Independent output noise.

    ``flip`` flips binary labels with probability ``scale``; ``two-point`` adds
    ``+-scale`` with equal probability; ``gaussian`` adds ``N(0, scale^2)`` and
    is the only kind that cannot be enumerated.
    """

    kind: str = "none"
    scale: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "flip", "two-point", "gaussian"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "flip" and not 0.0 <= self.scale <= 1.0:
            raise ValueError("flip probability must lie in [0, 1]")

    @property
    def enumerable(self) -> bool:
        return self.kind != "gaussian"

    def atoms(self) -> list[tuple[float, float]]:
        if self.kind == "none":
            return [(0.0, 1.0)]
        if self.kind == "flip":
            return [(0.0, 1.0 - self.scale), (1.0, self.scale)]
        if self.kind == "two-point":
            return [(-self.scale, 0.5), (self.scale, 0.5)]
        raise ValueError("gaussian noise has no finite support")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "gaussian":
            return rng.normal(0.0, self.scale, n)
        values, probs = zip(*self.atoms())
        return np.asarray(values)[rng.choice(len(values), size=n, p=probs)]

    def apply(self, target, xi):
        if self.kind == "flip":
            return np.abs(np.asarray(target) - xi)
        return np.asarray(target) + xi if self.kind != "none" else np.asarray(target, dtype=float) + 0.0


@dataclass(frozen=True)
class EnumeratedLaw:
    """Atoms of the joint law of ``(X, Y)`` with their probabilities."""

    X: np.ndarray
    Y: np.ndarray
    weights: np.ndarray
    rep_index: np.ndarray
    group_part: np.ndarray
    xi: np.ndarray


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        X = np.asarray(self.X, dtype=float)
        X = X.reshape(len(y), X.shape[-1] if X.ndim == 2 else -1) if len(y) else np.atleast_2d(X)
        if len(X) != len(y):
            raise ValueError("X and y have different lengths")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return len(self.y)

    @property
    def dim(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True, eq=False)
class GenerativeSpec:
    """Finite generative model of ``(X, Y)`` satisfying the data assumptions.

    ``representatives`` are canonical patterns (checked against ``resolver``),
    ``rep_probs`` their probabilities, ``targets`` the noise-free outputs on
    them.
    """

    name: str
    resolver: OrbitResolver
    representatives: np.ndarray
    rep_probs: np.ndarray
    targets: np.ndarray
    kernel: GroupKernel
    noise: Noise = Noise()

    def __post_init__(self):
        reps = np.atleast_2d(np.asarray(self.representatives, dtype=float))
        probs = np.asarray(self.rep_probs, dtype=float)
        targets = np.asarray(self.targets, dtype=float)
        if len(probs) != len(reps) or len(targets) != len(reps):
            raise ValueError("one probability and one target per representative")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("representative probabilities must be a distribution")
        if not self.resolver.canonical_mask(reps).all():
            raise ValueError("every representative must be canonical for the resolver")
        if self.noise.kind == "flip" and not np.isin(targets, (0.0, 1.0)).all():
            raise ValueError("flip noise needs binary targets")
        for rep in reps:
            for g in self.kernel.distribution(rep)[0]:
                self.action.act(g, rep)
        object.__setattr__(self, "representatives", reps)
        object.__setattr__(self, "rep_probs", probs)
        object.__setattr__(self, "targets", targets)

    @property
    def action(self):
        return self.resolver.action

    @property
    def enumerable(self) -> bool:
        return self.noise.enumerable

    def with_kernel(self, kernel: GroupKernel) -> "GenerativeSpec":
        return replace(self, kernel=kernel)

    def target(self, rep_index, xi):
        """``f*(x_phi, xi)`` on a representative."""
        return self.noise.apply(self.targets[rep_index], xi)

    def _emit(self, rep_index, parts, xi):
        action = self.action
        reps = self.representatives[rep_index]
        X = np.empty_like(reps)
        Y = np.asarray(self.target(rep_index, xi), dtype=float).copy()
        for g in np.unique(parts):
            sel = parts == g
            X[sel] = action.act(int(g), reps[sel])
            Y[sel] = action.act_output(int(g), Y[sel])
        return X, Y

    def enumerate(self, representatives_only: bool = False) -> EnumeratedLaw:
        """Exact law as weighted atoms over (representative, group part, noise)."""
        atoms = self.noise.atoms()
        idx, parts, xis, w = [], [], [], []
        e = self.action.group.identity
        for i, (rep, p) in enumerate(zip(self.representatives, self.rep_probs)):
            dist = [(e, 1.0)] if representatives_only else zip(*self.kernel.distribution(rep))
            for g, kg in dist:
                for xi, pxi in atoms:
                    if p * kg * pxi == 0:
                        continue
                    idx.append(i)
                    parts.append(g)
                    xis.append(xi)
                    w.append(p * kg * pxi)
        idx, parts, xis = np.array(idx), np.array(parts, dtype=np.int64), np.array(xis)
        X, Y = self._emit(idx, parts, xis)
        return EnumeratedLaw(X, Y, np.array(w), idx, parts, xis)

    def input_law(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct support points of ``X`` with their probabilities."""
        law = self.enumerate()
        keys = np.round(law.X, 9) + 0.0
        uniq, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
        probs = np.bincount(inverse.ravel(), weights=law.weights)
        order = np.argsort(first)
        return law.X[first[order]], probs[order]

    def input_domain(self) -> np.ndarray:
        """Every input the spec can emit, in a fixed order."""
        return self.input_law()[0]

    def sample(self, n: int, rng: np.random.Generator, seed=None) -> Dataset:
        idx = rng.choice(len(self.representatives), size=n, p=self.rep_probs)
        parts = sample_groups(self.kernel, self.representatives[idx], rng)
        xi = self.noise.sample(n, rng)
        X, Y = self._emit(idx, parts, xi)
        return Dataset(X, Y, {"spec": self.name, "seed": seed, "n": n, "kind": "full"})

    def sample_representatives(self, n: int, rng: np.random.Generator, seed=None) -> Dataset:
        idx = rng.choice(len(self.representatives), size=n, p=self.rep_probs)
        xi = self.noise.sample(n, rng)
        Y = np.asarray(self.target(idx, xi), dtype=float)
        return Dataset(self.representatives[idx].copy(), Y, {"spec": self.name, "seed": seed, "n": n, "kind": "representatives"})


def canonicalize(ds: Dataset, resolver) -> Dataset:
    """The representative sample ``(x_phi, g^-1 . y)`` of a full sample.

    Rows stay i.i.d. copies of ``(X_phi, Y_phi)`` and keep the noise draws of
    ``ds``, which pairs the two samples.
    """
    if len(ds) == 0:
        return Dataset(ds.X, ds.y, dict(ds.provenance, kind="representatives"))
    reps, parts = resolver.resolve_batch(ds.X)
    action = resolver.action
    y = ds.y.copy()
    for g in np.unique(parts):
        sel = parts == g
        y[sel] = action.act_output(action.group.inverse(int(g)), y[sel])
    return Dataset(reps, y, dict(ds.provenance, kind="representatives"))


def sample_pair(spec: GenerativeSpec, rng: np.random.Generator):
    ds = spec.sample(1, rng)
    return ds.X[0], ds.y[0]


def sample_representative_pair(spec: GenerativeSpec, rng: np.random.Generator):
    ds = spec.sample_representatives(1, rng)
    return ds.X[0], ds.y[0]


def invariance_defect(spec: GenerativeSpec) -> float:
    """``max_g TV(P_X, g_* P_X)``; zero exactly when the input law is invariant.

    Mass pushed outside the window by a shift counts towards the distance.
    """
    X, p = spec.input_law()
    action = spec.action
    group = action.group
    elements = group.elements if group.is_finite else range(-(action.dim - 1), action.dim)
    base = {tuple(np.round(x, 9) + 0.0): w for x, w in zip(X, p)}
    worst = 0.0
    for g in elements:
        moved: dict = {}
        lost = 0.0
        for x, w in zip(X, p):
            try:
                key = tuple(np.round(action.act(g, x), 9) + 0.0)
            except ValueError:
                lost += w
                continue
            moved[key] = moved.get(key, 0.0) + w
        tv = 0.5 * (sum(abs(base.get(k, 0.0) - moved.get(k, 0.0)) for k in set(base) | set(moved)) + lost)
        worst = max(worst, tv)
    return worst


def _centered_weights(offsets, weights, order=None) -> dict:
    out: dict = {}
    for s, w in zip(offsets, weights):
        g = s % order if order else s
        out[g] = out.get(g, 0.0) + w
    return out


_PEAKED = (0.1, 0.2, 0.4, 0.2, 0.1)


def builtin_scenario(name: str, kernel: str = "default", kernel_mix: float = 0.0,
                     group_order: int | None = None) -> GenerativeSpec:
    """Desk-scale scenarios.

    ``swap-toy``
        ``S_2`` swapping R^2; ten patterns ``(a, b)`` with ``a > b``, target
        ``(a + b) / 2`` with ``+-0.1`` noise; uniform kernel by default.
    ``restricted-rotation``
        ``C_8`` rotating both 2-blocks of R^4; sixteen patterns with balanced
        binary labels and 10% flips; the kernel only reaches rotations
        ``r_-2 .. r_+2``.
    ``shifted-signals``
        integer shifts of a length-16 window; sixteen integer patterns with
        binary labels and 10% flips.  Patterns sit at offset 2 and move by
        ``-2 .. +2``, so relative to the left-aligned representative the group
        part ranges over shifts ``0 .. 4``.

    ``kernel`` is ``"default"``, ``"uniform"`` or ``"nonuniform"``;
    ``kernel_mix`` blends the chosen kernel towards the uniform one (the Haar
    kernel for finite groups).
    """
    rng = np.random.default_rng(SCENARIO_SEED)
    if name == "swap-toy":
        if group_order not in (None, 2):
            raise ValueError("swap-toy has group order 2")
        resolver = OrbitResolver(swap_action())
        vals = np.round(np.arange(0.1, 1.0, 0.2), 12)
        reps = np.array([(a, b) for a in vals for b in vals if a > b])
        targets = reps.mean(axis=1)
        noise = Noise("two-point", 0.1)
        uniform = uniform_kernel(resolver.group)
        kernels = {"default": uniform, "uniform": uniform, "nonuniform": table_kernel({0: 0.7, 1: 0.3})}
    elif name == "restricted-rotation":
        order = group_order or 8
        resolver = OrbitResolver(rotation_action(order, 4))
        sector = 2 * math.pi / order
        radius = rng.uniform(0.5, 1.5, 16)
        angle = rng.uniform(0.1, 0.9, 16) * sector
        first = np.c_[radius * np.cos(angle), radius * np.sin(angle)]
        reps = np.c_[first, rng.standard_normal((16, 2))]
        targets = rng.permutation(np.repeat([0.0, 1.0], 8))
        noise = Noise("flip", 0.1)
        peaked = table_kernel(_centered_weights(range(-2, 3), _PEAKED, order))
        uniform = uniform_kernel(resolver.group)
        kernels = {"default": peaked, "nonuniform": peaked, "uniform": uniform}
    elif name == "shifted-signals":
        if group_order is not None:
            raise ValueError("shifted-signals uses the infinite shift group")
        window, reach = 16, 4
        resolver = OrbitResolver(shift_action(window))
        seen, rows = set(), []
        while len(rows) < 16:
            length = rng.integers(3, window - reach + 1)
            x = np.zeros(window)
            x[0] = rng.integers(1, 4)
            x[1:length] = rng.integers(0, 4, length - 1)
            if tuple(x) not in seen:
                seen.add(tuple(x))
                rows.append(x)
        reps = np.array(rows)
        targets = rng.permutation(np.repeat([0.0, 1.0], 8))
        noise = Noise("flip", 0.1)
        flat = table_kernel({s: 1.0 / (reach + 1) for s in range(reach + 1)})
        peaked = table_kernel(dict(zip(range(reach + 1), _PEAKED)))
        kernels = {"default": flat, "uniform": flat, "nonuniform": peaked}
    else:
        raise ValueError(f"unknown scenario {name!r}; expected one of {SCENARIOS}")
    if kernel not in kernels:
        raise ValueError(f"unknown kernel variant {kernel!r}")
    chosen = kernels[kernel]
    if kernel_mix:
        chosen = mix_kernels(chosen, kernels["uniform"], kernel_mix)
    probs = np.full(len(reps), 1.0 / len(reps))
    return GenerativeSpec(name, resolver, reps, probs, targets, chosen, noise)


def dataset_to_csv(ds: Dataset) -> str:
    lines = [f"dim,{ds.dim}"]
    for x, y in zip(ds.X, ds.y):
        lines.append(",".join(format(float(v), ".17g") for v in (*x, y)))
    return "\n".join(lines) + "\n"


def dataset_from_csv(text: str) -> Dataset:
    lines = text.splitlines()
    if not lines:
        raise DatasetFormatError(1, "missing 'dim,<d>' header")
    head = lines[0].split(",")
    if len(head) != 2 or head[0] != "dim" or not head[1].isdigit():
        raise DatasetFormatError(1, "header must be 'dim,<d>'")
    d = int(head[1])
    X, y = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != d + 1:
            raise DatasetFormatError(lineno, f"expected {d + 1} fields, got {len(fields)}")
        try:
            values = [float(v) for v in fields]
        except ValueError as exc:
            raise DatasetFormatError(lineno, str(exc)) from None
        X.append(values[:d])
        y.append(values[d])
    return Dataset(np.array(X, dtype=float).reshape(len(y), d), np.array(y))


def save_dataset(ds: Dataset, path) -> None:
    write_text_atomic(path, dataset_to_csv(ds))


def load_dataset(path) -> Dataset:
    ds = dataset_from_csv(Path(path).read_text())
    return Dataset(ds.X, ds.y, {"path": str(path), "n": len(ds)})
