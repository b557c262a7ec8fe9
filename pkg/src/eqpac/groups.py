"""Group tables, group actions on inputs and outputs, and orbit canonicalization.

Groups are either finite multiplication tables (cyclic groups, the two-element
symmetric group) or the integer shift group.  Elements are plain integers:
``r_j`` of ``C_k`` is ``j``, the swap of ``S_2`` is ``1`` and a shift by ``s``
positions is ``s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import NonFreeOrbit, ShiftOutOfWindow

ANGLE_TOL = 1e-9
EXHAUSTIVE_CAP = 64


@dataclass(frozen=True, eq=False)
class FiniteGroupTable:
    """A finite group given by its composition and inverse tables.

    No axiom is enforced on construction so that corrupted tables can be
    built and audited with :func:`verify_group_axioms`.
    """

    compose_table: np.ndarray
    inverse_table: np.ndarray
    identity: int = 0
    names: tuple = ()
    kind: str = "table"

    is_finite = True

    def __post_init__(self):
        table = np.array(self.compose_table, dtype=np.int64)
        inv = np.array(self.inverse_table, dtype=np.int64)
        n = table.shape[0]
        if table.shape != (n, n) or inv.shape != (n,):
            raise ValueError("compose table must be (n, n) and inverse table (n,)")
        table.setflags(write=False)
        inv.setflags(write=False)
        object.__setattr__(self, "compose_table", table)
        object.__setattr__(self, "inverse_table", inv)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"g{i}" for i in range(n)))

    @classmethod
    def cyclic(cls, order: int) -> "FiniteGroupTable":
        if order < 1:
            raise ValueError("group order must be positive")
        idx = np.arange(order)
        return cls(
            (idx[:, None] + idx[None, :]) % order,
            (-idx) % order,
            identity=0,
            names=tuple(f"r{i}" for i in range(order)),
            kind="cyclic",
        )

    @classmethod
    def symmetric2(cls) -> "FiniteGroupTable":
        return cls([[0, 1], [1, 0]], [0, 1], identity=0, names=("e", "sigma"), kind="symmetric2")

    @property
    def order(self) -> int:
        return self.compose_table.shape[0]

    @property
    def elements(self) -> tuple:
        return tuple(range(self.order))

    def contains(self, g) -> bool:
        return isinstance(g, (int, np.integer)) and 0 <= int(g) < self.order

    def _check(self, g) -> int:
        if not self.contains(g):
            raise ValueError(f"{g!r} is not an element of this group of order {self.order}")
        return int(g)

    def compose(self, g, h) -> int:
        return int(self.compose_table[self._check(g), self._check(h)])

    def inverse(self, g) -> int:
        return int(self.inverse_table[self._check(g)])

    def name(self, g) -> str:
        return self.names[self._check(g)]


@dataclass(frozen=True)
class ShiftGroup:
    """The integer translation group, audited on ``|s| <= radius``."""

    radius: int
    identity: int = 0
    kind: str = "shift"

    is_finite = False

    @property
    def elements(self) -> tuple:
        return tuple(range(-self.radius, self.radius + 1))

    def contains(self, g) -> bool:
        return isinstance(g, (int, np.integer))

    def _check(self, g) -> int:
        if not self.contains(g):
            raise ValueError(f"{g!r} is not an integer shift")
        return int(g)

    def compose(self, g, h) -> int:
        return self._check(g) + self._check(h)

    def inverse(self, g) -> int:
        return -self._check(g)

    def name(self, g) -> str:
        return f"shift({self._check(g):+d})"


@dataclass(frozen=True)
class AxiomResult:
    passed: bool
    witness: tuple | None = None


@dataclass(frozen=True)
class GroupAxiomReport:
    results: dict

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results.values())

    def failures(self) -> list[str]:
        return [k for k, r in self.results.items() if not r.passed]


def verify_group_axioms(group, cap: int = EXHAUSTIVE_CAP) -> GroupAxiomReport:
    """Exhaustively check closure, identity, inverse and associativity.

    For the shift group the check runs over its effective support.  A failing
    axiom carries the first witness tuple found.
    """
    elements = group.elements
    if len(elements) > cap:
        raise ValueError(f"group has {len(elements)} elements, above the exhaustive cap {cap}")
    e = group.identity
    results = {}

    witness = None
    for g in elements:
        for h in elements:
            try:
                ok = group.contains(group.compose(g, h))
            except (ValueError, IndexError):
                ok = False
            if not ok:
                witness = (g, h)
                break
        if witness:
            break
    results["closure"] = AxiomResult(witness is None, witness)
    if witness is not None:
        # remaining checks index the table and would fail on garbage entries
        for name in ("identity", "inverse", "associativity"):
            results[name] = AxiomResult(False, witness)
        return GroupAxiomReport(results)

    witness = next(
        ((g,) for g in elements if group.compose(e, g) != g or group.compose(g, e) != g), None
    )
    results["identity"] = AxiomResult(witness is None, witness)

    witness = None
    for g in elements:
        gi = group.inverse(g)
        if not group.contains(gi) or group.compose(g, gi) != e or group.compose(gi, g) != e:
            witness = (g, gi)
            break
    results["inverse"] = AxiomResult(witness is None, witness)

    witness = None
    for g in elements:
        for h in elements:
            gh = group.compose(g, h)
            for k in elements:
                if group.compose(gh, k) != group.compose(g, group.compose(h, k)):
                    witness = (g, h, k)
                    break
            if witness:
                break
        if witness:
            break
    results["associativity"] = AxiomResult(witness is None, witness)
    return GroupAxiomReport(results)


def _snap(v: float) -> float:
    for target in (0.0, 1.0, -1.0):
        if abs(v - target) < 1e-15:
            return target
    return v


@dataclass(frozen=True, eq=False)
class GroupAction:
    """A measurable action of ``group`` on ``R^dim`` plus an output action.

    ``kind`` selects the input representation:

    * ``"permutation"`` -- ``sources[g]`` lists, for every output coordinate,
      the input coordinate it is read from, so ``act(g, x) = x[sources[g]]``;
    * ``"rotation"`` -- ``C_k`` rotating each consecutive 2-block by ``2 pi g / k``;
    * ``"shift"`` -- integer shifts of a length-``dim`` zero-padded window.

    ``output`` is ``"trivial"`` (invariant targets) or ``"matching"`` (outputs
    transform with the input representation).
    """

    group: object
    kind: str
    dim: int
    output: str = "trivial"
    sources: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in ("permutation", "rotation", "shift"):
            raise ValueError(f"unknown action kind {self.kind!r}")
        if self.output not in ("trivial", "matching"):
            raise ValueError(f"unknown output action {self.output!r}")
        if self.kind == "permutation":
            src = np.array(self.sources, dtype=np.int64)
            if src.shape != (self.group.order, self.dim):
                raise ValueError("permutation sources must have shape (order, dim)")
            src.setflags(write=False)
            object.__setattr__(self, "sources", src)
        if self.kind == "rotation" and (self.dim % 2 or not self.group.is_finite):
            raise ValueError("rotation actions need a finite cyclic group and an even dimension")
        if self.kind == "shift" and self.group.is_finite:
            raise ValueError("shift actions need the integer shift group")

    @property
    def is_linear(self) -> bool:
        """True when every group element acts by an orthogonal matrix on all of R^dim."""
        return self.kind in ("permutation", "rotation")

    def _rotation_block(self, g: int) -> np.ndarray:
        key = ("rot", g)
        if key not in self._cache:
            theta = 2.0 * math.pi * g / self.group.order
            c, s = _snap(math.cos(theta)), _snap(math.sin(theta))
            self._cache[key] = np.array([[c, -s], [s, c]])
        return self._cache[key]

    def matrix(self, g) -> np.ndarray:
        """Matrix of the linear representation, so ``act(g, x) = matrix(g) @ x``."""
        g = self.group._check(g)
        d = self.dim
        if self.kind == "permutation":
            m = np.zeros((d, d))
            m[np.arange(d), self.sources[g]] = 1.0
            return m
        if self.kind == "rotation":
            return np.kron(np.eye(d // 2), self._rotation_block(g))
        # partial shift: only a representation on patterns that stay in the window
        return np.eye(d, k=-g)

    def act(self, g, x) -> np.ndarray:
        """Apply ``g`` to one input ``(dim,)`` or a batch ``(n, dim)``."""
        g = self.group._check(g)
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"input has dimension {x.shape[-1]}, action expects {self.dim}")
        if self.kind == "permutation":
            return x[..., self.sources[g]]
        if self.kind == "rotation":
            blocks = x.reshape(x.shape[:-1] + (self.dim // 2, 2))
            return (blocks @ self._rotation_block(g).T).reshape(x.shape)
        if g == 0:
            return x.copy()
        out = np.zeros_like(x)
        if abs(g) >= self.dim:
            lost = x
        elif g > 0:
            out[..., g:] = x[..., : self.dim - g]
            lost = x[..., self.dim - g :]
        else:
            out[..., : self.dim + g] = x[..., -g:]
            lost = x[..., :-g]
        if np.any(lost != 0):
            raise ShiftOutOfWindow(f"{self.group.name(g)} moves support outside the window of {self.dim}")
        return out

    def act_output(self, g, y):
        if self.output == "trivial":
            self.group._check(g)
            return y
        return self.act(g, y)


def swap_action(output: str = "trivial") -> GroupAction:
    """``S_2`` swapping the two coordinates of R^2."""
    return GroupAction(FiniteGroupTable.symmetric2(), "permutation", 2, output, [[0, 1], [1, 0]])


def cyclic_permutation_action(order: int, output: str = "trivial") -> GroupAction:
    """``C_k`` cyclically shifting the coordinates of R^k; ``r_j`` moves entry i to i + j."""
    idx = np.arange(order)
    sources = (idx[None, :] - idx[:, None]) % order
    return GroupAction(FiniteGroupTable.cyclic(order), "permutation", order, output, sources)


def rotation_action(order: int, dim: int, output: str = "trivial") -> GroupAction:
    return GroupAction(FiniteGroupTable.cyclic(order), "rotation", dim, output)


def shift_action(window: int, output: str = "trivial") -> GroupAction:
    return GroupAction(ShiftGroup(radius=window - 1), "shift", window, output)


@dataclass(frozen=True)
class Resolution:
    representative: np.ndarray
    group_part: int


_DEFAULT_RULES = {
    "permutation": "sorted-descending",
    "rotation": "canonical-sector",
    "shift": "support-left-aligned",
}


class OrbitResolver:
    """Split inputs into an orbit representative and a group part.

    ``resolve(x)`` returns ``(rep, g)`` with ``act(g, rep) == x``.  Rules:

    ``sorted-descending``
        the lexicographically largest orbit element (for ``S_2`` on R^2: first
        coordinate >= second).
    ``canonical-sector``
        the orbit element whose first non-negligible 2-block has angle in
        ``[0, 2 pi / k)``.
    ``support-left-aligned``
        the shift whose first nonzero entry sits at index 0.

    Points with a nontrivial stabilizer raise :class:`NonFreeOrbit`.
    """

    def __init__(self, action: GroupAction, rule: str | None = None, tol: float = ANGLE_TOL):
        expected = _DEFAULT_RULES[action.kind]
        if rule is not None and rule != expected:
            raise ValueError(f"rule {rule!r} does not apply to {action.kind} actions (use {expected!r})")
        self.action = action
        self.rule = expected
        self.tol = tol

    @property
    def group(self):
        return self.action.group

    def resolve(self, x) -> Resolution:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise ValueError("resolve takes a single input vector; use resolve_batch")
        reps, parts = self.resolve_batch(x[None, :])
        return Resolution(reps[0], int(parts[0]))

    def resolve_batch(self, X) -> tuple[np.ndarray, np.ndarray]:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.action.dim:
            raise ValueError(f"inputs have dimension {X.shape[1]}, action expects {self.action.dim}")
        return getattr(self, "_resolve_" + self.action.kind)(X)

    def _resolve_permutation(self, X):
        group, src = self.group, self.action.sources
        best = X.copy()
        best_g = np.full(len(X), group.identity, dtype=np.int64)
        for g in group.elements:
            if g == group.identity:
                continue
            cand = X[:, src[g]]
            fixed = np.all(cand == X, axis=1)
            if fixed.any():
                i = int(np.argmax(fixed))
                raise NonFreeOrbit(f"row {i} is fixed by {group.name(g)}")
            diff = cand != best
            first = np.argmax(diff, axis=1)
            rows = np.arange(len(X))
            greater = diff.any(axis=1) & (cand[rows, first] > best[rows, first])
            best[greater] = cand[greater]
            best_g[greater] = g
        parts = np.array([group.inverse(int(g)) for g in best_g], dtype=np.int64)
        return best, parts

    def _resolve_rotation(self, X):
        k = self.group.order
        blocks = X.reshape(len(X), -1, 2)
        norms = np.linalg.norm(blocks, axis=2)
        live = norms > self.tol
        if k > 1 and not live.any(axis=1).all():
            i = int(np.argmin(live.any(axis=1)))
            raise NonFreeOrbit(f"row {i} is the origin, fixed by every rotation")
        first = np.argmax(live, axis=1)
        rows = np.arange(len(X))
        b = blocks[rows, first]
        theta = np.mod(np.arctan2(b[:, 1], b[:, 0]), 2.0 * math.pi)
        sector = 2.0 * math.pi / k
        parts = np.floor((theta + self.tol) / sector).astype(np.int64) % k
        reps = np.empty_like(X)
        for g in np.unique(parts):
            sel = parts == g
            reps[sel] = self.action.act(self.group.inverse(int(g)), X[sel])
        return reps, parts

    def _resolve_shift(self, X):
        nz = X != 0
        empty = ~nz.any(axis=1)
        if empty.any():
            raise NonFreeOrbit(f"row {int(np.argmax(empty))} is the zero signal, fixed by every shift")
        parts = np.argmax(nz, axis=1).astype(np.int64)
        reps = np.empty_like(X)
        for s in np.unique(parts):
            sel = parts == s
            reps[sel] = self.action.act(-int(s), X[sel])
        return reps, parts

    def is_canonical(self, x) -> bool:
        r = self.resolve(x)
        return r.group_part == self.group.identity and np.allclose(r.representative, x, rtol=0, atol=self.tol)

    def canonical_mask(self, X) -> np.ndarray:
        reps, parts = self.resolve_batch(X)
        close = np.all(np.abs(reps - np.atleast_2d(X)) <= self.tol, axis=1)
        return (parts == self.group.identity) & close


def group_action_from_config(cfg: Mapping) -> GroupAction:
    """Build an action from ``group.*`` / ``action.*`` keys with typed values."""
    gkind = cfg.get("group.kind")
    akind = cfg.get("action.kind")
    output = cfg.get("action.output", "trivial")
    if gkind == "symmetric2":
        if akind not in (None, "permutation") or cfg.get("action.dim", 2) != 2:
            raise ValueError("symmetric2 acts by swapping the coordinates of R^2")
        return swap_action(output)
    if gkind == "cyclic":
        order = int(cfg["group.order"])
        if akind == "rotation":
            return rotation_action(order, int(cfg["action.dim"]), output)
        if akind in (None, "permutation"):
            dim = int(cfg.get("action.dim", order))
            if dim != order:
                raise ValueError("cyclic permutation actions act on R^order")
            return cyclic_permutation_action(order, output)
        raise ValueError(f"cyclic groups do not support action kind {akind!r}")
    if gkind == "shift":
        if akind not in (None, "shift"):
            raise ValueError("the shift group only supports the shift action")
        return shift_action(int(cfg["action.window"]), output)
    raise ValueError(f"unknown group kind {gkind!r}")
