"""Hypothesis families that are linear in their parameters.

Every family maps an input batch to a design matrix ``Phi`` so that a
parameter vector ``w`` predicts ``Phi @ w``.  The tabular family is the
one-hot design over an enumerated input set; a tied family composes a base
design with a sharing matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .errors import NotInDomain

LOOKUP_TOL = 1e-7


class LinearFamily:
    """``f(x) = <w, x>`` on R^dim with scalar output."""

    tag = "linear"

    def __init__(self, dim: int):
        self.dim = int(dim)

    @property
    def n_params(self) -> int:
        return self.dim

    def design(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise ValueError(f"inputs have dimension {X.shape[1]}, family expects {self.dim}")
        return X

    def __repr__(self):
        return f"LinearFamily(dim={self.dim})"


class TabularFamily:
    """One free value per input of a finite enumerated domain."""

    tag = "tabular"

    def __init__(self, domain):
        domain = np.atleast_2d(np.asarray(domain, dtype=float))
        self.domain = domain
        self._tree = cKDTree(domain)
        if len(domain) > 1:
            dist, _ = self._tree.query(domain, k=2)
            if np.min(dist[:, 1]) <= LOOKUP_TOL:
                raise ValueError("tabular domain contains duplicate inputs")

    @property
    def n_params(self) -> int:
        return len(self.domain)

    @property
    def dim(self) -> int:
        return self.domain.shape[1]

    def lookup(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Indices of ``X`` in the domain and a mask of rows that were found."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise ValueError(f"inputs have dimension {X.shape[1]}, family expects {self.dim}")
        dist, idx = self._tree.query(X)
        return idx.astype(np.int64), dist <= LOOKUP_TOL

    def index(self, X) -> np.ndarray:
        idx, found = self.lookup(X)
        if not found.all():
            raise NotInDomain(f"row {int(np.argmin(found))} is not an enumerated input")
        return idx

    def design(self, X):
        idx = self.index(X)
        n = len(idx)
        return sp.csr_matrix((np.ones(n), (np.arange(n), idx)), shape=(n, self.n_params))

    def __repr__(self):
        return f"TabularFamily(n_inputs={self.n_params})"


class TiedFamily:
    """A base family whose parameters are ``sharing @ theta``."""

    def __init__(self, base, sharing):
        sharing = np.asarray(sharing, dtype=float)
        if sharing.ndim != 2 or sharing.shape[0] != base.n_params:
            raise ValueError("sharing matrix must have one row per base parameter")
        self.base = base
        self.sharing = sharing
        self.tag = "tied-" + base.tag

    @property
    def n_params(self) -> int:
        return self.sharing.shape[1]

    @property
    def dim(self) -> int:
        return self.base.dim

    def design(self, X) -> np.ndarray:
        return np.asarray(self.base.design(X) @ self.sharing)

    def expand(self, theta) -> np.ndarray:
        return np.asarray(theta) @ self.sharing.T

    def __repr__(self):
        return f"TiedFamily(base={self.base!r}, n_params={self.n_params})"


def predict(family, params, X) -> np.ndarray:
    """Predictions ``(n,)`` for one parameter vector or ``(k, n)`` for a stack."""
    params = np.asarray(params, dtype=float)
    if params.shape[-1] != family.n_params:
        raise ValueError(f"expected {family.n_params} parameters, got {params.shape[-1]}")
    if isinstance(family, TabularFamily):
        # a one-hot design is a gather
        return params[..., family.index(X)]
    phi = family.design(X)
    return np.asarray(phi @ params.T).T


@dataclass(frozen=True, eq=False)
class Predictor:
    """A family member, callable on one input or a batch."""

    family: object
    params: np.ndarray

    def __post_init__(self):
        params = np.asarray(self.params, dtype=float)
        if params.shape != (self.family.n_params,):
            raise ValueError(f"expected {self.family.n_params} parameters, got shape {params.shape}")
        object.__setattr__(self, "params", params)

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        out = predict(self.family, self.params, np.atleast_2d(X))
        return out[0] if X.ndim == 1 else out
