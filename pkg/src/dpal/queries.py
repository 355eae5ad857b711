"""Query constructions and the packing certifier.

Counting queries are ``k×d`` matrices with entries in ``[-1, 1]``. The
Lipschitz query embeds a database by its distance to a family of anchors and
then takes random signed sums of the embedding, which makes it non-linear
but still 1-Lipschitz per coordinate. Marginal queries count the rows of an
attribute table that match each setting of each ``ℓ``-subset of attributes.
"""

from dataclasses import asdict, dataclass, field
from itertools import combinations, product
import math
from typing import Callable, Optional

import numpy as np

from ._validation import check_count, check_matrix, check_rng
from .data import AttributeTable, DatabaseFamily, HistogramDatabase
from .exceptions import DimensionError, ParameterError


def _counts(x):
    if isinstance(x, HistogramDatabase):
        return x.counts
    if hasattr(x, "bits"):
        return x.bits
    return np.asarray(x)


@dataclass(frozen=True)
class CountingQuery:
    matrix: np.ndarray

    def __post_init__(self):
        A = check_matrix(self.matrix, "matrix")
        if np.any(np.abs(A) > 1):
            raise ParameterError("counting query entries must lie in [-1, 1]")
        A.setflags(write=False)
        object.__setattr__(self, "matrix", A)

    @property
    def k(self):
        return self.matrix.shape[0]

    @property
    def d(self):
        return self.matrix.shape[1]

    def __call__(self, x):
        x = _counts(x)
        if x.shape[-1] != self.d:
            raise DimensionError(f"database has {x.shape[-1]} types, query expects {self.d}")
        A = self.matrix
        if np.issubdtype(x.dtype, np.integer) and np.array_equal(A, np.round(A)):
            # exact integer arithmetic for integral queries on integral databases
            return (A.astype(np.int64) @ x.T).T.astype(np.float64)
        return (A @ np.asarray(x, dtype=np.float64).T).T

    def to_json(self):
        return {"kind": "counting", "matrix": self.matrix.tolist()}


def random_sign_query(d, k, seed=None):
    """``k×d`` matrix of independent uniform ``±1`` entries."""
    d = check_count(d, "d")
    k = check_count(k, "k")
    rng = check_rng(seed)
    return CountingQuery(rng.choice(np.array([-1.0, 1.0]), size=(k, d)))


@dataclass(frozen=True)
class LipschitzQuery:
    """Signed sums of a distance-to-anchor embedding.

    Coordinate ``i`` of the embedding of ``z`` is ``max(radius − ‖x_i − z‖₁, 0)``
    for anchor ``x_i``. ``signs`` is ``k × len(anchors)``. The default radius is
    ``n'/30`` for anchor size bound ``n'``. Anchors must be at least
    ``2·radius`` apart so that at most one embedding coordinate is ever
    nonzero.
    """

    anchors: DatabaseFamily
    signs: np.ndarray
    radius: Optional[float] = None

    def __post_init__(self):
        S = np.asarray(self.signs, dtype=np.float64)
        if S.ndim != 2 or S.shape[1] != len(self.anchors):
            raise DimensionError(
                f"signs must be k x {len(self.anchors)}, got {S.shape}")
        if not np.all(np.abs(S) == 1):
            raise ParameterError("signs must be ±1")
        S.setflags(write=False)
        object.__setattr__(self, "signs", S)
        r = self.anchors.size_bound / 30 if self.radius is None else float(self.radius)
        if r <= 0:
            raise ParameterError("radius must be positive")
        if len(self.anchors) > 1 and self.anchors.delta_min < 2 * r:
            raise ParameterError(
                f"anchors {self.anchors.delta_min} apart overlap at radius {r}")
        object.__setattr__(self, "radius", r)

    @property
    def k(self):
        return self.signs.shape[0]

    def embed(self, z):
        return lipschitz_embed(z, self)

    def __call__(self, z):
        return evaluate_lipschitz_query(z, self)

    def to_json(self):
        return {"kind": "lipschitz", "anchors": self.anchors.members.tolist(),
                "size_bound": self.anchors.size_bound, "radius": self.radius,
                "signs": self.signs.astype(int).tolist()}


def random_lipschitz_query(anchors, k, seed=None, radius=None):
    k = check_count(k, "k")
    rng = check_rng(seed)
    signs = rng.choice(np.array([-1.0, 1.0]), size=(k, len(anchors)))
    return LipschitzQuery(anchors, signs, radius)


def lipschitz_embed(z, q: LipschitzQuery):
    z = _counts(z)
    X = q.anchors.members
    if z.shape[-1] != X.shape[1]:
        raise DimensionError(f"database has {z.shape[-1]} types, anchors have {X.shape[1]}")
    dist = np.abs(X - z).sum(axis=1)
    return np.maximum(q.radius - dist, 0.0)


def evaluate_lipschitz_query(z, q: LipschitzQuery):
    # sums over every anchor coordinate, not just the first d
    return q.signs @ lipschitz_embed(z, q)


@dataclass(frozen=True)
class MarginalQuery:
    """All ``ℓ``-way marginals over ``d'`` binary attributes.

    Conjunctions are ordered by attribute subset (lexicographic, as produced
    by ``itertools.combinations``) and then by sign pattern (lexicographic
    with ``-1 < +1``). This order is part of the wire format.
    """

    d_prime: int
    ell: int

    def __post_init__(self):
        check_count(self.d_prime, "d_prime")
        check_count(self.ell, "ell")
        if self.ell > self.d_prime:
            raise ParameterError(f"ell={self.ell} exceeds d'={self.d_prime}")

    @property
    def k(self):
        return 2 ** self.ell * math.comb(self.d_prime, self.ell)

    def conjunctions(self):
        """``k × d'`` array of conjunctions ``c ∈ {-1,0,1}^{d'}`` with ``|c| = ℓ``."""
        out = np.zeros((self.k, self.d_prime), dtype=np.int64)
        row = 0
        for subset in combinations(range(self.d_prime), self.ell):
            for signs in product((-1, 1), repeat=self.ell):
                out[row, list(subset)] = signs
                row += 1
        return out

    def patterns(self):
        return [conjunction_pattern(c) for c in self.conjunctions()]

    def matrix(self):
        """Counting-query matrix over the universe ``{-1,1}^{d'}`` (``2^{d'}`` columns)."""
        U = universe(self.d_prime)
        C = self.conjunctions()
        return (np.all((C[:, None, :] == 0) | (C[:, None, :] == U[None, :, :]), axis=2)
                .astype(np.float64))

    def __call__(self, x):
        return marginal_query_evaluate(x, self)

    def to_json(self):
        return {"kind": "marginal", "d_prime": self.d_prime, "ell": self.ell}


def conjunction_pattern(c):
    return "".join({1: "+", -1: "-", 0: "0"}[int(v)] for v in c)


def universe(d_prime):
    """All of ``{-1,1}^{d'}`` in lexicographic order; row ``i`` is universe element ``i``."""
    return np.array(list(product((-1, 1), repeat=d_prime)), dtype=np.int64).reshape(-1, d_prime)


def marginal_query_evaluate(x, q: MarginalQuery):
    """Count, for every conjunction, the rows matching it.

    ``x`` is an :class:`AttributeTable` (or ``n×d'`` ±1 array) or a histogram
    over ``{-1,1}^{d'}`` indexed as in :func:`universe`.
    """
    if isinstance(x, HistogramDatabase):
        if x.d != 2 ** q.d_prime:
            raise DimensionError(f"histogram needs {2 ** q.d_prime} types, got {x.d}")
        rows, weights = universe(q.d_prime), x.counts
    else:
        rows = x.values if isinstance(x, AttributeTable) else np.asarray(x, dtype=np.int64)
        if rows.ndim != 2:
            rows = rows.reshape(-1, q.d_prime)
        weights = np.ones(len(rows), dtype=np.int64)
    if rows.shape[1] != q.d_prime:
        raise DimensionError(f"table has {rows.shape[1]} columns, query expects {q.d_prime}")
    bits = (rows == 1).astype(np.int64)
    out = np.zeros(q.k, dtype=np.int64)
    block = 2 ** q.ell
    powers = 1 << np.arange(q.ell - 1, -1, -1)
    for b, subset in enumerate(combinations(range(q.d_prime), q.ell)):
        code = bits[:, list(subset)] @ powers
        out[b * block:(b + 1) * block] = np.bincount(code, weights=weights, minlength=block)
    return out.astype(np.float64)


@dataclass
class PackingCertificate:
    s: float
    delta: float
    eta: float
    epsilon: float
    n: float
    hypothesis_ok: bool
    implied_noise_bound: Optional[float]
    violated: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_json(self):
        d = asdict(self)
        for key in ("delta", "eta"):
            if math.isinf(d[key]):
                d[key] = "inf"
        return d


def verify_packing(family: DatabaseFamily, F: Callable, epsilon, eta=None, n=None):
    """Check the hypotheses of the volume (packing) lower bound on a concrete family.

    Clauses: (a) every member has size at most ``n``; (b) pairwise l1 distance
    at most ``Δ`` (measured); (c) pairwise ``‖F(x_i) − F(x_j)‖_∞`` at least
    ``η`` (measured, and at least the declared ``eta`` if given, and positive);
    (d) ``Δ ≤ (s − 1)/ε`` with ``2^s`` the family size. When all hold, any
    ε-DP mechanism must add noise ``η/2``.
    """
    if epsilon <= 0:
        raise ParameterError("epsilon must be positive")
    X = family.members
    m = len(X)
    n = family.size_bound if n is None else n
    s = math.log2(m)
    violated, notes = [], []

    if np.any(X.sum(axis=1) > n + 1e-9):
        violated.append("a")

    if m == 1:
        notes.append("no pairs")
        return PackingCertificate(s=s, delta=0.0, eta=math.inf, epsilon=epsilon, n=n,
                                  hypothesis_ok=not violated,
                                  implied_noise_bound=None if violated else math.inf,
                                  violated=violated, notes=notes)

    images = np.array([np.asarray(F(x), dtype=np.float64) for x in X])
    delta = 0.0
    sep = math.inf
    for i in range(m):
        delta = max(delta, float(np.abs(X[i + 1:] - X[i]).sum(axis=1).max(initial=0)))
        if i + 1 < m:
            sep = min(sep, float(np.abs(images[i + 1:] - images[i]).max(axis=1).min()))
    if sep <= 0 or (eta is not None and sep < eta):
        violated.append("c")
    if delta > (s - 1) / epsilon:
        violated.append("d")
    ok = not violated
    return PackingCertificate(s=s, delta=delta, eta=sep, epsilon=epsilon, n=n,
                              hypothesis_ok=ok, implied_noise_bound=sep / 2 if ok else None,
                              violated=violated, notes=notes)


def unit_vector_family(d, k, epsilon, n_members=None):
    """Scaled standard basis vectors ``floor(k/(80ε))·e_i``, ``2^(k/20)`` of them by default."""
    a = math.floor(k / (80 * epsilon))
    m = int(2 ** (k / 20)) if n_members is None else int(n_members)
    if m > d:
        raise ParameterError(f"{m} unit vectors requested in dimension {d}")
    fam = DatabaseFamily(a * np.eye(d, dtype=np.int64)[:m], size_bound=a)
    fam.meta.update({"construction": "unit", "a": a})
    return fam


def sign_query_separation(family: DatabaseFamily, query: CountingQuery, a):
    """Per-pair fraction of coordinates where two members' answers differ by ``√(Δa)/10``.

    ``Δ`` is the family's minimum pairwise distance. Returns the minimum
    fraction over all pairs and the threshold used.
    """
    X = family.members
    thresh = math.sqrt(family.delta_min * a) / 10
    images = query(X)
    worst = 1.0
    for i in range(len(X)):
        for j in range(i + 1, len(X)):
            frac = float(np.mean(np.abs(images[i] - images[j]) >= thresh))
            worst = min(worst, frac)
    return worst, thresh
