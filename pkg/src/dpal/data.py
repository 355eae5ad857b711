"""Databases and the explicit database families used by the packing arguments.

A histogram database is a vector of nonnegative counts over a universe of
``d`` types; its size is the total count. Bit databases are the special case
of at most one element per type. Attribute tables are ``n`` rows of ``±1``
attributes, one of which may be designated as hidden.
"""

from dataclasses import dataclass, field
from itertools import combinations
import math
from typing import Optional

import numpy as np

from ._validation import check_count, check_rng
from .exceptions import ConstructionError, DimensionError, ParameterError, ResourceError


@dataclass(frozen=True)
class HistogramDatabase:
    counts: np.ndarray
    capacity: Optional[int] = None

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 1:
            raise DimensionError("counts must be 1-D")
        if c.size and not np.array_equal(c, np.round(c)):
            raise ParameterError("counts must be integers")
        c = c.astype(np.int64)
        if np.any(c < 0):
            raise ParameterError("counts must be nonnegative")
        if self.capacity is not None and c.sum() > self.capacity:
            raise ParameterError(f"size {c.sum()} exceeds capacity {self.capacity}")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def d(self):
        return self.counts.size

    @property
    def n(self):
        return int(self.counts.sum())

    def to_json(self):
        return {"kind": "histogram", "data": self.counts.tolist(),
                "meta": {"capacity": self.capacity}}


@dataclass(frozen=True)
class BitDatabase:
    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 1 or not np.all((b == 0) | (b == 1)):
            raise ParameterError("bits must be a 1-D 0/1 vector")
        b = b.astype(np.int64)
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def n(self):
        return self.bits.size

    def as_histogram(self):
        return HistogramDatabase(self.bits)

    def to_json(self):
        return {"kind": "bits", "data": self.bits.tolist(), "meta": {}}


@dataclass(frozen=True)
class AttributeTable:
    """``n`` individuals by ``d'`` binary attributes encoded as ``±1``."""

    values: np.ndarray
    hidden_column_index: Optional[int] = None

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2:
            raise DimensionError("attribute table must be 2-D")
        if not np.all((v == 1) | (v == -1)):
            raise ParameterError("attribute entries must be ±1")
        v = v.astype(np.int64)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        h = self.hidden_column_index
        if h is not None and not 0 <= h < v.shape[1]:
            raise ParameterError(f"hidden column {h} out of range for {v.shape[1]} columns")

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def d_prime(self):
        return self.values.shape[1]

    def with_hidden(self, index):
        return AttributeTable(self.values, index)

    def known(self):
        """The table with the hidden column removed, and the hidden column as 0/1 bits."""
        if self.hidden_column_index is None:
            raise ParameterError("no hidden column designated")
        h = self.hidden_column_index
        known = np.delete(self.values, h, axis=1)
        bits = (self.values[:, h] == 1).astype(np.int64)
        return known, bits

    def to_json(self):
        return {"kind": "table", "data": self.values.tolist(),
                "meta": {"hidden_column_index": self.hidden_column_index}}


def database_from_json(obj):
    kind = obj.get("kind")
    meta = obj.get("meta", {}) or {}
    if kind == "histogram":
        return HistogramDatabase(np.asarray(obj["data"]), meta.get("capacity"))
    if kind == "bits":
        return BitDatabase(np.asarray(obj["data"]))
    if kind == "table":
        return AttributeTable(np.asarray(obj["data"]), meta.get("hidden_column_index"))
    raise ParameterError(f"unknown database kind {kind!r}")


def pairwise_l1(members):
    """Matrix of pairwise l1 distances between the rows of ``members``."""
    X = np.asarray(members, dtype=np.int64)
    out = np.zeros((len(X), len(X)), dtype=np.int64)
    for i in range(len(X)):
        out[i] = np.abs(X - X[i]).sum(axis=1)
    return out


@dataclass
class DatabaseFamily:
    """A set of databases with recorded size and pairwise-distance bounds.

    ``s`` is ``floor(log2(len(members)))``; ``meta`` records how the family was
    built and any shortfall against the construction's nominal targets.
    """

    members: np.ndarray
    size_bound: float
    delta_min: float = field(init=False)
    delta_max: float = field(init=False)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.members = np.atleast_2d(np.asarray(self.members, dtype=np.int64))
        if len(self.members) == 0:
            raise ParameterError("a family needs at least one member")
        D = pairwise_l1(self.members)
        off = D[~np.eye(len(D), dtype=bool)]
        self.delta_min = float(off.min()) if off.size else math.inf
        self.delta_max = float(off.max()) if off.size else 0.0

    @property
    def s(self):
        return int(math.floor(math.log2(len(self.members))))

    def __len__(self):
        return len(self.members)

    def databases(self):
        return [HistogramDatabase(m) for m in self.members]

    def check_invariants(self):
        """Exhaustively re-verify sizes and pairwise distances; returns a list of violations."""
        problems = []
        sizes = self.members.sum(axis=1)
        if np.any(self.members < 0):
            problems.append("negative count")
        if np.any(sizes > self.size_bound + 1e-9):
            problems.append(f"member size {sizes.max()} exceeds bound {self.size_bound}")
        D = pairwise_l1(self.members)
        for i, j in combinations(range(len(D)), 2):
            if not self.delta_min <= D[i, j] <= self.delta_max:
                problems.append(f"pair ({i},{j}) distance {D[i, j]} outside recorded range")
        return problems


def greedy_binary_code(length, min_distance, target, *, seed=0, restarts=50,
                       exhaustive_limit=16):
    """Binary code of the requested size and minimum Hamming distance.

    Up to ``exhaustive_limit`` bits the lexicographic greedy code (lexicode)
    is built by scanning every word in order; longer codes draw random
    candidates, restarting up to ``restarts`` times and keeping the largest.
    Raises :class:`ConstructionError` carrying the best partial code if
    ``target`` words cannot be reached.
    """
    length = check_count(length, "length")
    target = check_count(target, "target")
    if min_distance <= 0:
        min_distance = 0
    if length <= exhaustive_limit:
        words = _lexicode(length, int(min_distance), target)
    else:
        words = _random_code(length, int(min_distance), target, check_rng(seed), restarts)
    if len(words) < target:
        raise ConstructionError(
            f"greedy code reached {len(words)} of {target} words at distance {min_distance}",
            achieved=len(words), target=target, partial=words)
    return words


def _lexicode(length, dist, target):
    accepted = np.empty(min(target, 1 << length), dtype=np.int64)
    m = 0
    for w in range(1 << length):
        if m and dist > 1 and np.bitwise_count(accepted[:m] ^ w).min() < dist:
            continue
        accepted[m] = w
        m += 1
        if m == target:
            break
    shifts = np.arange(length - 1, -1, -1)
    return ((accepted[:m, None] >> shifts) & 1).astype(np.int64)


def _random_code(length, dist, target, rng, restarts):
    best = np.zeros((0, length), dtype=np.int64)
    budget = 20 * target + 1000
    for _ in range(restarts):
        words = []
        for _ in range(budget):
            c = rng.integers(0, 2, size=length)
            if all(np.abs(w - c).sum() >= max(dist, 1) for w in words):
                words.append(c)
                if len(words) == target:
                    return np.array(words, dtype=np.int64)
        if len(words) > len(best):
            best = np.array(words, dtype=np.int64)
    return best


def build_code_family(d, d_prime, epsilon, *, target_size=None, min_distance=None,
                      max_members=4096, seed=0, restarts=50):
    """Scaled binary codewords padded with zeros to length ``d``.

    Each member is ``floor(1/(4ε))`` times a codeword supported on the first
    ``d_prime`` coordinates. The nominal code has ``2^(4d'/5)`` words at
    distance ``d'/9``; the target is capped at ``max_members`` and the
    achieved size and distance are recorded in ``meta``.
    """
    d = check_count(d, "d")
    d_prime = check_count(d_prime, "d_prime")
    if d_prime > d:
        raise ParameterError(f"d_prime={d_prime} exceeds d={d}")
    if not 0 < epsilon <= 1 / 40:
        raise ParameterError(f"epsilon must lie in (0, 1/40], got {epsilon}")
    scale = math.floor(1 / (4 * epsilon))
    n = d_prime / (4 * epsilon)
    dist = math.ceil(d_prime / 9) if min_distance is None else int(min_distance)
    nominal = 2 ** math.floor(4 * d_prime / 5)
    target = nominal if target_size is None else int(target_size)
    capped = target > max_members
    target = min(target, max_members)
    code = greedy_binary_code(d_prime, dist, target, seed=seed, restarts=restarts)
    members = np.zeros((len(code), d), dtype=np.int64)
    members[:, :d_prime] = scale * code
    fam = DatabaseFamily(members, size_bound=n)
    fam.meta.update({
        "construction": "code", "scale": scale, "n": n, "code_distance": dist,
        "nominal_size": nominal, "target_size": target, "target_capped": capped,
        "achieved_rate": math.log2(len(code)) / d_prime,
        "achieved_distance": fam.delta_min / scale if len(code) > 1 else None,
    })
    return fam


def greedy_design(d, set_size, rho, n_members, *, seed=0, restarts=50, budget=None):
    """Subsets of ``range(d)`` of size ``set_size`` with pairwise intersections ≤ ``rho``.

    Random greedy packing with restarts; deterministic under ``seed``. Returns
    a 0/1 incidence matrix, raising :class:`ConstructionError` (with the best
    partial design) if ``n_members`` sets cannot be packed.
    """
    d = check_count(d, "d")
    set_size = check_count(set_size, "set_size")
    n_members = check_count(n_members, "n_members")
    if set_size > d:
        raise ParameterError("set_size exceeds d")
    rng = check_rng(seed)
    if budget is None:
        budget = 50 * n_members + 500
    best = np.zeros((0, d), dtype=np.int64)
    for _ in range(restarts):
        rows = []
        for _ in range(budget):
            c = np.zeros(d, dtype=np.int64)
            c[rng.choice(d, size=set_size, replace=False)] = 1
            if not rows or (np.array(rows) @ c).max() <= rho:
                rows.append(c)
                if len(rows) == n_members:
                    return np.array(rows)
        if len(rows) > len(best):
            best = np.array(rows)
    raise ConstructionError(
        f"design packing reached {len(best)} of {n_members} sets",
        achieved=len(best), target=n_members, partial=best)


def design_family(d, set_size, rho, n_members, a, *, size_bound=None, seed=0, restarts=50):
    """Characteristic vectors of a greedy design, scaled by ``a``."""
    incidence = greedy_design(d, set_size, rho, n_members, seed=seed, restarts=restarts)
    bound = set_size * a if size_bound is None else size_bound
    fam = DatabaseFamily(a * incidence, size_bound=bound)
    fam.meta.update({"construction": "design", "set_size": set_size, "rho": rho, "a": a})
    return fam


def build_design_family(d, k, epsilon, *, n_members=None, max_members=4096, seed=0,
                        restarts=50, C=4):
    """Design-based family with entries in ``{0, a}``.

    For ``ε ≤ 1``: sets of size ``floor(k / log2(d/k))`` with intersections at
    most a quarter of that, scaled by ``a = floor(log2(d/k) / (80ε))``, and
    ``2^(k/20)`` members. For ``ε > 1``: 0/1 vectors (``a = 1``) of size at most
    ``n = k/(4ε)`` with intersections at most ``4n/5`` and ``2^(4k/5)`` members.
    ``C`` is the slack constant in the precondition ``k ≤ d/C``.
    """
    d = check_count(d, "d")
    k = check_count(k, "k")
    if epsilon <= 0:
        raise ParameterError("epsilon must be positive")
    if epsilon <= 1:
        if not math.log2(d) <= k <= d / C:
            raise ParameterError(f"need log2(d) <= k <= d/{C}, got d={d}, k={k}")
        log_ratio = math.log2(d / k)
        set_size = max(1, math.floor(k / log_ratio))
        rho = set_size // 4
        a = max(1, math.floor(log_ratio / (80 * epsilon)))
        nominal = max(1, math.floor(2 ** (k / 20)))
        size_bound = k / (80 * epsilon)
        claims = {"min_entry": log_ratio / (160 * epsilon), "min_distance": k / (160 * epsilon)}
    else:
        n = k / (4 * epsilon)
        set_size = max(1, math.floor(n))
        rho = math.floor(4 * n / 5)
        a = 1
        nominal = 2 ** math.floor(4 * k / 5)
        size_bound = n
        claims = {"min_entry": 1, "min_distance": n / 10}
    target = nominal if n_members is None else int(n_members)
    capped = target > max_members
    target = min(target, max_members)
    if target > math.comb(d, set_size):
        raise ResourceError(f"{target} members requested but only C({d},{set_size}) sets exist",
                            estimate=target, limit=math.comb(d, set_size))
    fam = design_family(d, set_size, rho, target, a, size_bound=size_bound, seed=seed,
                        restarts=restarts)
    fam.meta.update({"variant": "clm0" if epsilon <= 1 else "clm6", "nominal_size": nominal,
                     "target_size": target, "target_capped": capped, "claimed": claims})
    return fam


def random_attribute_table(n, d_prime, seed=None):
    n = check_count(n, "n")
    d_prime = check_count(d_prime, "d_prime")
    rng = check_rng(seed)
    return AttributeTable(rng.choice(np.array([-1, 1]), size=(n, d_prime)))


def random_histogram(d, n, seed=None):
    """``n`` elements dropped uniformly into ``d`` types."""
    rng = check_rng(seed)
    return HistogramDatabase(rng.multinomial(n, np.full(d, 1.0 / d)))


def random_bits(n, seed=None):
    rng = check_rng(seed)
    return BitDatabase(rng.integers(0, 2, size=n))
