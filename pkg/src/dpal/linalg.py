"""Dense linear algebra used by every other module.

Projected norms, Hadamard row products, the smallest singular value by
inverse iteration, and the plain-text matrix format used by CLI fixtures.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._validation import check_matrix, check_rng, check_vector
from .exceptions import ConvergenceError, DimensionError, ParameterError, SchemaError


@dataclass(frozen=True)
class ProjectedNorm:
    """The l_p norm of a vector restricted to the coordinates in ``subset``.

    ``subset=None`` means every coordinate.
    """

    subset: Optional[frozenset] = None
    p: int = 2

    def __post_init__(self):
        if self.p not in (1, 2):
            raise ParameterError(f"p must be 1 or 2, got {self.p}")
        if self.subset is not None:
            object.__setattr__(self, "subset", frozenset(int(i) for i in self.subset))


def norm(x, spec: ProjectedNorm = ProjectedNorm()) -> float:
    x = check_vector(x, "x", allow_empty=True)
    if spec.subset is not None:
        idx = np.fromiter(sorted(spec.subset), dtype=np.intp, count=len(spec.subset))
        if idx.size and (idx.min() < 0 or idx.max() >= x.size):
            raise DimensionError(f"subset indices out of range for length {x.size}")
        x = x[idx]
    if spec.p == 1:
        return float(np.abs(x).sum())
    return float(np.sqrt(np.dot(x, x)))


def subset_norm(x, subset, p) -> float:
    """Shorthand for ``norm(x, ProjectedNorm(subset, p))``."""
    return norm(x, ProjectedNorm(subset, p))


def hadamard_row_product(factors: Sequence) -> np.ndarray:
    """Row-wise Hadamard product of matrices sharing a column count.

    The row for the index tuple ``(i_1, ..., i_s)`` is the entrywise product of
    row ``i_j`` of factor ``j``. Rows come out in lexicographic order of the
    tuples, i.e. the last factor varies fastest.
    """
    if len(factors) == 0:
        raise ParameterError("need at least one factor")
    mats = [check_matrix(F, f"factors[{j}]") for j, F in enumerate(factors)]
    n = mats[0].shape[1]
    for j, M in enumerate(mats):
        if M.shape[1] != n:
            raise DimensionError(
                f"factor {j} has {M.shape[1]} columns, factor 0 has {n}")
    out = mats[0]
    for M in mats[1:]:
        out = (out[:, None, :] * M[None, :, :]).reshape(-1, n)
    return out


def smallest_singular_value(A, tol=1e-6, max_iter=10_000, seed=0,
                            return_vector=False):
    """Smallest singular value of a tall matrix by inverse iteration on AᵀA.

    The Gram matrix is factored once with a tiny diagonal shift so that
    rank-deficient inputs do not break the factorization; the shift only
    steers the iteration, the returned value is ``‖Az‖₂`` for the final unit
    vector ``z``. Iteration stops when successive estimates agree to ``tol``
    relative and the Rayleigh residual is below ``tol`` times the Gram norm.
    """
    A = check_matrix(A)
    k, d = A.shape
    if k < d:
        raise DimensionError(f"need rows >= cols, got {k}x{d}")
    G = A.T @ A
    scale = float(np.abs(G).max())
    if scale == 0.0:
        z = np.zeros(d)
        z[0] = 1.0
        return (0.0, z) if return_vector else 0.0
    shift = scale * d * np.finfo(float).eps
    L_inv = np.linalg.inv(np.linalg.cholesky(G + shift * np.eye(d)))

    rng = check_rng(seed)
    z = rng.standard_normal(d)
    z /= np.linalg.norm(z)
    sigma_prev = np.inf
    lo, hi = 0.0, np.inf
    for _ in range(max_iter):
        w = L_inv.T @ (L_inv @ z)
        z = w / np.linalg.norm(w)
        Az = A @ z
        sigma = float(np.linalg.norm(Az))
        lam = sigma * sigma
        resid = float(np.linalg.norm(A.T @ Az - lam * z))
        # some eigenvalue of G lies in [lam - resid, lam + resid]
        hi = sigma
        lo = float(np.sqrt(max(lam - resid, 0.0)))
        if (abs(sigma - sigma_prev) <= tol * max(sigma, np.sqrt(scale) * tol)
                and resid <= tol * scale):
            return (sigma, z) if return_vector else sigma
        sigma_prev = sigma
    raise ConvergenceError(
        f"inverse iteration did not converge in {max_iter} steps", bracket=(lo, hi))


def read_matrix_text(text: str) -> np.ndarray:
    """Parse the text matrix format: a ``rows cols`` header then one row per line."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SchemaError("empty matrix file", ["missing header line"])
    try:
        rows, cols = (int(t) for t in lines[0].split())
    except ValueError:
        raise SchemaError("bad matrix header", [f"header {lines[0]!r} is not 'rows cols'"])
    body = lines[1:]
    problems = []
    if len(body) != rows:
        problems.append(f"expected {rows} rows, found {len(body)}")
    data = []
    for i, ln in enumerate(body):
        try:
            vals = [float(t) for t in ln.split()]
        except ValueError:
            problems.append(f"row {i}: non-numeric entry")
            continue
        if len(vals) != cols:
            problems.append(f"row {i}: expected {cols} entries, found {len(vals)}")
        data.append(vals)
    if problems:
        raise SchemaError("malformed matrix file", problems)
    M = np.array(data, dtype=np.float64).reshape(rows, cols)
    if not np.all(np.isfinite(M)):
        raise SchemaError("malformed matrix file", ["non-finite entries"])
    return M


def write_matrix_text(A) -> str:
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    lines = [f"{A.shape[0]} {A.shape[1]}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in A]
    return "\n".join(lines) + "\n"
