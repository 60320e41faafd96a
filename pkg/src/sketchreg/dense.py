"""Deterministic dense linear algebra.

Matrices and vectors are plain ``numpy.ndarray`` objects of dtype float64.
:func:`as_matrix` and :func:`as_vector` validate and freeze them; everything
else here is a pure function. Least squares goes through the thin SVD, never
the normal equations.
"""

from __future__ import annotations

import functools
import io
import os
from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .errors import (
    ConvergenceFailure,
    InvalidMatrix,
    NonPowerOfTwoLength,
)

RANK_RTOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _owned(a, copy: bool) -> np.ndarray:
    # read-only float64 arrays were already validated and frozen here; share them
    if isinstance(a, np.ndarray) and a.dtype == np.float64 and not a.flags.writeable:
        return a
    return np.array(a, dtype=np.float64, copy=copy)


def as_matrix(a, copy: bool = True) -> np.ndarray:
    """Validate ``a`` as a finite 2-D float64 array and return a read-only copy."""
    arr = _owned(a, copy)
    if arr.ndim != 2:
        raise InvalidMatrix(f"expected a 2-D array, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise InvalidMatrix("matrix has non-finite entries")
    return _frozen(arr)


def as_vector(x, copy: bool = True) -> np.ndarray:
    arr = _owned(x, copy)
    if arr.ndim != 1:
        raise InvalidMatrix(f"expected a 1-D array, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise InvalidMatrix("vector has non-finite entries")
    return _frozen(arr)


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def next_power_of_two(n: int) -> int:
    return 1 << max(0, int(n) - 1).bit_length()


def fwht(x) -> np.ndarray:
    """Unnormalized fast Walsh-Hadamard transform along axis 0.

    Computes ``H_n @ x`` with the Sylvester ordering
    ``H_n = [[H, H], [H, -H]]`` and ``H_1 = [1]``; trailing axes are treated
    as independent columns. Applying it twice multiplies by ``n``.

    The butterfly runs at radix up to 64 (``H_n`` is a Kronecker power of
    small Hadamard blocks), so each stage is one batched matmul.

    Raises:
        NonPowerOfTwoLength: if ``x.shape[0]`` is not a power of two.
    """
    src = np.array(x, dtype=np.float64, copy=True)
    if src.ndim == 0:
        raise NonPowerOfTwoLength("fwht needs at least one axis")
    n = src.shape[0]
    if not is_power_of_two(n):
        raise NonPowerOfTwoLength(f"length {n} is not a power of two")
    width = int(np.prod(src.shape[1:], dtype=np.int64))
    y = src.reshape(n, width)
    stride = 1
    while stride < n:
        radix = min(FWHT_RADIX, n // stride)
        y = np.matmul(_hadamard_block(radix), y.reshape(n // (radix * stride), radix, stride * width))
        stride *= radix
    return y.reshape(src.shape)


FWHT_RADIX = 64


@functools.lru_cache(maxsize=None)
def _hadamard_block(n: int) -> np.ndarray:
    return _frozen(hadamard(n))


def hadamard(n: int) -> np.ndarray:
    """Explicit Sylvester-Hadamard matrix with +-1 entries (test oracle)."""
    if not is_power_of_two(n):
        raise NonPowerOfTwoLength(f"length {n} is not a power of two")
    h = np.ones((1, 1))
    while h.shape[0] < n:
        h = np.block([[h, h], [h, -h]])
    return h


@dataclass(frozen=True)
class ThinFactorization:
    """Rank-truncated SVD ``A ~= U @ diag(s) @ V.T``.

    ``U`` is rows x rank, ``s`` is nonincreasing and positive, ``V`` is
    cols x rank.
    """

    U: np.ndarray
    s: np.ndarray
    V: np.ndarray
    rank: int
    shape: tuple[int, int]

    @property
    def sigma_max(self) -> float:
        return float(self.s[0]) if self.rank else 0.0

    @property
    def sigma_min(self) -> float:
        """Smallest retained singular value (0 when rank < cols)."""
        if self.rank < self.shape[1] or self.rank == 0:
            return 0.0
        return float(self.s[-1])


def rank_threshold(shape: tuple[int, int], sigma_max: float) -> float:
    return max(shape) * sigma_max * RANK_RTOL


def thin_svd(a) -> ThinFactorization:
    """Thin SVD truncated at the numerical rank.

    Singular values at or below ``max(rows, cols) * sigma_max * 1e-12`` are
    dropped.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise InvalidMatrix(f"thin_svd needs a non-empty 2-D array, got shape {a.shape}")
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    smax = float(s[0]) if s.size else 0.0
    rank = int(np.count_nonzero(s > rank_threshold(a.shape, smax))) if smax > 0 else 0
    return ThinFactorization(
        U=_frozen(np.ascontiguousarray(u[:, :rank])),
        s=_frozen(s[:rank].copy()),
        V=_frozen(np.ascontiguousarray(vt[:rank].T)),
        rank=rank,
        shape=(a.shape[0], a.shape[1]),
    )


def numerical_rank(a) -> int:
    return thin_svd(a).rank


def pinv(a) -> np.ndarray:
    """Moore-Penrose pseudoinverse ``V diag(1/s) U^T`` over the numerical rank."""
    f = thin_svd(a)
    return (f.V / f.s) @ f.U.T


def exact_lsq(a, b) -> np.ndarray:
    """Minimum-norm least-squares solution ``A^+ b`` via the thin SVD."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.shape[:1] != a.shape[:1]:
        raise InvalidMatrix(f"shape mismatch: A {a.shape}, b {b.shape}")
    f = thin_svd(a)
    return f.V @ ((f.U.T @ b).T / f.s).T


def operator_norm(a) -> float:
    """Spectral norm ``||A||_2``."""
    return thin_svd(a).sigma_max


def pinv_norm(a) -> float:
    """``||A^+||_2 = 1 / sigma_min`` over the numerical rank (0 for the zero matrix)."""
    f = thin_svd(a)
    return 1.0 / float(f.s[-1]) if f.rank else 0.0


# -- plain-text interchange ------------------------------------------------

def write_matrix(a, dest: str | os.PathLike | TextIO) -> None:
    """Write ``a`` as ``rows cols`` followed by space-separated rows.

    Values use 17 significant digits so the round trip is exact. 1-D input
    is written as a column.
    """
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InvalidMatrix("only vectors and matrices can be written")
    buf = io.StringIO()
    buf.write(f"{arr.shape[0]} {arr.shape[1]}\n")
    for row in arr:
        buf.write(" ".join(format(float(v), ".17g") for v in row))
        buf.write("\n")
    if hasattr(dest, "write"):
        dest.write(buf.getvalue())
    else:
        with open(dest, "w", encoding="ascii") as fh:
            fh.write(buf.getvalue())


def read_matrix(src: str | os.PathLike | TextIO) -> np.ndarray:
    if hasattr(src, "read"):
        text = src.read()
    else:
        with open(src, encoding="ascii") as fh:
            text = fh.read()
    lines = text.splitlines()
    if not lines:
        raise InvalidMatrix("empty matrix file")
    try:
        rows, cols = (int(t) for t in lines[0].split())
    except ValueError as exc:
        raise InvalidMatrix(f"bad header line {lines[0]!r}") from exc
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != rows:
        raise InvalidMatrix(f"header says {rows} rows, found {len(body)}")
    out = np.empty((rows, cols))
    for i, ln in enumerate(body):
        vals = ln.split(" ")
        if len(vals) != cols:
            raise InvalidMatrix(f"row {i} has {len(vals)} entries, expected {cols}")
        out[i] = [float(v) for v in vals]
    return as_matrix(out, copy=False)
