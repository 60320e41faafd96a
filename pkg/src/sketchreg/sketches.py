"""Oblivious sketch families with matrix-free application.

Four families are supported (Gaussian, SRHT, Count-Sketch, leverage-score
row sampling) plus composition of any of them. Every operator draws all of
its randomness eagerly in the constructor, so applying one is deterministic
and the same ``(family, m, n, params, seed)`` always gives the same matrix.

Seeds are unsigned 64-bit integers. :class:`SeedStream` derives independent
per-trial seeds from one master seed through ``numpy.random.SeedSequence``
spawn keys.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import dense
from .errors import (
    DimensionMismatch,
    InvalidDimensions,
    InvalidMatrix,
    NonPowerOfTwoN,
    RankDeficient,
    SparsityExceedsRows,
    TooLarge,
)

MATERIALIZE_MAX_N = 2**14
SEED_MASK = (1 << 64) - 1

FAMILIES = ("gaussian", "srht", "countsketch", "leverage", "composed")


@dataclass(frozen=True)
class SeedStream:
    """Seed stream ``index`` of ``master``; independent across indices."""

    master: int
    index: int = 0

    def sequence(self, *sub: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.master & SEED_MASK, spawn_key=(self.index, *sub))

    def generator(self, *sub: int) -> np.random.Generator:
        return np.random.default_rng(self.sequence(*sub))

    def seed(self, *sub: int) -> int:
        """A 64-bit seed for sub-stream ``sub`` (for operator descriptors)."""
        return int(self.sequence(*sub).generate_state(1, dtype=np.uint64)[0])


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed) & SEED_MASK)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _check_dims(m: int, n: int) -> None:
    if not (isinstance(m, (int, np.integer)) and isinstance(n, (int, np.integer))):
        raise InvalidDimensions(f"m and n must be integers, got {m!r}, {n!r}")
    if not 1 <= m <= n:
        raise InvalidDimensions(f"need 1 <= m <= n, got m={m}, n={n}")


def _as_input(S: "SketchOperator", M) -> tuple[np.ndarray, bool]:
    arr = np.asarray(M, dtype=np.float64)
    vec = arr.ndim == 1
    if vec:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InvalidMatrix(f"sketch input must be 1-D or 2-D, got ndim={arr.ndim}")
    if arr.shape[0] != S.n:
        raise DimensionMismatch(f"sketch acts on {S.n} rows, input has {arr.shape[0]}")
    return arr, vec


@dataclass(frozen=True, eq=False)
class SketchOperator:
    """Base class: an ``m x n`` random linear map with a fixed realization."""

    m: int
    n: int
    seed: int

    family = "abstract"

    def apply(self, M) -> np.ndarray:
        arr, vec = _as_input(self, M)
        out = self._apply(arr)
        return out[:, 0] if vec else out

    def _apply(self, M: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def materialize(self, max_n: int = MATERIALIZE_MAX_N) -> np.ndarray:
        if self.n > max_n:
            raise TooLarge(f"refusing to materialize n={self.n} > {max_n}")
        return self._apply(np.eye(self.n))

    def descriptor(self) -> dict[str, Any]:
        return {"family": self.family, "m": self.m, "n": self.n, "seed": self.seed}

    def to_json(self) -> str:
        return json.dumps(self.descriptor(), sort_keys=True)


@dataclass(frozen=True, eq=False)
class GaussianSketch(SketchOperator):
    matrix: np.ndarray = field(repr=False, default=None)

    family = "gaussian"

    def _apply(self, M):
        return self.matrix @ M

    def materialize(self, max_n: int = MATERIALIZE_MAX_N) -> np.ndarray:
        if self.n > max_n:
            raise TooLarge(f"refusing to materialize n={self.n} > {max_n}")
        return self.matrix.copy()


@dataclass(frozen=True, eq=False)
class SRHTSketch(SketchOperator):
    """``sqrt(n/m) * P @ (H_n / sqrt(n)) @ D``; columns have unit norm.

    ``signs`` is the diagonal of ``D`` and ``rows`` the sampled coordinates
    (distinct, in draw order).
    """

    signs: np.ndarray = field(repr=False, default=None)
    rows: np.ndarray = field(repr=False, default=None)

    family = "srht"

    def _apply(self, M):
        mixed = dense.fwht(self.signs[:, None] * M)
        return mixed[self.rows] * (1.0 / math.sqrt(self.m))


@dataclass(frozen=True, eq=False)
class CountSketch(SketchOperator):
    """Column ``j`` holds ``signs[j, t] / sqrt(s)`` at row ``positions[j, t]``."""

    s: int = 1
    positions: np.ndarray = field(repr=False, default=None)
    signs: np.ndarray = field(repr=False, default=None)

    family = "countsketch"

    def _apply(self, M):
        out = np.zeros((self.m, M.shape[1]))
        scale = 1.0 / math.sqrt(self.s)
        for t in range(self.s):
            np.add.at(out, self.positions[:, t], (self.signs[:, t] * scale)[:, None] * M)
        return out

    def support(self, j: int) -> np.ndarray:
        return self.positions[j]

    def descriptor(self):
        return {**super().descriptor(), "s": self.s}


@dataclass(frozen=True, eq=False)
class LeverageSketch(SketchOperator):
    """Row sampling with replacement; sample ``t`` is row ``rows[t]`` scaled by ``weights[t]``."""

    scores: np.ndarray = field(repr=False, default=None)
    rows: np.ndarray = field(repr=False, default=None)
    weights: np.ndarray = field(repr=False, default=None)

    family = "leverage"

    def _apply(self, M):
        return M[self.rows] * self.weights[:, None]


@dataclass(frozen=True, eq=False)
class ComposedSketch(SketchOperator):
    """Product ``children[0] @ children[1] @ ... @ children[-1]``.

    The last child touches the input first.
    """

    children: tuple[SketchOperator, ...] = ()

    family = "composed"

    def _apply(self, M):
        out = M
        for child in reversed(self.children):
            out = child._apply(out)
        return out

    def materialize(self, max_n: int = MATERIALIZE_MAX_N) -> np.ndarray:
        if self.n > max_n:
            raise TooLarge(f"refusing to materialize n={self.n} > {max_n}")
        out = self.children[-1].materialize(max_n)
        for child in reversed(self.children[:-1]):
            out = child._apply(out)
        return out

    def descriptor(self):
        return {**super().descriptor(), "children": [c.descriptor() for c in self.children]}


# -- constructors -----------------------------------------------------------

def make_gaussian(m: int, n: int, seed: int) -> GaussianSketch:
    """Dense sketch with i.i.d. ``N(0, 1/m)`` entries."""
    _check_dims(m, n)
    mat = _rng(seed).standard_normal((m, n)) / math.sqrt(m)
    return GaussianSketch(m=int(m), n=int(n), seed=int(seed), matrix=_frozen(mat))


def partial_fisher_yates(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """First ``m`` entries of a uniformly random permutation of ``range(n)``."""
    perm = np.arange(n)
    picks = rng.integers(np.arange(m), n)  # picks[i] uniform on [i, n)
    for i, j in enumerate(picks):
        perm[i], perm[j] = perm[j], perm[i]
    return perm[:m].copy()


def make_srht(m: int, n: int, seed: int) -> SRHTSketch:
    if isinstance(n, (int, np.integer)) and not dense.is_power_of_two(int(n)):
        raise NonPowerOfTwoN(f"SRHT needs n a power of two, got {n}")
    _check_dims(m, n)
    rng = _rng(seed)
    signs = rng.choice(np.array([-1.0, 1.0]), size=n)
    rows = partial_fisher_yates(n, m, rng)
    return SRHTSketch(m=int(m), n=int(n), seed=int(seed), signs=_frozen(signs), rows=_frozen(rows))


def _distinct_positions(n_cols: int, m: int, s: int, rng: np.random.Generator) -> np.ndarray:
    """``s`` distinct rows out of ``m`` for each column (Floyd's algorithm, vectorized)."""
    out = np.empty((n_cols, s), dtype=np.int64)
    for t, j in enumerate(range(m - s, m)):
        cand = rng.integers(0, j + 1, size=n_cols)
        if t:
            taken = np.any(out[:, :t] == cand[:, None], axis=1)
            cand = np.where(taken, j, cand)
        out[:, t] = cand
    return out


def make_countsketch(m: int, n: int, s: int, seed: int) -> CountSketch:
    """Count-Sketch with ``s`` nonzeros ``+-1/sqrt(s)`` per column.

    Positions and signs are drawn independently of each other.
    """
    _check_dims(m, n)
    if not 1 <= s:
        raise InvalidDimensions(f"sparsity must be >= 1, got {s}")
    if s > m:
        raise SparsityExceedsRows(f"s={s} exceeds m={m}")
    rng = _rng(seed)
    pos = _distinct_positions(n, m, s, rng)
    signs = rng.choice(np.array([-1.0, 1.0]), size=(n, s))
    return CountSketch(
        m=int(m), n=int(n), seed=int(seed), s=int(s),
        positions=_frozen(pos), signs=_frozen(signs),
    )


def leverage_scores(a) -> np.ndarray:
    """Squared row norms of the left singular factor of ``a``."""
    f = dense.thin_svd(a)
    return np.einsum("ij,ij->i", f.U, f.U)


def make_leverage_sampler(a, m: int, seed: int, scores=None) -> LeverageSketch:
    """Sample ``m`` rows i.i.d. with probability ``l_i / d``, rescaled by ``1/sqrt(m p_i)``.

    ``scores`` may carry precomputed leverage scores of ``a`` (they are not
    re-verified) so repeated draws skip the SVD.

    Raises:
        RankDeficient: if ``a`` does not have full column rank.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise InvalidMatrix("reference matrix must be 2-D")
    n, d = a.shape
    if not isinstance(m, (int, np.integer)) or m < 1:
        raise InvalidDimensions(f"need m >= 1, got {m}")
    if scores is None:
        f = dense.thin_svd(a)
        if f.rank < d:
            raise RankDeficient(f"numerical rank {f.rank} < {d} columns")
        scores = np.einsum("ij,ij->i", f.U, f.U)
    else:
        scores = np.array(scores, dtype=np.float64)
        if scores.shape != (n,):
            raise DimensionMismatch(f"{scores.shape[0]} scores for {n} rows")
    p = scores / scores.sum()
    rows = _rng(seed).choice(n, size=m, replace=True, p=p)
    weights = 1.0 / np.sqrt(m * p[rows])
    return LeverageSketch(
        m=int(m), n=int(n), seed=int(seed),
        scores=_frozen(scores), rows=_frozen(rows), weights=_frozen(weights),
    )


def compose(outer: SketchOperator, inner: SketchOperator) -> ComposedSketch:
    """Operator applying ``inner`` first, then ``outer``; nested chains are flattened."""
    if outer.n != inner.m:
        raise DimensionMismatch(f"outer acts on {outer.n} rows but inner outputs {inner.m}")
    parts: list[SketchOperator] = []
    for op in (outer, inner):
        parts.extend(op.children if isinstance(op, ComposedSketch) else (op,))
    return ComposedSketch(m=outer.m, n=inner.n, seed=outer.seed, children=tuple(parts))


def compose_chain(ops: Sequence[SketchOperator]) -> SketchOperator:
    """Compose ``ops`` listed outermost first."""
    if not ops:
        raise InvalidDimensions("empty sketch chain")
    out = ops[-1]
    for op in reversed(ops[:-1]):
        out = compose(op, out)
    return out


def apply_sketch(S: SketchOperator, M) -> np.ndarray:
    return S.apply(M)


def materialize_sketch(S: SketchOperator, max_n: int = MATERIALIZE_MAX_N) -> np.ndarray:
    return S.materialize(max_n)


def from_descriptor(desc: dict, reference=None) -> SketchOperator:
    """Rebuild an operator from :meth:`SketchOperator.descriptor` output.

    Leverage sketches need the ``reference`` matrix their scores came from.
    """
    fam = desc["family"]
    m, n, seed = int(desc["m"]), int(desc["n"]), int(desc["seed"])
    if fam == "gaussian":
        return make_gaussian(m, n, seed)
    if fam == "srht":
        return make_srht(m, n, seed)
    if fam == "countsketch":
        return make_countsketch(m, n, int(desc["s"]), seed)
    if fam == "leverage":
        if reference is None:
            raise InvalidDimensions("leverage descriptor needs the reference matrix")
        return make_leverage_sampler(reference, m, seed)
    if fam == "composed":
        kids = desc["children"]
        return compose_chain(
            [from_descriptor(c, reference if i == len(kids) - 1 else None) for i, c in enumerate(kids)]
        )
    raise InvalidDimensions(f"unknown sketch family {fam!r}")
