"""Numerical checks of the structural properties a sketch is expected to have.

Each function returns a small frozen record; :func:`as_record` turns any of
them into a JSON-serialisable dict for the harness's JSON-lines log.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from . import dense
from .errors import DimensionMismatch, InvalidParams, NotOrthonormal, RankDeficient, TNormTooLarge
from .sketches import MATERIALIZE_MAX_N, SketchOperator

ORTHONORMAL_TOL = 1e-8
DEFAULT_AIPS_C = 4.0


@dataclasses.dataclass(frozen=True)
class DistortionReport:
    """Distortion ``||S x|| / ||x||`` over a subspace.

    The ``max_*`` fields come from probe directions; the ``exact_*`` fields
    from the extreme singular values of ``S @ basis``. ``certified_eps`` is
    the exact two-sided distortion (never negative).
    """

    max_overshoot: float
    max_undershoot: float
    probes: int
    exact_overshoot: float
    exact_undershoot: float
    certified_eps: float

    @property
    def probe_eps(self) -> float:
        return max(self.max_overshoot, self.max_undershoot, 0.0)


@dataclasses.dataclass(frozen=True)
class AIPSReport:
    max_offdiag: float
    bound: float
    passed: bool


@dataclasses.dataclass(frozen=True)
class NeumannReport:
    """Truncation errors of the power series for ``(S A)^+ S``.

    ``identity_residual`` is the relative spectral distance between the
    summed series and the directly computed ``(S A)^+ S``.
    """

    t_norm: float
    truncation_errors: tuple[float, ...]
    reference_norm: float
    identity_residual: float

    @property
    def relative_errors(self) -> tuple[float, ...]:
        return tuple(e / self.reference_norm for e in self.truncation_errors)

    def decay_ok(self, floor: float = 1e-12, slack: float = 1e-6) -> bool:
        """Every step above ``floor * reference_norm`` shrinks by at least ``t_norm + slack``."""
        errs = self.truncation_errors
        cut = floor * self.reference_norm
        return all(
            errs[k + 1] <= (self.t_norm + slack) * errs[k]
            for k in range(len(errs) - 1)
            if errs[k + 1] > cut
        )


@dataclasses.dataclass(frozen=True)
class NormIdentityReport:
    empirical_mean: float
    predicted: float
    rel_err: float


def as_record(name: str, report) -> dict:
    rec = {"diagnostic": name}
    for key, val in dataclasses.asdict(report).items():
        rec[key] = list(val) if isinstance(val, tuple) else val
    return rec


def embedding_distortion(S: SketchOperator, basis, probes: int, seed: int) -> DistortionReport:
    """Distortion of ``S`` on the column span of an orthonormal ``basis``.

    Probes are ``probes`` random unit vectors, the ``k`` basis directions and
    the ``k**2`` pairwise sums ``e_i + e_j``.
    """
    basis = np.asarray(basis, dtype=np.float64)
    if probes < 1:
        raise InvalidParams(f"probes must be >= 1, got {probes}")
    k = basis.shape[1]
    if np.max(np.abs(basis.T @ basis - np.eye(k))) > ORTHONORMAL_TOL:
        raise NotOrthonormal("basis columns are not orthonormal to 1e-8")
    SB = S.apply(basis)

    rng = np.random.default_rng(seed)
    y = rng.standard_normal((k, probes))
    eye = np.eye(k)
    pairs = (eye[:, :, None] + eye[:, None, :]).reshape(k, k * k)
    Y = np.hstack([y, eye, pairs])
    Y /= np.linalg.norm(Y, axis=0)
    ratios = np.linalg.norm(SB @ Y, axis=0)

    sv = np.linalg.svd(SB, compute_uv=False)
    smin = sv[-1] if SB.shape[0] >= k else 0.0
    exact_over = float(sv[0] - 1.0)
    exact_under = float(1.0 - smin)
    return DistortionReport(
        max_overshoot=float(ratios.max() - 1.0),
        max_undershoot=float(1.0 - ratios.min()),
        probes=int(Y.shape[1]),
        exact_overshoot=exact_over,
        exact_undershoot=exact_under,
        certified_eps=max(exact_over, exact_under, 0.0),
    )


def amp_error(S: SketchOperator, A, B) -> float:
    """Relative approximate-matrix-product error ``||A^T S^T S B - A^T B||_F / (||A||_F ||B||_F)``."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape[0] != B.shape[0] or A.shape[0] != S.n:
        raise DimensionMismatch(f"A has {A.shape[0]} rows, B {B.shape[0]}, sketch expects {S.n}")
    denom = np.linalg.norm(A) * np.linalg.norm(B)
    if denom == 0:
        return 0.0
    SA = S.apply(A)
    SB = S.apply(B)
    return float(np.linalg.norm(SA.T @ SB - A.T @ B) / denom)


def aips_check(S: SketchOperator, c: float = DEFAULT_AIPS_C,
               max_n: int = MATERIALIZE_MAX_N) -> AIPSReport:
    """Largest off-diagonal column inner product vs ``c sqrt(log n) / sqrt(m)``."""
    mat = S.materialize(max_n)
    gram = mat.T @ mat
    np.fill_diagonal(gram, 0.0)
    worst = float(np.max(np.abs(gram))) if S.n > 1 else 0.0
    bound = c * math.sqrt(math.log(S.n)) / math.sqrt(S.m)
    return AIPSReport(max_offdiag=worst, bound=bound, passed=worst <= bound)


def neumann_validate(S: SketchOperator, A, k_max: int) -> NeumannReport:
    """Truncation error of the power series for ``(S A)^+ S``.

    With ``A = U diag(s) V^T`` and ``T = I - U^T S^T S U``, reports the
    spectral norm of ``(S A)^+ S - V diag(1/s) (sum_{j<=k} T^j) U^T S^T S``
    for ``k = 0..k_max``, plus how well the full series matches the directly
    computed ``(S A)^+ S``.

    Raises:
        RankDeficient: ``A`` or ``S A`` lacks full column rank.
        TNormTooLarge: ``||T||_2 > 1/2``.
    """
    A = np.asarray(A, dtype=np.float64)
    d = A.shape[1]
    f = dense.thin_svd(A)
    if f.rank < d:
        raise RankDeficient(f"A has numerical rank {f.rank} < {d}")
    Smat = S.materialize()
    SA = Smat @ A
    g = dense.thin_svd(SA)
    if g.rank < d:
        raise RankDeficient(f"S A has numerical rank {g.rank} < {d}")
    SU = Smat @ f.U
    T = np.eye(d) - SU.T @ SU
    t_norm = dense.operator_norm(T) if np.any(T) else 0.0
    if t_norm > 0.5:
        raise TNormTooLarge(f"||T||_2 = {t_norm:.4f} > 1/2")

    # the tail after k terms is V diag(1/s) T^(k+1) (I - T)^-1 U^T S^T S; computing it
    # directly avoids the cancellation of subtracting two nearly equal operators
    oracle = (g.V / g.s) @ g.U.T @ Smat
    ref = dense.operator_norm(oracle)
    limit = np.linalg.solve(np.eye(d) - T, SU.T @ Smat)
    series = (f.V / f.s) @ limit
    identity_residual = dense.operator_norm(oracle - series) / ref
    tail = T @ limit
    errs = []
    for _ in range(k_max + 1):
        errs.append(dense.operator_norm(tail / f.s[:, None]) if np.any(tail) else 0.0)
        tail = T @ tail
    return NeumannReport(
        t_norm=float(t_norm), truncation_errors=tuple(float(e) for e in errs),
        reference_norm=ref, identity_residual=float(identity_residual),
    )


def gaussian_norm_identity(A, sigma: float, trials: int, seed: int) -> NormIdentityReport:
    """Monte-Carlo check of ``E ||A g||^2 = sigma^2 ||A||_F^2`` for ``g ~ N(0, sigma^2 I)``."""
    A = np.asarray(A, dtype=np.float64)
    if trials < 1:
        raise InvalidParams(f"trials must be >= 1, got {trials}")
    rng = np.random.default_rng(seed)
    predicted = float(sigma**2 * np.linalg.norm(A) ** 2)
    total = 0.0
    block = 8192
    done = 0
    while done < trials:
        cnt = min(block, trials - done)
        G = sigma * rng.standard_normal((A.shape[1], cnt))
        AG = A @ G
        total += float(np.sum(AG * AG))
        done += cnt
    mean = total / trials
    rel = abs(mean - predicted) / predicted if predicted > 0 else abs(mean)
    return NormIdentityReport(empirical_mean=mean, predicted=predicted, rel_err=rel)
