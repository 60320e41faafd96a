"""Sketch-and-solve least squares and the error metrics around it."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from . import dense
from .errors import DimensionMismatch, InvalidParams, InvariantViolation, ZeroDirection
from .sketches import SketchOperator

ZERO_RESIDUAL_RTOL = 1e-12
REPORT_FIELDS = ("trial", "l2_err", "linf_err", "cost_ratio", "normalized_l2", "normalized_linf", "rank_ok")


@dataclass(frozen=True, eq=False)
class RegressionInstance:
    """A least-squares problem ``min ||A x - b||_2`` with optional known answers.

    ``residual_norm`` is ``||A x* - b||_2`` and ``pinv_norm`` is ``||A^+||_2``.
    Use :meth:`completed` to fill whichever of those are missing.
    """

    A: np.ndarray
    b: np.ndarray
    x_star: np.ndarray | None = None
    residual_norm: float | None = None
    pinv_norm: float | None = None
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "A", dense.as_matrix(self.A))
        object.__setattr__(self, "b", dense.as_vector(self.b))
        n, d = self.A.shape
        if not n >= d >= 1:
            raise InvalidParams(f"need n >= d >= 1, got n={n}, d={d}")
        if self.b.shape != (n,):
            raise DimensionMismatch(f"b has length {self.b.shape[0]}, A has {n} rows")
        if self.x_star is not None:
            object.__setattr__(self, "x_star", dense.as_vector(self.x_star))
            if self.x_star.shape != (d,):
                raise DimensionMismatch(f"x_star has length {self.x_star.shape[0]}, expected {d}")
            tol = 1e-8 * np.linalg.norm(self.A) * np.linalg.norm(self.b)
            if self.normal_residual() > tol:
                raise InvalidParams("x_star does not satisfy the normal equations")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    def completed(self) -> "RegressionInstance":
        if all(v is not None for v in (self.x_star, self.residual_norm, self.pinv_norm)):
            return self
        x = self.x_star if self.x_star is not None else dense.exact_lsq(self.A, self.b)
        res = self.residual_norm
        if res is None:
            res = float(np.linalg.norm(self.A @ x - self.b))
        pn = self.pinv_norm if self.pinv_norm is not None else dense.pinv_norm(self.A)
        return replace(self, x_star=x, residual_norm=res, pinv_norm=pn)

    def normal_residual(self) -> float:
        """``||A^T (A x* - b)||_2`` (requires ``x_star``)."""
        return float(np.linalg.norm(self.A.T @ (self.A @ self.x_star - self.b)))

    def padded(self, n_total: int) -> "RegressionInstance":
        """Append zero rows to ``A`` and ``b``; the solution is unchanged."""
        extra = n_total - self.n
        if extra < 0:
            raise InvalidParams(f"cannot pad {self.n} rows down to {n_total}")
        if extra == 0:
            return self
        return replace(
            self,
            A=np.vstack([self.A, np.zeros((extra, self.d))]),
            b=np.concatenate([self.b, np.zeros(extra)]),
            label=f"{self.label}+pad{extra}" if self.label else f"pad{extra}",
        )


@dataclass(frozen=True)
class SolveReport:
    x_prime: np.ndarray
    x_star: np.ndarray
    l2_err: float
    linf_err: float
    cost_ratio: float
    normalized_l2: float
    normalized_linf: float
    sketched_rank_ok: bool
    degenerate: bool = False

    @property
    def d(self) -> int:
        return self.x_prime.shape[0]

    def row(self, trial: int) -> dict:
        return {
            "trial": trial,
            "l2_err": self.l2_err,
            "linf_err": self.linf_err,
            "cost_ratio": self.cost_ratio,
            "normalized_l2": self.normalized_l2,
            "normalized_linf": self.normalized_linf,
            "rank_ok": self.sketched_rank_ok,
        }

    def validate(self, rtol: float = 1e-12) -> None:
        """Raise :class:`InvariantViolation` if the norm chain or cost bound breaks.

        ``rtol`` only absorbs the rounding of the norm computations themselves.
        """
        slack = rtol * max(self.l2_err, 1e-300)
        if self.linf_err > self.l2_err + slack:
            raise InvariantViolation(f"linf_err {self.linf_err} > l2_err {self.l2_err}")
        if self.l2_err > math.sqrt(self.d) * self.linf_err + slack:
            raise InvariantViolation(f"l2_err {self.l2_err} > sqrt(d) * linf_err")
        if not self.cost_ratio >= 1 - 1e-9:
            raise InvariantViolation(f"cost_ratio {self.cost_ratio} < 1")


def _safe_ratio(num: float, den: float, num_floor: float = 0.0) -> tuple[float, bool]:
    """``num / den`` with ``0/0 = 0``; a positive numerator over 0 is degenerate (inf).

    When ``den`` is 0, numerators up to ``num_floor`` count as 0.
    """
    if den > 0:
        return num / den, False
    if num <= num_floor:
        return 0.0, False
    return math.inf, True


def solve_report(inst: RegressionInstance, x_prime, rank_ok: bool = True) -> SolveReport:
    """Error metrics of a candidate solution against the instance's optimum."""
    inst = inst.completed()
    x_prime = np.asarray(x_prime, dtype=np.float64)
    diff = x_prime - inst.x_star
    l2 = float(np.linalg.norm(diff))
    linf = float(np.max(np.abs(diff)))
    # residuals at rounding level count as exact zeros (consistent systems)
    floor = ZERO_RESIDUAL_RTOL * float(np.linalg.norm(inst.b))
    res_prime = float(np.linalg.norm(inst.A @ x_prime - inst.b))
    res_star = float(inst.residual_norm)
    res_prime = 0.0 if res_prime <= floor else res_prime
    res_star = 0.0 if res_star <= floor else res_star
    if res_star > 0:
        cost = res_prime / res_star
    else:
        cost = 1.0 if res_prime == 0 else math.inf
    scale = res_star * float(inst.pinv_norm)
    err_floor = ZERO_RESIDUAL_RTOL * float(np.linalg.norm(inst.x_star))
    nl2, deg2 = _safe_ratio(l2, scale, err_floor)
    nlinf, deginf = _safe_ratio(linf * math.sqrt(inst.d), scale, err_floor * math.sqrt(inst.d))
    return SolveReport(
        x_prime=x_prime,
        x_star=inst.x_star,
        l2_err=l2,
        linf_err=linf,
        cost_ratio=cost,
        normalized_l2=nl2,
        normalized_linf=nlinf,
        sketched_rank_ok=bool(rank_ok),
        degenerate=deg2 or deginf,
    )


def sketch_and_solve(inst: RegressionInstance, S: SketchOperator) -> SolveReport:
    """Solve ``min ||S A x - S b||_2`` and compare against the exact optimum.

    A rank-deficient ``S A`` still yields the minimum-norm solution, with
    ``sketched_rank_ok=False`` in the report.
    """
    if S.n != inst.n:
        raise DimensionMismatch(f"sketch acts on {S.n} rows, instance has {inst.n}")
    sketched = S.apply(np.column_stack([inst.A, inst.b]))
    SA, Sb = sketched[:, :-1], sketched[:, -1]
    f = dense.thin_svd(SA)
    x_prime = f.V @ ((f.U.T @ Sb) / f.s)
    return solve_report(inst, x_prime, rank_ok=f.rank == inst.d)


class GuaranteeCheck(NamedTuple):
    l2_pass: bool
    linf_pass: bool


def guarantee_check(report: SolveReport, eps: float, C: float = 10.0) -> GuaranteeCheck:
    """Compare normalized errors with ``C * eps``.

    ``C`` absorbs the unstated constants of the asymptotic bounds.
    """
    if not (eps > 0 and C > 0):
        raise InvalidParams(f"eps and C must be positive, got eps={eps}, C={C}")
    bound = C * eps
    return GuaranteeCheck(report.normalized_l2 <= bound, report.normalized_linf <= bound)


def directional_error(x_prime, x_star, a) -> float:
    """``|<a, x' - x*>| / ||a||_2``."""
    a = np.asarray(a, dtype=np.float64)
    na = float(np.linalg.norm(a))
    if na == 0:
        raise ZeroDirection("direction vector is zero")
    return abs(float(a @ (np.asarray(x_prime) - np.asarray(x_star)))) / na
