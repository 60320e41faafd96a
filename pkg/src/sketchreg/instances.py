"""Regression instance generators.

Covers the two adversarial constructions (Count-Sketch and leverage-score
sampling), the two lower-bound distributions, and a benign Gaussian baseline.
Every generator is a pure function of its parameters and seed.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import dense
from .errors import InvalidParams
from .regress import RegressionInstance
from .sketches import CountSketch


@dataclass(frozen=True)
class CsAdversarialParams:
    d: int
    alpha: int
    n: int | None = None

    def __post_init__(self):
        if self.n is None:
            object.__setattr__(self, "n", self.d + self.alpha)
        if not 1 <= self.alpha < self.d:
            raise InvalidParams(f"need 1 <= alpha < d, got alpha={self.alpha}, d={self.d}")
        if self.n < self.d + self.alpha:
            raise InvalidParams(f"need n >= d + alpha = {self.d + self.alpha}, got n={self.n}")


@dataclass(frozen=True)
class LevAdversarialParams:
    """``L = alpha (d - 1)`` scaled identity blocks below ``I_d / sqrt(d)``."""

    d: int
    alpha: int
    beta: int

    def __post_init__(self):
        if self.d < 2 or self.alpha < 1:
            raise InvalidParams(f"need d >= 2 and alpha >= 1, got d={self.d}, alpha={self.alpha}")
        if not 1 <= self.beta < self.d:
            raise InvalidParams(f"need 1 <= beta < d, got beta={self.beta}, d={self.d}")

    @property
    def L(self) -> int:
        return self.alpha * (self.d - 1)

    @property
    def n(self) -> int:
        return self.d * (self.L + 1)

    @property
    def operative_regime(self) -> bool:
        return self.alpha * self.beta >= self.d


@dataclass(frozen=True)
class EventReport:
    witness_column: int | None
    event1: bool
    event2: bool
    intersect_row: int | None = None
    intersect_sign: int | None = None
    partner_column: int | None = None


def gen_cs_adversarial(p: CsAdversarialParams) -> RegressionInstance:
    """``A = [I_d; 0]``, ``b`` = ``1/sqrt(d)`` on the top ``d`` rows and ``1/sqrt(alpha)`` on the next ``alpha``."""
    d, alpha, n = p.d, p.alpha, p.n
    A = np.zeros((n, d))
    A[:d] = np.eye(d)
    b = np.zeros(n)
    b[:d] = 1 / math.sqrt(d)
    b[d:d + alpha] = 1 / math.sqrt(alpha)
    return RegressionInstance(
        A=A, b=b, x_star=np.full(d, 1 / math.sqrt(d)), residual_norm=1.0, pinv_norm=1.0,
        label=f"cs-adversarial(d={d},alpha={alpha},n={n})",
    )


def detect_events(S: CountSketch, p: CsAdversarialParams) -> EventReport:
    """Find the first column ``j < d`` whose support is isolated from the other identity columns
    and meets exactly one of the ``alpha`` target columns, in exactly one row.

    ``event1``/``event2`` describe the witness when one exists; otherwise they
    report whether any column satisfied each event on its own.
    """
    d, alpha = p.d, p.alpha
    if S.n < d + alpha:
        raise InvalidParams(f"sketch has {S.n} columns, need at least {d + alpha}")
    pos = S.positions
    head_hits = np.bincount(pos[:d].ravel(), minlength=S.m)
    tail_owner: dict[int, list[int]] = {}
    for k in range(d, d + alpha):
        for r in pos[k]:
            tail_owner.setdefault(int(r), []).append(k)

    any1 = any2 = False
    for j in range(d):
        rows = pos[j]
        ev1 = bool(np.all(head_hits[rows] == 1))
        touched: dict[int, list[int]] = {}
        for r in rows:
            for k in tail_owner.get(int(r), ()):
                touched.setdefault(k, []).append(int(r))
        ev2 = len(touched) == 1 and len(next(iter(touched.values()))) == 1
        any1 |= ev1
        any2 |= ev2
        if ev1 and ev2:
            k, (r,) = next(iter(touched.items()))
            tj = int(np.flatnonzero(pos[j] == r)[0])
            tk = int(np.flatnonzero(pos[k] == r)[0])
            sign = int(S.signs[j, tj] * S.signs[k, tk])
            return EventReport(j, True, True, intersect_row=r, intersect_sign=sign, partner_column=k)
    return EventReport(None, any1, any2)


def gen_lev_adversarial(p: LevAdversarialParams) -> RegressionInstance:
    d, alpha, beta, L = p.d, p.alpha, p.beta, p.L
    top = np.eye(d) / math.sqrt(d)
    block = np.eye(d) / math.sqrt(alpha * d)
    A = np.vstack([top] + [block] * L)
    b = np.zeros(p.n)
    b[:d] = 1 / math.sqrt(d)
    b[d:d + beta] = 1 / math.sqrt(beta)
    inst = RegressionInstance(A=A, b=b, label=f"lev-adversarial(d={d},alpha={alpha},beta={beta})")
    return inst.completed()


def lev_adversarial_optimum(p: LevAdversarialParams) -> np.ndarray:
    """Closed-form optimum: ``1/d`` except ``1/d + 1/sqrt(alpha beta d)`` on the first ``beta`` coordinates."""
    x = np.full(p.d, 1 / p.d)
    x[:p.beta] += 1 / math.sqrt(p.alpha * p.beta * p.d)
    return x


def haar_columns(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """``k`` Haar-distributed orthonormal columns in ``R^n`` (QR with positive ``diag(R)``)."""
    q, r = np.linalg.qr(rng.standard_normal((n, k)))
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    return q * signs


def gen_lower_bound_d1(n: int, d: int, seed: int) -> RegressionInstance:
    """Random orthonormal ``A`` with a unit target orthogonal to its range; ``x* = 0``."""
    if d < 1 or n < d + 1:
        raise InvalidParams(f"need n >= d + 1 and d >= 1, got n={n}, d={d}")
    q = haar_columns(n, d + 1, np.random.default_rng(seed))
    return RegressionInstance(
        A=q[:, :d], b=q[:, d], x_star=np.zeros(d), residual_norm=1.0, pinv_norm=1.0,
        label=f"lower-bound-d1(n={n},d={d})",
    )


def gen_lower_bound_d2(n: int, d: int, seed: int) -> RegressionInstance:
    """``A = [I_d; 0]`` with a uniformly random unit target."""
    if d < 1 or n < d:
        raise InvalidParams(f"need n >= d >= 1, got n={n}, d={d}")
    g = np.random.default_rng(seed).standard_normal(n)
    b = g / np.linalg.norm(g)
    A = np.zeros((n, d))
    A[:d] = np.eye(d)
    return RegressionInstance(
        A=A, b=b, x_star=b[:d].copy(), residual_norm=float(np.linalg.norm(b[d:])), pinv_norm=1.0,
        label=f"lower-bound-d2(n={n},d={d})",
    )


def gen_random_wellcond(n: int, d: int, noise: float, seed: int) -> RegressionInstance:
    """Gaussian design, Gaussian planted ``x0``, ``b = A x0 + noise * g``."""
    if not n >= d >= 1:
        raise InvalidParams(f"need n >= d >= 1, got n={n}, d={d}")
    if not noise >= 0:
        raise InvalidParams(f"noise must be nonnegative, got {noise}")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d))
    x0 = rng.standard_normal(d)
    b = A @ x0 + noise * rng.standard_normal(n)
    inst = RegressionInstance(A=A, b=b, label=f"random-wellcond(n={n},d={d},noise={noise})")
    return inst.completed()


def save_instance(inst: RegressionInstance, prefix: str | os.PathLike, params: dict | None = None,
                  seed: int | None = None) -> list[Path]:
    """Write ``<prefix>.A.txt``, ``<prefix>.b.txt`` and a ``<prefix>.json`` sidecar."""
    inst = inst.completed()
    prefix = Path(prefix)
    paths = [prefix.with_name(prefix.name + ".A.txt"), prefix.with_name(prefix.name + ".b.txt"),
             prefix.with_name(prefix.name + ".json")]
    dense.write_matrix(inst.A, paths[0])
    dense.write_matrix(inst.b, paths[1])
    sidecar = {
        "label": inst.label, "n": inst.n, "d": inst.d, "params": params or {}, "seed": seed,
        "residual_norm": inst.residual_norm, "pinv_norm": inst.pinv_norm,
    }
    paths[2].write_text(json.dumps(sidecar, sort_keys=True) + "\n")
    return paths


def load_instance(prefix: str | os.PathLike) -> RegressionInstance:
    prefix = Path(prefix)
    A = dense.read_matrix(prefix.with_name(prefix.name + ".A.txt"))
    b = dense.read_matrix(prefix.with_name(prefix.name + ".b.txt"))[:, 0]
    meta = json.loads(prefix.with_name(prefix.name + ".json").read_text())
    return RegressionInstance(
        A=A, b=b, residual_norm=meta.get("residual_norm"), pinv_norm=meta.get("pinv_norm"),
        label=meta.get("label", ""),
    )


def params_dict(p) -> dict:
    return asdict(p)
