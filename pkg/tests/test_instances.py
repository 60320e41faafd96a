import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sketchreg import dense, instances
from sketchreg import sketches as sk
from sketchreg.errors import InvalidParams
from sketchreg.regress import sketch_and_solve


def _check_optimum(inst):
    inst = inst.completed()
    tol = 1e-8 * np.linalg.norm(inst.A) * np.linalg.norm(inst.b)
    assert inst.normal_residual() <= tol


# -- count-sketch construction ---------------------------------------------

@given(d=st.integers(2, 64), a=st.integers(1, 63), pad=st.integers(0, 20))
def test_cs_adversarial_norms(d, a, pad):
    alpha = min(a, d - 1)
    p = instances.CsAdversarialParams(d, alpha, d + alpha + pad)
    inst = instances.gen_cs_adversarial(p)
    assert abs(np.linalg.norm(inst.b) - math.sqrt(2)) <= 1e-12
    assert abs(np.linalg.norm(inst.A @ inst.x_star - inst.b) - 1) <= 1e-12
    assert inst.residual_norm == 1.0 and inst.pinv_norm == 1.0
    assert np.all(inst.b[d + alpha:] == 0)
    _check_optimum(inst)


def test_cs_adversarial_small_case():
    inst = instances.gen_cs_adversarial(instances.CsAdversarialParams(4, 3, 16))
    assert np.allclose(inst.x_star, 0.5)
    p = instances.CsAdversarialParams(5, 4, 16)
    b = instances.gen_cs_adversarial(p).b
    assert np.allclose(b[:5], 1 / math.sqrt(5)) and np.allclose(b[5:9], 0.5)


def test_cs_adversarial_d4_alpha_target():
    # alpha must stay below d, so take alpha = 3 with d = 4 and check the top block directly
    b = instances.gen_cs_adversarial(instances.CsAdversarialParams(4, 3)).b
    assert np.allclose(b[:4], 0.5)


@pytest.mark.parametrize("d,alpha,n", [(4, 0, None), (4, 4, None), (4, 2, 5)])
def test_cs_params_validation(d, alpha, n):
    with pytest.raises(InvalidParams):
        instances.CsAdversarialParams(d, alpha, n)


# -- event detection --------------------------------------------------------

def _fixture(positions, m):
    pos = np.array(positions, dtype=np.int64)
    if pos.ndim == 1:
        pos = pos[:, None]
    return sk.CountSketch(m=m, n=pos.shape[0], seed=0, s=pos.shape[1], positions=pos,
                          signs=np.ones(pos.shape, dtype=float))


def test_detect_events_hand_built_witness():
    # d = 3 identity columns, alpha = 2 targets, one padding column; 4 rows.
    # columns 0 and 2 collide, column 1 meets only target column 4.
    S = _fixture([0, 1, 0, 3, 1, 2], m=4)
    ev = instances.detect_events(S, instances.CsAdversarialParams(3, 2, 6))
    assert ev.witness_column == 1 and ev.partner_column == 4
    assert ev.intersect_row == 1 and ev.intersect_sign == 1
    assert ev.event1 and ev.event2


def test_detect_events_shared_row_breaks_event1():
    # columns 0 and 1 share row 0; column 2 is isolated from the head but touches no target
    S = _fixture([0, 0, 1, 2, 3, 3], m=4)
    ev = instances.detect_events(S, instances.CsAdversarialParams(3, 2, 6))
    assert ev.witness_column is None
    assert ev.event1 and not ev.event2
    S = _fixture([0, 0, 0, 0, 2, 3], m=4)
    ev = instances.detect_events(S, instances.CsAdversarialParams(3, 2, 6))
    assert ev.witness_column is None and not ev.event1 and ev.event2


def test_detect_events_sign_product():
    S = sk.CountSketch(m=4, n=5, seed=0, s=1, positions=np.array([[0], [1], [2], [0], [3]]),
                       signs=np.array([[1.0], [1.0], [1.0], [-1.0], [1.0]]))
    ev = instances.detect_events(S, instances.CsAdversarialParams(3, 2, 5))
    assert ev.witness_column == 0 and ev.intersect_sign == -1


def _brute_force_events(S, p):
    M = S.materialize()
    supp = [set(np.flatnonzero(M[:, j]).tolist()) for j in range(S.n)]
    any1 = any2 = False
    for j in range(p.d):
        ev1 = all(not (supp[j] & supp[k]) for k in range(p.d) if k != j)
        inter = [len(supp[j] & supp[k]) for k in range(p.d, p.d + p.alpha)]
        ev2 = sum(1 for c in inter if c) == 1 and max(inter) == 1
        any1 |= ev1
        any2 |= ev2
        if ev1 and ev2:
            return j, True, True
    return None, any1, any2


@given(d=st.integers(2, 24), a=st.integers(1, 23), s=st.integers(1, 4), m=st.integers(4, 256),
       seed=st.integers(0, 2**32))
def test_detect_events_matches_brute_force(d, a, s, m, seed):
    alpha = min(a, d - 1)
    n = max(d + alpha, m)
    s = min(s, m)
    p = instances.CsAdversarialParams(d, alpha, n)
    S = sk.make_countsketch(m, n, s, seed)
    ev = instances.detect_events(S, p)
    assert (ev.witness_column, ev.event1, ev.event2) == _brute_force_events(S, p)
    assert (ev.witness_column is not None) == (ev.event1 and ev.event2 and ev.intersect_row is not None)


def test_detect_events_frequency_at_desk_scale():
    p = instances.CsAdversarialParams(256, 4, 4096)
    hits = sum(instances.detect_events(sk.make_countsketch(4096, 4096, 4, seed), p).witness_column
               is not None for seed in range(100))
    assert hits >= 30


# -- leverage construction --------------------------------------------------

@pytest.mark.parametrize("d,alpha,beta", [(4, 2, 2), (8, 3, 5), (16, 4, 4)])
def test_lev_adversarial_structure(d, alpha, beta):
    p = instances.LevAdversarialParams(d, alpha, beta)
    assert p.L == alpha * (d - 1) and p.n == d * (p.L + 1)
    assert 1 / d + p.L / (alpha * d) == pytest.approx(1.0, abs=1e-15)
    inst = instances.gen_lev_adversarial(p)
    assert inst.A.shape == (p.n, d)
    assert np.allclose(np.linalg.norm(inst.A, axis=0), 1.0, atol=1e-12)
    assert np.allclose(inst.x_star, instances.lev_adversarial_optimum(p), atol=1e-12)
    assert inst.x_star[0] == pytest.approx(1 / d + 1 / math.sqrt(alpha * beta * d))
    assert 1 - 1e-12 <= inst.residual_norm <= math.sqrt(2) + 1e-12
    _check_optimum(inst)


def test_lev_adversarial_leverage_scores():
    p = instances.LevAdversarialParams(4, 2, 2)
    A = instances.gen_lev_adversarial(p).A
    hat = np.diag(A @ np.linalg.inv(A.T @ A) @ A.T)
    assert np.allclose(hat[:4], 1 / 4, atol=1e-12)
    assert np.allclose(hat[4:], 1 / (2 * 4), atol=1e-12)
    assert np.allclose(sk.leverage_scores(A), hat, atol=1e-12)


def test_lev_params_regime_and_validation():
    assert instances.LevAdversarialParams(64, 64, 8).operative_regime
    assert not instances.LevAdversarialParams(64, 1, 8).operative_regime
    with pytest.raises(InvalidParams):
        instances.LevAdversarialParams(4, 1, 4)
    with pytest.raises(InvalidParams):
        instances.LevAdversarialParams(1, 1, 1)


# -- lower-bound distributions ----------------------------------------------

@given(d=st.integers(1, 12), extra=st.integers(1, 60), seed=st.integers(0, 10**6))
def test_lower_bound_d1(d, extra, seed):
    inst = instances.gen_lower_bound_d1(d + extra, d, seed)
    assert np.max(np.abs(inst.A.T @ inst.b)) <= 1e-10
    assert np.allclose(inst.A.T @ inst.A, np.eye(d), atol=1e-10)
    assert abs(np.linalg.norm(inst.b) - 1) <= 1e-12
    assert np.max(np.abs(dense.exact_lsq(inst.A, inst.b))) <= 1e-9
    _check_optimum(inst)


def test_lower_bound_d1_validation():
    with pytest.raises(InvalidParams):
        instances.gen_lower_bound_d1(4, 4, 0)


def test_lower_bound_d1_scaling():
    n, d = 512, 4
    means = []
    for m in (4 * d, 16 * d, 64 * d):
        errs = []
        for seed in range(100):
            inst = instances.gen_lower_bound_d1(n, d, seed)
            S = sk.make_gaussian(m, n, 10**6 + seed)
            rep = sketch_and_solve(inst, S)
            direct = dense.pinv(S.apply(inst.A)) @ S.apply(inst.b)
            assert rep.l2_err == pytest.approx(np.linalg.norm(direct), rel=1e-9)
            errs.append(rep.l2_err)
        means.append(np.mean(errs))
        target = math.sqrt(d / m)
        assert target / 3 <= means[-1] <= 3 * target


@given(d=st.integers(1, 12), extra=st.integers(0, 60), seed=st.integers(0, 10**6))
def test_lower_bound_d2(d, extra, seed):
    inst = instances.gen_lower_bound_d2(d + extra, d, seed)
    assert np.array_equal(inst.x_star, inst.b[:d])
    assert abs(inst.residual_norm**2 + np.sum(inst.x_star**2) - 1) <= 1e-10
    _check_optimum(inst)


def test_lower_bound_d2_rank_probe():
    inst = instances.gen_lower_bound_d2(64, 8, 3)
    full = sketch_and_solve(inst, sk.make_gaussian(16, 64, 1))
    thin = sketch_and_solve(inst, sk.make_gaussian(4, 64, 1))
    assert full.sketched_rank_ok and not thin.sketched_rank_ok


def test_haar_columns_sign_convention(rng):
    q = instances.haar_columns(20, 5, rng)
    assert np.allclose(q.T @ q, np.eye(5), atol=1e-12)


# -- benign instances -------------------------------------------------------

def test_random_wellcond_noiseless_recovers_plant():
    inst = instances.gen_random_wellcond(64, 6, 0.0, 5)
    x0 = np.random.default_rng(5)
    x0.standard_normal((64, 6))
    plant = x0.standard_normal(6)
    assert np.allclose(inst.x_star, plant, atol=1e-8)
    assert inst.residual_norm <= 1e-8 * np.linalg.norm(inst.b)


def test_random_wellcond_is_reproducible():
    a = instances.gen_random_wellcond(32, 4, 1.0, 9)
    b = instances.gen_random_wellcond(32, 4, 1.0, 9)
    assert np.array_equal(a.A, b.A) and np.array_equal(a.b, b.b)


def test_random_wellcond_residual_scale():
    n, d = 1024, 16
    for seed in range(100):
        inst = instances.gen_random_wellcond(n, d, 1.0, seed)
        direct = np.linalg.norm(inst.A @ np.linalg.lstsq(inst.A, inst.b, rcond=None)[0] - inst.b)
        assert inst.residual_norm == pytest.approx(direct, rel=1e-9)
        assert abs(inst.residual_norm - math.sqrt(n - d)) <= 0.1 * math.sqrt(n - d)


def test_random_wellcond_validation():
    with pytest.raises(InvalidParams):
        instances.gen_random_wellcond(4, 5, 1.0, 0)
    with pytest.raises(InvalidParams):
        instances.gen_random_wellcond(8, 2, -1.0, 0)


# -- serialization ----------------------------------------------------------

def test_instance_round_trip(tmp_path):
    p = instances.CsAdversarialParams(4, 2, 8)
    inst = instances.gen_cs_adversarial(p)
    paths = instances.save_instance(inst, tmp_path / "cs", params=instances.params_dict(p), seed=0)
    meta = json.loads(paths[2].read_text())
    assert set(meta) == {"label", "n", "d", "params", "seed", "residual_norm", "pinv_norm"}
    assert meta["params"] == {"d": 4, "alpha": 2, "n": 8}
    back = instances.load_instance(tmp_path / "cs")
    assert np.array_equal(back.A, inst.A) and np.array_equal(back.b, inst.b)
    assert back.residual_norm == 1.0
