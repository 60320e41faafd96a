"""Acceptance criteria, each run at its stated tolerance.

Every test prints one ``[criterion N] PASS|FAIL ...`` line with the measured
values, then asserts. Runs use the shipped presets, so
``sketchreg run --preset <name>`` reproduces the same numbers.
"""

import math
import time

import numpy as np
import pytest

from sketchreg import dense, diagnostics, harness
from sketchreg import sketches as sk
from sketchreg.regress import SolveReport


@pytest.fixture
def report(capsys):
    def emit(num, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {num}] {'PASS' if ok else 'FAIL'} {detail}")
        return ok
    return emit


def _timed_preset(name, **overrides):
    start = time.perf_counter()
    cfg = harness.load_preset(name, **overrides).resolved()
    results, done = harness.run_trials(cfg)
    assert done
    summary = harness.summarize_results(cfg, results)
    return cfg, results, summary, time.perf_counter() - start


def test_criterion_1_gaussian_linf(report):
    cfg, _, s, secs = _timed_preset("linf-gaussian")
    assert (cfg.n, cfg.d, cfg.m, cfg.trials, cfg.slack_C, cfg.sketch) == (2048, 32, 512, 200, 10.0, "gaussian")
    assert cfg.eps == pytest.approx(0.25)
    ok = s.exceedance_rate <= 0.05 and secs < 120
    report(1, ok, f"exceedance_rate={s.exceedance_rate:.3f} (<= 0.05), "
                  f"median normalized_linf={s.quantiles['normalized_linf']['median']:.3f}, "
                  f"runtime={secs:.1f}s (< 120s)")
    assert ok


def test_criterion_2_srht_linf(report):
    cfg, _, s, secs = _timed_preset("linf-srht")
    assert (cfg.n, cfg.d, cfg.m, cfg.trials, cfg.sketch) == (2048, 32, 512, 200, "srht")
    bound = 4 * math.sqrt(math.log(cfg.d) / cfg.d)
    ratio = s.extras["linf_over_l2"]["median"]
    ok = s.exceedance_rate <= 0.05 and ratio <= bound
    report(2, ok, f"exceedance_rate={s.exceedance_rate:.3f} (<= 0.05), median linf/l2={ratio:.3f} "
                  f"(<= 4 sqrt(ln d / d) = {bound:.3f}), runtime={secs:.1f}s")
    assert ok


def test_criterion_3_countsketch_failure(report):
    cfg, results, s, secs = _timed_preset("cs-counterexample")
    assert (cfg.d, cfg.m, cfg.s, cfg.alpha, cfg.trials, cfg.slack_C) == (256, 4096, 4, 4, 200, 1.0)
    assert cfg.s**2 * cfg.d <= cfg.m <= math.sqrt(cfg.d**3 * cfg.s)
    target = 1 / (cfg.s * math.sqrt(cfg.alpha))
    hits = [r for r in results if r.extras.get("event")]
    worst = max(abs(r.extras["witness_err"] - target) for r in hits) if hits else math.inf
    fail_rate = sum(not r.linf_pass for r in hits) / len(hits) if hits else 0.0
    ok = s.event_rate >= 0.30 and worst <= 1e-9 and fail_rate >= 0.90 and secs < 180
    report(3, ok, f"event_rate={s.event_rate:.3f} (>= 0.30), witness |err - {target:.3f}| max={worst:.2e} "
                  f"(<= 1e-9), event-trial guarantee failures={fail_rate:.3f} (>= 0.90), "
                  f"runtime={secs:.1f}s (< 180s)")
    assert ok


def test_criterion_4_leverage_failure(report):
    lev_cfg, _, lev, t1 = _timed_preset("lev-leverage")
    srht_cfg, _, srht, t2 = _timed_preset("lev-srht")
    for cfg in (lev_cfg, srht_cfg):
        assert (cfg.d, cfg.alpha, cfg.beta, cfg.m, cfg.trials) == (64, 64, 8, 256, 200)
    a = lev.quantiles["normalized_linf"]["median"]
    b = srht.quantiles["normalized_linf"]["median"]
    ok = a >= 4 * b
    report(4, ok, f"median normalized_linf leverage={a:.3f}, srht={b:.3f}, ratio={a / b:.2f} (>= 4), "
                  f"runtime={t1 + t2:.1f}s")
    assert ok


def test_criterion_5_l2_lower_bound(report):
    medians, secs, ms = [], 0.0, (64, 256, 1024)
    for m in ms:
        cfg, _, s, t = _timed_preset(f"lower-bound-m{m}")
        assert (cfg.n, cfg.d, cfg.m, cfg.sketch) == (2048, 16, m, "gaussian")
        medians.append(s.quantiles["l2_err"]["median"])
        secs += t
    within = [1 / 3 <= med / math.sqrt(16 / m) <= 3 for med, m in zip(medians, ms)]
    ratios = [medians[i] / medians[i + 1] for i in range(2)]
    ok = all(within) and all(1.4 <= r <= 2.9 for r in ratios) and secs < 120
    report(5, ok, "medians=" + ", ".join(f"m{m}:{med:.3f} (sqrt(d/m)={math.sqrt(16 / m):.3f})"
                                          for m, med in zip(ms, medians))
           + f"; successive ratios={ratios[0]:.2f}, {ratios[1]:.2f} (in [1.4, 2.9]); runtime={secs:.1f}s (< 120s)")
    assert ok


def test_criterion_6_neumann(report):
    # m = 64 d keeps ||T|| near 0.2; at ||T|| = 1/2 the k = 12 tail is ~0.5**13, far above 1e-6
    n, d, m = 1024, 8, 512
    rng = np.random.default_rng(6)
    reps, seed = [], 0
    while len(reps) < 20:
        A = rng.standard_normal((n, d))
        rep = diagnostics.neumann_validate(sk.make_srht(m, n, seed), A, 12)
        seed += 1
        if rep.t_norm <= 0.5:
            reps.append(rep)
    decay = all(r.decay_ok() for r in reps)
    final = max(r.relative_errors[12] for r in reps)
    ident = max(r.identity_residual for r in reps)
    ok = decay and final <= 1e-6
    report(6, ok, f"pairs=20, geometric decay (ratio <= t_norm + 1e-6) in all={decay}, "
                  f"max relative error at k=12={final:.2e} (<= 1e-6), max t_norm={max(r.t_norm for r in reps):.3f}, "
                  f"series vs (SA)^+S residual={ident:.1e}")
    assert ok


def _property_checks():
    out = {}
    rng = np.random.default_rng(7)

    worst = 0.0
    for k in range(15):
        x = rng.standard_normal(2**k)
        worst = max(worst, np.linalg.norm(dense.fwht(dense.fwht(x)) - 2**k * x) / (2**k * np.linalg.norm(x)))
    out["fwht_involution"] = (worst <= 1e-9, f"{worst:.1e}")

    worst = 0.0
    for _ in range(50):
        r, c = int(rng.integers(1, 40)), int(rng.integers(1, 10))
        a = rng.standard_normal((max(r, c), c))
        p = dense.pinv(a)
        for lhs, rhs in ((a @ p @ a, a), (p @ a @ p, p), ((a @ p).T, a @ p), ((p @ a).T, p @ a)):
            worst = max(worst, np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs))
    out["moore_penrose"] = (worst <= 1e-9, f"{worst:.1e}")

    worst = 0.0
    for seed in range(100):
        n = 2 ** int(rng.integers(0, 9))
        m = int(rng.integers(1, n + 1))
        for S in (sk.make_srht(m, n, seed), sk.make_countsketch(m, n, int(rng.integers(1, m + 1)), seed)):
            worst = max(worst, np.max(np.abs(np.linalg.norm(S.materialize(), axis=0) - 1)))
    out["unit_columns"] = (worst <= 1e-12, f"{worst:.1e}")

    worst = 0.0
    for seed in range(100):
        n = 2 ** int(rng.integers(1, 9))
        m = int(rng.integers(1, n + 1))
        fam = ["gaussian", "srht", "countsketch", "leverage", "composed"][seed % 5]
        if fam == "gaussian":
            S = sk.make_gaussian(m, n, seed)
        elif fam == "srht":
            S = sk.make_srht(m, n, seed)
        elif fam == "countsketch":
            S = sk.make_countsketch(m, n, min(3, m), seed)
        elif fam == "leverage":
            S = sk.make_leverage_sampler(rng.standard_normal((n, 1)), m, seed)
        else:
            S = sk.compose(sk.make_gaussian(max(1, m // 2), m, seed), sk.make_countsketch(m, n, 1, seed))
        M = rng.standard_normal((n, 3))
        ref = S.materialize() @ M
        worst = max(worst, np.linalg.norm(S.apply(M) - ref) / max(np.linalg.norm(ref), 1e-300))
    out["matrix_free_vs_materialized"] = (worst <= 1e-10, f"{worst:.1e}")

    rel = diagnostics.gaussian_norm_identity(rng.standard_normal((8, 4)), 1.0, 100_000, 8).rel_err
    out["gaussian_norm_identity"] = (rel <= 0.03, f"rel_err={rel:.4f}")

    aips = [diagnostics.aips_check(sk.make_srht(256, 1024, seed), c=4) for seed in range(100)]
    rate = sum(r.passed for r in aips) / len(aips)
    peak = max(r.max_offdiag for r in aips)
    out["aips_srht"] = (rate >= 0.99, f"pass_rate={rate:.2f}, max_offdiag={peak:.3f}, bound={aips[0].bound:.3f}")

    rows = [SolveReport(np.zeros(1), np.zeros(1), v, v, 1.0, v, v, True) for v in rng.random(37)]
    a = harness.summarize(rows, eps=0.1).to_dict()
    b = harness.summarize([rows[i] for i in rng.permutation(37)], eps=0.1).to_dict()
    out["summarize_permutation"] = (a == b, "")

    cfg = harness.ExperimentConfig(experiment="linf-positive", n=256, d=4, m=64, trials=5, master_seed=3)
    res1, _ = harness.run_trials(cfg.resolved())
    res2, _ = harness.run_trials(cfg.resolved())
    body = [harness.format_csv(cfg, r, timestamp="fixed") for r in (res1, res2)]
    out["byte_identical_reruns"] = (body[0] == body[1], "")
    return out


def test_criterion_7_property_suites(report):
    checks = _property_checks()
    ok = all(v[0] for v in checks.values())
    detail = "; ".join(f"{k}={'ok' if v[0] else 'FAIL'}" + (f" ({v[1]})" if v[1] else "") for k, v in checks.items())
    report(7, ok, detail)
    assert ok
