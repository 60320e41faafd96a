"""Reproducible Monte-Carlo experiment runner.

Seed layout: trial ``t`` uses ``SeedStream(master_seed, t)``; its instance is
drawn from sub-stream 0 and its sketch from sub-stream 1 (child ``i`` of a
composed sketch uses sub-stream ``(1, i)``). Any single trial can therefore
be replayed on its own.
"""

from __future__ import annotations

import dataclasses
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from importlib import resources
from typing import Any, Callable, Sequence

import numpy as np

from . import dense, diagnostics, instances
from .errors import ConfigInvalid, EmptyInput, InvalidParams, SketchRegError
from .regress import REPORT_FIELDS, RegressionInstance, SolveReport, guarantee_check, sketch_and_solve
from .sketches import (
    SeedStream,
    SketchOperator,
    compose_chain,
    leverage_scores,
    make_countsketch,
    make_gaussian,
    make_leverage_sampler,
    make_srht,
)

EXPERIMENTS = ("linf-positive", "cs-counterexample", "lev-counterexample", "lower-bound-l2", "diagnostics-suite")
BASE_FAMILIES = ("gaussian", "srht", "countsketch", "leverage")
QUANTILES = (("min", Fraction(0)), ("p25", Fraction(1, 4)), ("median", Fraction(1, 2)),
             ("p75", Fraction(3, 4)), ("p95", Fraction(19, 20)), ("max", Fraction(1)))
SUMMARY_METRICS = ("l2_err", "linf_err", "normalized_linf", "cost_ratio")

DEFAULT_SKETCH = {
    "linf-positive": "gaussian",
    "cs-counterexample": "countsketch",
    "lev-counterexample": "leverage",
    "lower-bound-l2": "gaussian",
    "diagnostics-suite": "srht",
}
# parameters each experiment accepts (beyond the common ones)
ALLOWED = {
    "linf-positive": {"n", "d", "m", "noise"},
    "cs-counterexample": {"n", "d", "m", "alpha"},
    "lev-counterexample": {"n", "d", "m", "alpha", "beta"},
    "lower-bound-l2": {"n", "d", "m", "mixture"},
    "diagnostics-suite": {"n", "d", "m", "aips_c"},
}
REQUIRED = {
    "linf-positive": {"n", "d", "m"},
    "cs-counterexample": {"d", "m", "alpha"},
    "lev-counterexample": {"d", "m", "alpha", "beta"},
    "lower-bound-l2": {"n", "d", "m"},
    "diagnostics-suite": {"n", "d", "m"},
}
OPTIONAL_DEFAULTS = {"noise": 1.0, "mixture": False, "aips_c": diagnostics.DEFAULT_AIPS_C}


@dataclass(frozen=True)
class SketchSpec:
    """One link of a sketch chain: family and output dimension (``None`` = the config's ``m``)."""

    family: str
    m: int | None = None


def parse_sketch(text: str) -> tuple[SketchSpec, ...]:
    """Parse ``gaussian`` or ``composed:gaussian,srht:1024,countsketch:4096`` (outermost first)."""
    if text in BASE_FAMILIES:
        return (SketchSpec(text),)
    if not text.startswith("composed:"):
        raise ConfigInvalid("sketch", f"unknown sketch {text!r}; expected one of "
                            f"{', '.join(BASE_FAMILIES)} or composed:<chain>")
    links = []
    for i, part in enumerate(text[len("composed:"):].split(",")):
        fam, _, dim = part.strip().partition(":")
        if fam not in BASE_FAMILIES:
            raise ConfigInvalid("sketch", f"unknown family {fam!r} in composed chain")
        if i == 0:
            if dim:
                raise ConfigInvalid("sketch", "the outermost link takes its rows from --m")
            links.append(SketchSpec(fam))
            continue
        if not dim.isdigit() or int(dim) < 1:
            raise ConfigInvalid("sketch", f"link {part!r} needs a positive row count, e.g. srht:1024")
        links.append(SketchSpec(fam, int(dim)))
    if len(links) < 2:
        raise ConfigInvalid("sketch", "a composed chain needs at least two links")
    if any(link.family == "leverage" for link in links[:-1]):
        raise ConfigInvalid("sketch", "leverage sampling can only be the innermost link")
    return tuple(links)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    n: int | None = None
    d: int | None = None
    m: int | None = None
    s: int | None = None
    alpha: int | None = None
    beta: int | None = None
    eps: float | None = None
    slack_C: float = 10.0
    trials: int = 1
    master_seed: int = 0
    sketch: str | None = None
    noise: float | None = None
    mixture: bool | None = None
    aips_c: float | None = None
    out_path: str | None = None
    format: str = "csv"
    workers: int = 1

    def resolved(self) -> "ExperimentConfig":
        """Validate and fill defaults; raises :class:`ConfigInvalid` naming the offending field."""
        exp = self.experiment
        if exp not in EXPERIMENTS:
            raise ConfigInvalid("experiment", f"unknown experiment {exp!r}")
        for name in ("n", "d", "m", "s", "alpha", "beta", "trials", "workers"):
            val = getattr(self, name)
            if val is not None and (not isinstance(val, (int, np.integer)) or isinstance(val, bool) or val < 1):
                raise ConfigInvalid(name, f"must be a positive integer, got {val!r}")
        for name in ("n", "d", "m", "alpha", "beta", "noise", "mixture", "aips_c"):
            given = getattr(self, name) is not None
            if given and name not in ALLOWED[exp]:
                raise ConfigInvalid(name, f"not applicable to {exp}")
            if not given and name in REQUIRED[exp]:
                raise ConfigInvalid(name, f"required for {exp}")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConfigInvalid("master_seed", "must be an unsigned 64-bit integer")
        if self.format not in ("csv", "json"):
            raise ConfigInvalid("format", f"expected csv or json, got {self.format!r}")
        if not self.slack_C > 0:
            raise ConfigInvalid("slack_C", "must be positive")
        if self.eps is not None and not self.eps > 0:
            raise ConfigInvalid("eps", "must be positive")
        if self.noise is not None and not self.noise >= 0:
            raise ConfigInvalid("noise", "must be nonnegative")

        sketch = self.sketch or DEFAULT_SKETCH[exp]
        chain = parse_sketch(sketch)
        uses_cs = any(link.family == "countsketch" for link in chain)
        if self.s is not None and not uses_cs:
            raise ConfigInvalid("s", "only applicable to countsketch")
        s = self.s if self.s is not None else (1 if uses_cs else None)

        d, m = self.d, self.m
        n = self.n
        if exp == "cs-counterexample":
            if n is None:
                n = d + self.alpha
            try:
                instances.CsAdversarialParams(d, self.alpha, n)
            except InvalidParams as exc:
                raise ConfigInvalid("alpha", str(exc)) from None
        elif exp == "lev-counterexample":
            try:
                derived = instances.LevAdversarialParams(d, self.alpha, self.beta).n
            except InvalidParams as exc:
                raise ConfigInvalid("beta", str(exc)) from None
            if n is not None and n != derived:
                raise ConfigInvalid("n", f"lev-counterexample fixes n = d (alpha (d - 1) + 1) = {derived}")
            n = derived
        if exp == "lower-bound-l2" and n < d + 1:
            raise ConfigInvalid("n", "lower-bound-l2 needs n >= d + 1")
        if n is not None and d is not None and n < d:
            raise ConfigInvalid("d", f"need n >= d, got n={n}, d={d}")
        if exp == "diagnostics-suite" and chain[-1].family == "srht" and not dense.is_power_of_two(n):
            raise ConfigInvalid("n", "diagnostics-suite with an SRHT needs n a power of two")
        if exp == "diagnostics-suite" and n > 2**14:
            raise ConfigInvalid("n", "diagnostics-suite materializes sketches; needs n <= 16384")
        dims = [m] + [link.m for link in chain[1:]] + [_sketch_input_rows(chain[-1], n)]
        for i, link in enumerate(chain):
            if link.family != "leverage" and dims[i] > dims[i + 1]:
                where = "m" if i == 0 else "sketch"
                raise ConfigInvalid(where, f"{link.family} link maps {dims[i + 1]} rows to {dims[i]} (> input)")
            if link.family == "srht" and not dense.is_power_of_two(dims[i + 1]):
                raise ConfigInvalid("sketch", f"srht link needs a power-of-two input, got {dims[i + 1]}")
        if uses_cs and s > min(link.m or m for link in chain if link.family == "countsketch"):
            raise ConfigInvalid("s", "sparsity exceeds the Count-Sketch row count")

        extras = {k: (getattr(self, k) if getattr(self, k) is not None else OPTIONAL_DEFAULTS[k])
                  for k in ("noise", "mixture", "aips_c") if k in ALLOWED[exp]}
        return dataclasses.replace(
            self, n=n, s=s, sketch=sketch, eps=self.eps if self.eps is not None else math.sqrt(d / m),
            master_seed=int(self.master_seed), **extras,
        )

    @property
    def primary_check(self) -> str:
        return "l2" if self.experiment == "lower-bound-l2" else "linf"

    def to_dict(self) -> dict:
        return {k: v for k, v in dataclasses.asdict(self).items() if k not in ("out_path", "workers")}


def _sketch_input_rows(link: SketchSpec, n: int) -> int:
    return dense.next_power_of_two(n) if link.family == "srht" else n


def build_sketch(cfg: ExperimentConfig, inst: RegressionInstance, stream: SeedStream,
                 scores=None) -> SketchOperator:
    """Build the configured sketch for ``inst`` (already padded if an SRHT touches it).

    ``scores`` optionally supplies cached leverage scores of ``inst.A``.
    """
    chain = parse_sketch(cfg.sketch)
    dims = [cfg.m] + [link.m for link in chain[1:]] + [inst.n]
    ops = []
    for i, link in enumerate(chain):
        m_i, n_i = dims[i], dims[i + 1]
        seed = stream.seed(1) if len(chain) == 1 else stream.seed(1, i)
        if link.family == "gaussian":
            ops.append(make_gaussian(m_i, n_i, seed))
        elif link.family == "srht":
            ops.append(make_srht(m_i, n_i, seed))
        elif link.family == "countsketch":
            ops.append(make_countsketch(m_i, n_i, cfg.s, seed))
        else:
            ops.append(make_leverage_sampler(inst.A, m_i, seed, scores=scores))
    return compose_chain(ops)


def prepare_instance(cfg: ExperimentConfig, inst: RegressionInstance) -> RegressionInstance:
    """Pad with explicit zero rows when the innermost link is an SRHT."""
    inner = parse_sketch(cfg.sketch)[-1]
    if inner.family == "srht" and not dense.is_power_of_two(inst.n):
        return inst.padded(dense.next_power_of_two(inst.n))
    return inst


@dataclass
class TrialResult:
    trial: int
    report: SolveReport
    l2_pass: bool
    linf_pass: bool
    extras: dict = field(default_factory=dict)

    def row(self) -> dict:
        return self.report.row(self.trial)


@dataclass
class TrialSummary:
    quantiles: dict[str, dict[str, float]]
    exceedance_rate: float
    l2_exceedance_rate: float
    linf_exceedance_rate: float
    trials_run: int
    event_rate: float | None = None
    extras: dict = field(default_factory=dict)
    truncated: bool = False

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def lower_nearest_rank(sorted_vals: Sequence[float], q: Fraction) -> float:
    """Order statistic at index ``floor(q * (N - 1))`` of an ascending sequence."""
    n = len(sorted_vals)
    return sorted_vals[(q.numerator * (n - 1)) // q.denominator]


def quantile_table(values: Sequence[float]) -> dict[str, float]:
    vals = sorted(values)
    return {name: float(lower_nearest_rank(vals, q)) for name, q in QUANTILES}


def summarize(rows: Sequence[TrialResult | SolveReport], primary_check: str = "linf",
              eps: float | None = None, slack_C: float = 10.0) -> TrialSummary:
    """Order statistics and failure rates of a batch of trials.

    ``rows`` may be :class:`TrialResult` objects or bare :class:`SolveReport`
    objects; the latter are checked against ``eps`` and ``slack_C`` here.
    The result does not depend on the order of ``rows``.
    """
    if not rows:
        raise EmptyInput("summarize needs at least one row")
    results = []
    for i, r in enumerate(rows):
        if isinstance(r, SolveReport):
            if eps is None:
                raise InvalidParams("eps is required to check bare SolveReports")
            chk = guarantee_check(r, eps, slack_C)
            r = TrialResult(i, r, chk.l2_pass, chk.linf_pass)
        results.append(r)
    total = len(results)
    quant = {
        metric: quantile_table([getattr(r.report, metric) for r in results]) for metric in SUMMARY_METRICS
    }
    l2_fail = sum(not r.l2_pass for r in results)
    linf_fail = sum(not r.linf_pass for r in results)
    primary_fail = l2_fail if primary_check == "l2" else linf_fail
    events = [r.extras["event"] for r in results if "event" in r.extras]
    return TrialSummary(
        quantiles=quant,
        exceedance_rate=primary_fail / total,
        l2_exceedance_rate=l2_fail / total,
        linf_exceedance_rate=linf_fail / total,
        trials_run=total,
        event_rate=(sum(events) / len(events)) if events else None,
    )


# -- trials -----------------------------------------------------------------

class _Experiment:
    """Per-run state: the configuration and any instance shared by all trials."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.fixed: RegressionInstance | None = None
        self.cs_params = None
        self.scores = None
        if cfg.experiment == "cs-counterexample":
            self.cs_params = instances.CsAdversarialParams(cfg.d, cfg.alpha, cfg.n)
            self.fixed = prepare_instance(cfg, instances.gen_cs_adversarial(self.cs_params))
        elif cfg.experiment == "lev-counterexample":
            p = instances.LevAdversarialParams(cfg.d, cfg.alpha, cfg.beta)
            self.fixed = prepare_instance(cfg, instances.gen_lev_adversarial(p))
        if self.fixed is not None and parse_sketch(cfg.sketch)[-1].family == "leverage":
            self.scores = leverage_scores(self.fixed.A)

    def instance(self, stream: SeedStream) -> tuple[RegressionInstance, dict]:
        cfg = self.cfg
        if self.fixed is not None:
            return self.fixed, {}
        seed = stream.seed(0)
        if cfg.experiment == "linf-positive":
            inst = instances.gen_random_wellcond(cfg.n, cfg.d, cfg.noise, seed)
            return prepare_instance(cfg, inst), {}
        # lower-bound-l2; the mixture flips a coin between the two distributions
        component = 1
        if cfg.mixture:
            component = 1 + int(stream.generator(0, 1).integers(2))
        gen = instances.gen_lower_bound_d1 if component == 1 else instances.gen_lower_bound_d2
        return prepare_instance(cfg, gen(cfg.n, cfg.d, seed)), {"component": component}

    def trial(self, t: int) -> TrialResult:
        cfg = self.cfg
        stream = SeedStream(cfg.master_seed, t)
        inst, extras = self.instance(stream)
        S = build_sketch(cfg, inst, stream, scores=self.scores)
        report = sketch_and_solve(inst, S)
        report.validate()
        chk = guarantee_check(report, cfg.eps, cfg.slack_C)
        if self.cs_params is not None and S.family == "countsketch":
            ev = instances.detect_events(S, self.cs_params)
            extras["event"] = ev.witness_column is not None
            if ev.witness_column is not None:
                j = ev.witness_column
                extras["witness_column"] = j
                extras["witness_err"] = float(abs(report.x_prime[j] - report.x_star[j]))
                extras["witness_shift"] = float(report.x_prime[j] - report.x_star[j])
                extras["intersect_sign"] = ev.intersect_sign
        return TrialResult(t, report, chk.l2_pass, chk.linf_pass, extras)


def _cs_extras(cfg: ExperimentConfig, results: Sequence[TrialResult]) -> dict:
    hits = [r for r in results if r.extras.get("event")]
    target = 1.0 / (cfg.s * math.sqrt(cfg.alpha))
    out: dict[str, Any] = {"event_trials": len(hits), "witness_target": target}
    if hits:
        devs = [abs(r.extras["witness_err"] - target) for r in hits]
        signed = [abs(r.extras["witness_shift"] - r.extras["intersect_sign"] * target) for r in hits]
        out["witness_max_abs_dev"] = max(devs)
        out["witness_signed_max_dev"] = max(signed)
        out["event_fail_rate"] = sum(not r.linf_pass for r in hits) / len(hits)
    return out


def run_trials(cfg: ExperimentConfig, on_result: Callable[[TrialResult], None] | None = None
               ) -> tuple[list[TrialResult], bool]:
    """Run every trial in index order. Returns ``(results, completed)``.

    An interrupt stops the run early; the finished prefix is returned with
    ``completed=False``.
    """
    exp = _Experiment(cfg)
    results: list[TrialResult] = []
    try:
        if cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                for res in pool.map(exp.trial, range(cfg.trials)):
                    results.append(res)
                    if on_result:
                        on_result(res)
        else:
            for t in range(cfg.trials):
                res = exp.trial(t)
                results.append(res)
                if on_result:
                    on_result(res)
    except KeyboardInterrupt:
        return results, False
    return results, True


def _diag_trial(cfg: ExperimentConfig, t: int) -> list[dict]:
    stream = SeedStream(cfg.master_seed, t)
    rng = stream.generator(0)
    basis = instances.haar_columns(cfg.n, cfg.d, rng)
    other = rng.standard_normal((cfg.n, cfg.d))
    inst = RegressionInstance(A=basis, b=np.zeros(cfg.n), x_star=np.zeros(cfg.d), residual_norm=0.0,
                              pinv_norm=1.0)
    S = build_sketch(cfg, inst, stream)
    recs = [diagnostics.as_record("embedding_distortion",
                                  diagnostics.embedding_distortion(S, basis, 64, stream.seed(2)))]
    recs.append({"diagnostic": "amp_error", "value": diagnostics.amp_error(S, basis, other)})
    recs.append(diagnostics.as_record("aips_check", diagnostics.aips_check(S, cfg.aips_c)))
    try:
        nrep = diagnostics.neumann_validate(S, basis @ np.diag(np.linspace(1, 4, cfg.d)), 12)
        rec = diagnostics.as_record("neumann_validate", nrep)
        rec["decay_ok"] = nrep.decay_ok()
    except SketchRegError as exc:
        rec = {"diagnostic": "neumann_validate", "error": type(exc).__name__, "message": str(exc)}
    recs.append(rec)
    for r in recs:
        r["trial"] = t
    return recs


def run_diagnostics(cfg: ExperimentConfig) -> tuple[list[dict], TrialSummary]:
    cfg = cfg.resolved()
    records: list[dict] = []
    for t in range(cfg.trials):
        records.extend(_diag_trial(cfg, t))
    by = lambda name: [r for r in records if r["diagnostic"] == name]  # noqa: E731
    neu = [r for r in by("neumann_validate") if "error" not in r]
    extras = {
        "certified_eps": quantile_table([r["certified_eps"] for r in by("embedding_distortion")]),
        "amp_error": quantile_table([r["value"] for r in by("amp_error")]),
        "aips_pass_rate": sum(r["passed"] for r in by("aips_check")) / cfg.trials,
        "aips_max_offdiag": max(r["max_offdiag"] for r in by("aips_check")),
        "neumann_runs": len(neu),
        "neumann_decay_ok_rate": (sum(r["decay_ok"] for r in neu) / len(neu)) if neu else None,
    }
    summary = TrialSummary(quantiles={}, exceedance_rate=0.0, l2_exceedance_rate=0.0,
                           linf_exceedance_rate=0.0, trials_run=cfg.trials, extras=extras)
    return records, summary


def run_experiment(cfg: ExperimentConfig) -> TrialSummary:
    """Run ``cfg`` and write per-trial rows plus the summary to ``cfg.out_path`` (if set).

    Output is a deterministic function of the configuration, independent of
    ``workers``.
    """
    cfg = cfg.resolved()
    if cfg.experiment == "diagnostics-suite":
        records, summary = run_diagnostics(cfg)
        if cfg.out_path:
            with open(cfg.out_path, "w") as fh:
                for r in records:
                    fh.write(json.dumps(r, sort_keys=True) + "\n")
                fh.write(json.dumps({"summary": summary.to_dict()}, sort_keys=True) + "\n")
        return summary
    results, completed = run_trials(cfg)
    summary = summarize_results(cfg, results, completed)
    if cfg.out_path:
        write_results(cfg, results, summary, cfg.out_path)
    if not completed:
        raise KeyboardInterrupt
    return summary


def summarize_results(cfg: ExperimentConfig, results: Sequence[TrialResult], completed: bool = True
                      ) -> TrialSummary:
    if not results:
        return TrialSummary(quantiles={}, exceedance_rate=0.0, l2_exceedance_rate=0.0,
                            linf_exceedance_rate=0.0, trials_run=0, truncated=True)
    summary = summarize(results, cfg.primary_check)
    summary.truncated = not completed
    if cfg.experiment == "cs-counterexample" and summary.event_rate is not None:
        summary.extras.update(_cs_extras(cfg, results))
    summary.extras["rank_ok_rate"] = sum(r.report.sketched_rank_ok for r in results) / len(results)
    summary.extras["linf_over_l2"] = quantile_table(
        [r.report.linf_err / r.report.l2_err if r.report.l2_err > 0 else 0.0 for r in results]
    )
    summary.extras["normalized_l2"] = quantile_table([r.report.normalized_l2 for r in results])
    return summary


# -- output -----------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def format_csv(cfg: ExperimentConfig, results: Sequence[TrialResult], truncated: bool = False,
               timestamp: str | None = None) -> str:
    buf = io.StringIO()
    stamp = timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds")
    buf.write(f"# sketchreg {cfg.experiment} generated {stamp}\n")
    buf.write(",".join(REPORT_FIELDS) + "\n")
    for r in results:
        row = r.row()
        buf.write(",".join(_fmt(row[k]) for k in REPORT_FIELDS) + "\n")
    if truncated:
        buf.write(f"# TRUNCATED after {len(results)} of {cfg.trials} trials\n")
    return buf.getvalue()


def format_jsonl(cfg: ExperimentConfig, results: Sequence[TrialResult], summary: TrialSummary) -> str:
    lines = [json.dumps(r.row(), sort_keys=False) for r in results]
    lines.append(json.dumps({"summary": summary.to_dict(), "config": cfg.to_dict()}, sort_keys=True))
    return "\n".join(lines) + "\n"


def write_results(cfg: ExperimentConfig, results: Sequence[TrialResult], summary: TrialSummary,
                  path: str | os.PathLike) -> None:
    """CSV writes rows to ``path`` and the summary to ``<path>.summary.json``; JSON writes one JSON-lines file."""
    path = os.fspath(path)
    if cfg.format == "csv":
        with open(path, "w") as fh:
            fh.write(format_csv(cfg, results, truncated=summary.truncated))
        with open(path + ".summary.json", "w") as fh:
            json.dump({"summary": summary.to_dict(), "config": cfg.to_dict()}, fh, sort_keys=True, indent=1)
            fh.write("\n")
    else:
        with open(path, "w") as fh:
            fh.write(format_jsonl(cfg, results, summary))


# -- presets ----------------------------------------------------------------

def preset_names() -> list[str]:
    root = resources.files("sketchreg") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_preset(name: str, **overrides) -> ExperimentConfig:
    root = resources.files("sketchreg") / "presets"
    target = root / f"{name}.json"
    if not target.is_file():
        raise ConfigInvalid("preset", f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    data = json.loads(target.read_text())
    data.pop("description", None)
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigInvalid("preset", str(exc)) from None
