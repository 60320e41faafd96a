"""Sketch-and-solve least squares with oblivious subspace embeddings.

Dense oracles live in :mod:`sketchreg.dense`, sketch families in
:mod:`sketchreg.sketches`, the solve/metrics pipeline in
:mod:`sketchreg.regress`, instance generators in :mod:`sketchreg.instances`,
structural checks in :mod:`sketchreg.diagnostics`, and the Monte-Carlo
runner in :mod:`sketchreg.harness`.
"""

from .dense import exact_lsq, fwht, operator_norm, pinv, thin_svd
from .regress import RegressionInstance, SolveReport, directional_error, guarantee_check, sketch_and_solve
from .sketches import (
    SeedStream,
    SketchOperator,
    apply_sketch,
    compose,
    make_countsketch,
    make_gaussian,
    make_leverage_sampler,
    make_srht,
    materialize_sketch,
)

__all__ = [
    "RegressionInstance", "SeedStream", "SketchOperator", "SolveReport", "apply_sketch", "compose",
    "directional_error", "exact_lsq", "fwht", "guarantee_check", "make_countsketch", "make_gaussian",
    "make_leverage_sampler", "make_srht", "materialize_sketch", "operator_norm", "pinv",
    "sketch_and_solve", "thin_svd",
]
__version__ = "0.1.0"
