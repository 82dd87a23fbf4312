"""Prediction with missing data: adaptive linear models, joint
impute-then-regress, classical impute-then-regress baselines, missingness
mechanism generators, theory oracles, and a benchmark harness."""

__version__ = "0.1.0"
