"""Optimization loops, run logs and metrics."""

from .loop import (LLM_METHODS, METHODS, RunConfig, run_bora, run_llm_only, run_method, run_random,
                   run_vanilla_bo)
from .metrics import (RegretUnavailable, SignTestResult, UndefinedTest, band_csv, cumulative_regret, curves_csv,
                      max_so_far_curve, mean_stderr, sign_test)
from .runlog import RunLog, atomic_write

__all__ = [
    "LLM_METHODS", "METHODS", "RegretUnavailable", "RunConfig", "RunLog", "SignTestResult", "UndefinedTest",
    "atomic_write", "band_csv", "cumulative_regret", "curves_csv", "max_so_far_curve", "mean_stderr",
    "run_bora", "run_llm_only", "run_method", "run_random", "run_vanilla_bo", "sign_test",
]
