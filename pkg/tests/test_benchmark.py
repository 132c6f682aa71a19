import math

import numpy as np
import pytest

from steamgen.benchmark import (BenchConfig, lookup, rows_to_csv, run_sweep, spearman, summarize)
from steamgen.learners import TrainConfig

FAST = BenchConfig(n=200, repeats=2, regressor="ridge", train=TrainConfig(n_trees=10))


def test_theorem1_sweep():
    rows = run_sweep("theorem1")
    ratios = [r.result for r in rows if r.metric == "ratio"]
    assert all(a > b for a, b in zip(ratios, ratios[1:]))
    assert abs(ratios[-1] - 1) < 1e-3
    for d in {r.value for r in rows}:
        ratio = next(r.result for r in rows if r.value == d and r.metric == "ratio")
        bound = next(r.result for r in rows if r.value == d and r.metric == "bound")
        assert abs(ratio - 1) <= bound


def test_dimensionality_shape():
    rows = run_sweep("dimensionality", 0, FAST, values=(5, 10, 20, 50))
    jsd = [r for r in rows if r.metric == "jsd_pi"]
    assert len(jsd) == 4 * 2 * 2
    assert {r.model for r in rows} == {"steam", "joint"}


def test_sweep_deterministic_and_parallel_equal():
    a = run_sweep("treatment_complexity", 1, FAST, values=(1, 2))
    b = run_sweep("treatment_complexity", 1, FAST, values=(1, 2))
    c = run_sweep("treatment_complexity", 1, FAST, values=(1, 2), workers=2)
    assert a == b == c


def test_unknown_sweep():
    with pytest.raises(ValueError):
        run_sweep("nope")


def test_summaries():
    rows = run_sweep("ablation", 0, FAST)
    summ = summarize(rows)
    got = lookup(summ, "steam", "u_pehe")
    assert len(got) == 1 and next(iter(got.values())).repeats == 2
    assert rows_to_csv(rows).count("\n") == len(rows) + 1
    assert spearman([1, 2, 3], [10, 20, 30]) == pytest.approx(1)
