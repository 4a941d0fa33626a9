import json
import math

import numpy as np
import pytest

from corners.construction import (
    corner_probability_check,
    run_experiment,
    sample_set,
    slack,
)
from corners.errors import DomainError
from corners.groups import FiniteAbelianGroup
from corners.kernel import DiscreteKernel, disagreement_kernel

G = disagreement_kernel()
C256 = FiniteAbelianGroup.cyclic(256)


def test_sample_set_extremes():
    g = FiniteAbelianGroup.cyclic(17)
    assert sample_set(DiscreteKernel.constant(1.0, (2, 1, 3)), g, 0).size == 17**2
    assert sample_set(DiscreteKernel.constant(0.0, (2, 2, 2)), g, 0).size == 0


def test_sample_set_density_window():
    A = sample_set(G, C256, 12345)
    assert 0.70 <= A.density <= 0.80


def test_sample_set_deterministic():
    g = FiniteAbelianGroup.vector(2, 5)
    a, b = sample_set(G, g, 9), sample_set(G, g, 9)
    assert np.array_equal(a.indicator, b.indicator)
    assert not np.array_equal(a.indicator, sample_set(G, g, 10).indicator)


def test_sample_set_respects_labels():
    # with a 0/1 kernel depending on X only, rows are all-in or all-out
    k = DiscreteKernel([0.5, 0.5], [1.0], [1.0], [[[0.0]], [[1.0]]])
    A = sample_set(k, FiniteAbelianGroup.cyclic(32), 3)
    rows = A.indicator.sum(axis=1)
    assert set(rows.tolist()) <= {0, 32}


def test_sample_set_zero_probability_label_never_drawn():
    k = DiscreteKernel([0.0, 1.0], [1.0], [1.0], [[[1.0]], [[0.0]]])
    assert sample_set(k, FiniteAbelianGroup.cyclic(40), 1).size == 0


def test_realized_alpha_unbiased_over_seeds():
    g = FiniteAbelianGroup.cyclic(128)
    mean = np.mean([sample_set(G, g, s).density for s in range(200)])
    assert abs(mean - 0.75) <= 0.01


def test_corner_probability_examples():
    g = FiniteAbelianGroup.cyclic(11)
    assert corner_probability_check(DiscreteKernel.constant(1.0), g, 0, 1000) == 1.0
    trials = 200_000
    est = corner_probability_check(DiscreteKernel.constant(0.5, (2, 2, 2)), g, 1, trials)
    sigma = math.sqrt(0.125 * 0.875 / trials)
    assert abs(est - 0.125) <= 4 * sigma
    with pytest.raises(DomainError):
        corner_probability_check(G, FiniteAbelianGroup.cyclic(6), 0, 10)


def test_corner_probability_disagreement_kernel():
    est = corner_probability_check(G, C256, 2024, 10**6)
    assert abs(est - 13 / 32) <= 0.003


def test_run_experiment_full_kernel():
    rep = run_experiment(DiscreteKernel.constant(1.0), FiniteAbelianGroup.cyclic(16), 0)
    assert rep.realized_alpha == 1.0
    assert rep.max_nonzero_census_density == 1.0
    assert rep.t_target == 1.0 and rep.success


def test_run_experiment_constant_half():
    rep = run_experiment(DiscreteKernel.constant(0.5), FiniteAbelianGroup.cyclic(512), 5)
    assert abs(rep.max_nonzero_census_density - 0.125) <= slack(512)
    assert rep.success


def test_run_experiment_small_group_rejected():
    with pytest.raises(DomainError):
        run_experiment(G, FiniteAbelianGroup.cyclic(15), 0)


def test_census_concentrates_per_difference():
    for seed in (1, 2):
        rep = run_experiment(G, C256, seed)
        assert rep.fraction_within_slack >= 0.99


def test_report_serializes_and_is_reproducible():
    a = run_experiment(G, FiniteAbelianGroup.cyclic(64), 4)
    b = run_experiment(G, FiniteAbelianGroup.cyclic(64), 4)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
    assert a.densities_csv().splitlines()[0] == "d_index,density"
    assert sum(a.histogram["counts"]) == 63


def test_slack_value():
    assert slack(512) == pytest.approx(5 * math.sqrt(math.log(512) / 512))
