import csv
from pathlib import Path
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carinf.core import (BalanceProfile, Dataset, EmptyCellError, LinearHypothesis, Observation,
                         Scheme, StratumCounts, TargetProportions, VarianceKind, count_cells,
                         require_estimable, validate_dataset)


def small():
    return Dataset([1.0, 2.0, 3.0, 4.0, 5.0, 6.0], [0, 1, 0, 1, 2, 2], [1, 1, 2, 2, 1, 2], 2, 2)


def test_dataset_is_immutable_and_typed():
    d = small()
    assert d.n == 6 and d.a.dtype == np.int64
    with pytest.raises(ValueError):
        d.y[0] = 9.0
    assert list(d.cell_index) == [0, 2, 1, 3, 4, 5]


@pytest.mark.parametrize("kwargs,msg", [
    (dict(y=[1.0, 2.0], a=[0], s=[1, 1]), "equal length"),
    (dict(y=[1.0], a=[3], s=[1]), "treatment labels"),
    (dict(y=[1.0], a=[0], s=[0]), "stratum labels"),
    (dict(y=[1.0], a=[0.5], s=[1]), "integers"),
    (dict(y=[1.0], a=["x"], s=[1]), "integers"),
])
def test_dataset_rejects_malformed_input(kwargs, msg):
    with pytest.raises(ValueError, match=msg):
        Dataset(num_treatments=2, num_strata=2, **kwargs)


def test_observation_round_trip():
    d = small()
    obs = list(d.observations())
    assert obs[4] == Observation(5.0, 2, 1)
    back = Dataset.from_observations(obs, 2, 2)
    assert np.array_equal(back.y, d.y) and np.array_equal(back.s, d.s)


@given(st.lists(st.tuples(st.integers(0, 2), st.integers(1, 4)), min_size=1, max_size=80))
@settings(max_examples=100, deadline=None)
def test_count_cells_matches_counter(pairs):
    a, s = zip(*pairs)
    d = Dataset(np.zeros(len(pairs)), a, s, 2, 4)
    c = count_cells(d)
    want = Counter(pairs)
    for aa in range(3):
        for ss in range(1, 5):
            assert c.n_as[aa, ss - 1] == want.get((aa, ss), 0)
    assert c.n == len(pairs)
    assert np.isclose(c.p_hat.sum(), 1.0)
    expected_empty = [(aa, ss) for aa in range(3) for ss in range(1, 5) if (aa, ss) not in want]
    assert sorted(c.empty_cells()) == expected_empty


def test_validation_messages():
    d = Dataset([1.0, np.nan, 3.0], [0, 1, 1], [1, 1, 1], 1, 2)
    issues = validate_dataset(d)
    assert any("non-finite outcome at record 1" in m for m in issues)
    assert any("empty cell (a=0, s=2)" in m for m in issues)
    with pytest.raises(EmptyCellError):
        require_estimable(Dataset([1.0, 2.0, 3.0], [0, 1, 1], [1, 1, 2], 1, 2))


def test_require_estimable_rejects_nonfinite():
    d = Dataset([1.0, np.inf, 3.0, 4.0], [0, 1, 0, 1], [1, 1, 1, 1], 1, 1)
    with pytest.raises(ValueError, match="non-finite"):
        require_estimable(d)


def test_stratum_counts_derived_quantities():
    c = StratumCounts(np.array([[2, 3], [1, 4]]))
    assert c.n == 10
    assert np.allclose(c.p_hat, [0.3, 0.7])
    assert np.allclose(c.pi_hat, [[2 / 3, 3 / 7], [1 / 3, 4 / 7]])


def test_target_proportions_validation():
    tp = TargetProportions.binary(0.3, 4)
    assert tp.num_treatments == 1 and tp.num_strata == 4 and tp.is_constant()
    assert np.allclose(tp.pi[0], 0.7)
    assert not TargetProportions.binary([0.3, 0.4], 2).is_constant()
    multi = TargetProportions.constant([0.4, 0.3, 0.3], 3)
    assert multi.num_treatments == 2
    for bad in ([[0.5], [0.6]], [[1.0], [0.0]], [[1 - 1e-12], [1e-12]], [[np.nan], [1.0]]):
        with pytest.raises(ValueError):
            TargetProportions(np.array(bad))
    with pytest.raises(ValueError):
        TargetProportions(np.array([0.5, 0.5]))


def test_balance_profile():
    assert np.all(BalanceProfile.for_scheme("SRS", 3).tau == 1.0)
    assert np.all(BalanceProfile.for_scheme(Scheme.SBR, 3).tau == 0.0)
    with pytest.raises(ValueError):
        BalanceProfile([1.5])


def test_linear_hypothesis_rank_checks():
    h = LinearHypothesis.single(2, 3, c=0.5)
    assert h.rank == 1 and h.psi[0, 1] == 1.0 and h.c[0] == 0.5
    assert LinearHypothesis.identity(3).rank == 3
    with pytest.raises(ValueError, match="rank"):
        LinearHypothesis([[1.0, 1.0], [2.0, 2.0]], [0.0, 0.0])
    with pytest.raises(ValueError, match="rank"):
        LinearHypothesis([[0.0, 0.0]], [0.0])
    with pytest.raises(ValueError):
        LinearHypothesis([[1.0, 0.0]], [0.0, 1.0])
    with pytest.raises(ValueError):
        LinearHypothesis([[1.0]], [0.0], alpha=1.0)


def test_variance_kind_metadata():
    assert VarianceKind("NEW_SFE").estimator.value == "SFE"
    assert VarianceKind("HC_SAT").flavor == "HC"
    assert len(list(VarianceKind)) == 6


def application_dataset():
    path = Path(__file__).parent / "data" / "application_cells.csv"
    rows = [r for r in csv.reader(l for l in path.read_text().splitlines() if not l.startswith("#"))][1:]
    a, s = [], []
    for r in rows:
        for j, c in enumerate(r[1:], start=1):
            a += [int(r[0])] * int(c)
            s += [j] * int(c)
    return Dataset(np.zeros(len(a)), a, s, 2, 5)


def test_application_cell_layout():
    c = count_cells(application_dataset())
    assert c.n_s.tolist() == [48, 58, 46, 33, 30]
    assert c.n == 215
    assert c.n_as[0].tolist() == [15, 19, 16, 12, 10]
    assert c.n_as.sum(axis=1).tolist() == [72, 70, 73]
    assert c.empty_cells() == []
