import csv
import io

import numpy as np
import pytest

from evtblock.grid import generate_synthetic, global_max
from evtblock.objectives import ProblemDefinition, eval_objectives
from evtblock.validate import (
    REPORT_COLUMNS,
    ValidationError,
    full_domain_problem,
    out_of_sample,
    synthetic_replications,
)


def _problem(seed, shape=(40, 60)):
    return full_domain_problem(generate_synthetic(shape, 0.0, 1.0, seed))


def test_single_problem_gives_means_only():
    prob = _problem(1)
    rep = out_of_sample([(4, 5), (2, 3)], [prob])
    row = rep.row((4, 5))
    assert row.mean() == eval_objectives(prob, (4, 5)).point
    assert row.std() == (None, None)
    assert rep.replications == 1


def test_identical_problems_have_zero_spread():
    prob = _problem(2)
    rep = out_of_sample([(4, 5)], [prob] * 5)
    assert rep.row((4, 5)).std() == (0.0, 0.0)
    assert rep.row((4, 5)).count == 5


def test_aggregates_match_raw_values():
    probs = list(synthetic_replications((40, 60), 0.0, 1.0, 6, seed=50))
    rep = out_of_sample([(4, 5), (8, 3)], probs, workers=3)
    for spec in [(4, 5), (8, 3)]:
        row = rep.row(spec)
        raw = np.array([eval_objectives(p, spec).point for p in probs])
        assert row.mean() == (np.mean(raw[:, 0]), np.mean(raw[:, 1]))
        assert row.std()[0] == pytest.approx(np.std(raw[:, 0], ddof=1), rel=1e-12)


def test_replications_are_seeded_and_independent():
    a = [p.fit_domain.values for p in synthetic_replications((10, 10), 0, 1, 3, seed=7)]
    b = [p.fit_domain.values for p in synthetic_replications((10, 10), 0, 1, 3, seed=7)]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not np.array_equal(a[0], a[1])
    p = next(synthetic_replications((10, 10), 0, 1, 1, seed=7))
    assert p.reference_extreme_q == global_max(p.fit_domain) and p.bounds == (10, 10)


def test_out_of_bounds_spec_is_footnoted():
    probs = [_problem(3), _problem(4, shape=(20, 60))]
    rep = out_of_sample([(30, 5), (4, 5)], probs)
    bad = rep.row((30, 5))
    assert bad.count == 1 and len(bad.failures) == 1 and bad.failures[0][0] == 1
    assert rep.row((4, 5)).count == 2


def test_empty_inputs():
    with pytest.raises(ValidationError):
        out_of_sample([], [_problem(1)])
    with pytest.raises(ValidationError):
        out_of_sample([(2, 2)], [])
    dom = generate_synthetic((20, 100), 0, 1, 0)
    coupled = ProblemDefinition(dom, global_max(dom), (10,), coupling=(1, 5))
    with pytest.raises(ValidationError):
        out_of_sample([(2, 10)], [coupled])


def test_csv_layout():
    rep = out_of_sample([(4, 5), (50, 5)], [_problem(1), _problem(2)])
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert tuple(rows[0]) == REPORT_COLUMNS
    assert rows[1][0] == "4x5" and rows[1][1] == "20" and rows[1][6] == "2"
    assert float(rows[1][2]) == rep.row((4, 5)).mean()[0]
    # no feasible values: blank aggregates, infeasible count 2
    assert rows[2][2:6] == ["", "", "", ""] and rows[2][7] == "2"
