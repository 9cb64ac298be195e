import itertools

import numpy as np
import pytest

from evtblock.baselines import (
    BaselineError,
    BaselineRecord,
    BaselineRun,
    ComparisonError,
    EnumerationCapError,
    Strategy,
    compare_hv,
    enumerate_all,
    grid_counts,
    random_baseline,
    structured_grid,
    structured_points,
)
from evtblock.grid import generate_synthetic, global_max
from evtblock.mobo import OptimizerConfig, run
from evtblock.objectives import ProblemDefinition
from evtblock.pareto import dominates, hypervolume_2d, nondominated


def test_structured_1d_matches_published_points():
    pts = structured_points((200,), 20)
    assert [p[0] for p in pts] == list(range(2, 193, 10))


def test_structured_2d_appendix_grid():
    pts = structured_points((200, 200), 67)
    assert grid_counts(67, 2) == (8, 9)
    a = [2 + 25 * i for i in range(8)]
    b = [2 + 22 * i for i in range(9)]
    skipped = {(a[0], b[0]), (a[0], b[-1]), (a[-1], b[0]), (a[-1], b[-1]), (a[3], b[4])}
    expected = [p for p in itertools.product(a, b) if p not in skipped]
    assert pts == expected and len(pts) == 67


def test_structured_3d_counts():
    assert grid_counts(75, 3) == (5, 5, 3)
    pts = structured_points((50, 50, 50), 75)
    assert len(pts) == 75 == len(set(pts))
    assert all(1 <= v <= 50 for p in pts for v in p)
    assert sorted({p[2] for p in pts}) == [2, 18, 34]


def test_structured_trimming_order():
    # 2x2 grid asked for 3 points: one corner goes
    assert len(structured_points((10, 10), 3, (2, 2))) == 3
    # 3x3 grid asked for 4 points: corners go, then the center
    pts = structured_points((9, 9), 4, (3, 3))
    assert pts == [(2, 5), (5, 2), (5, 8), (8, 5)]


def test_structured_errors():
    with pytest.raises(BaselineError):
        structured_points((10,), 0)
    with pytest.raises(BaselineError):
        grid_counts(0, 2)
    with pytest.raises(BaselineError):
        structured_points((10, 10), 20, (2, 2))
    with pytest.raises(BaselineError):
        structured_points((3, 3), 10)


@pytest.fixture(scope="module")
def problem():
    dom = generate_synthetic((100, 500), 0.0, 5.0, seed=3)
    return ProblemDefinition(dom, global_max(dom), (40,), coupling=(1, 5))


def test_random_distinct_and_seeded(problem):
    a = random_baseline(problem, 20, seed=1)
    assert len({r.decision for r in a.records}) == 20
    assert [r.decision for r in a.records] == [r.decision for r in random_baseline(problem, 20, 1).records]
    assert [r.decision for r in a.records] != [r.decision for r in random_baseline(problem, 20, 2).records]
    traj = a.hv_trajectory((0.3, 0.3))
    assert np.all(np.diff(traj) >= 0)
    with pytest.raises(BaselineError):
        random_baseline(problem, 0, 1)
    with pytest.raises(BaselineError):
        random_baseline(problem, 41, 1)
    with pytest.raises(BaselineError):
        a.hypervolume()


def test_enumeration_cap():
    dom = generate_synthetic((50, 50, 50), 0.0, 1.0, seed=0)
    prob = ProblemDefinition(dom, global_max(dom), (50, 50, 50))
    with pytest.raises(EnumerationCapError):
        enumerate_all(prob)


def test_enumeration_front_against_mobo_and_random(problem):
    full = enumerate_all(problem)
    assert len(full.records) == 40 and full.strategy is Strategy.ENUMERATION
    res = run(problem, OptimizerConfig(window=5, tolerance=1e-5, seed=1))
    r = res.reference
    front = [rec.pair.point for rec in full.front()]
    for p in res.archive.points:
        assert not any(dominates(p, q) for q in front)
    assert full.hypervolume(r) >= res.final_hv - 1e-15
    everything = random_baseline(problem, 40, seed=9)
    assert [x.decision for x in everything.front()] == [x.decision for x in full.front()]
    # HV equals the sweep on the run's points: strategies differ only in selection
    assert full.hypervolume(r) == hypervolume_2d(full.points(), r)
    pts = full.points()
    assert sorted(map(tuple, pts[nondominated(pts)])) == sorted(front)


def test_workers_do_not_change_order(problem):
    problem.clear_cache()
    a = structured_grid(problem, 12, workers=3, cold_cache=True)
    b = structured_grid(problem, 12)
    assert [x.decision for x in a.records] == [x.decision for x in b.records]
    assert [x.pair for x in a.records] == [x.pair for x in b.records]


def test_compare_hv(problem):
    res = run(problem, OptimizerConfig(window=5, tolerance=1e-5, seed=1))
    rnd = random_baseline(problem, len(res.evaluations), seed=4)
    rows = compare_hv([rnd, rnd], res)
    assert [r.name for r in rows] == ["mobo", "random-1", "random-2"]
    assert rows[1].final_hv == rows[2].final_hv
    assert rows[1].pct_vs_mobo == pytest.approx(
        100 * (res.final_hv - rows[1].final_hv) / rows[1].final_hv)
    with pytest.raises(ComparisonError):
        compare_hv([rnd.with_reference((res.reference[0] + 0.1, res.reference[1]))], res)
    # a run made of exactly the optimizer's offered points scores 0%
    mirror = BaselineRun(Strategy.RANDOM, [
        BaselineRecord(e.decision, e.spec, e.pair) for e in res.evaluations if e.offered],
        budget=len(res.evaluations), reference=res.reference)
    assert compare_hv([mirror], res)[1].pct_vs_mobo == 0.0
