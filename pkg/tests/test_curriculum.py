from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ogr.curriculum import (
    CurriculumSpec,
    OutOfRange,
    ParseFailure,
    TaskSet,
    baseline_curriculum,
    episode_counts,
    hardest_task,
    merge,
    parse_curriculum,
    print_curriculum,
    schedule,
    single_task,
)

TS = TaskSet(("empty", "low", "medium", "high"), ("slow", "normal", "aggressive"))


def exact_counts(spec, n):
    """Largest remainder with exact rationals; ties to the lexicographically lower task."""
    ws = {t: Fraction(w) for t, w in spec.tasks}
    total = sum(ws.values())
    quota = {t: n * w / total for t, w in ws.items()}
    base = {t: q.numerator // q.denominator for t, q in quota.items()}
    left = n - sum(base.values())
    for t in sorted(ws, key=lambda t: (-(quota[t] - base[t]), t))[:left]:
        base[t] += 1
    return base


specs = st.lists(
    st.tuples(st.tuples(st.integers(0, 3), st.integers(0, 2)), st.integers(1, 20)),
    min_size=1, max_size=12, unique_by=lambda x: x[0],
).map(lambda xs: CurriculumSpec(tuple(sorted((t, float(w)) for t, w in xs))))


@settings(max_examples=200, deadline=None)
@given(specs, st.integers(1, 500))
def test_counts_match_exact_apportionment(spec, n):
    counts = episode_counts(spec, n)
    assert sum(counts.values()) == n
    assert counts == exact_counts(spec, n)


@settings(max_examples=100, deadline=None)
@given(specs, st.integers(1, 300), st.integers(0, 2**32 - 1))
def test_schedule_is_a_permutation_of_the_counts(spec, n, seed):
    seq = schedule(spec, n, seed)
    assert Counter(seq) == Counter({t: c for t, c in episode_counts(spec, n).items() if c})
    assert seq == schedule(spec, n, seed)


def test_equal_weights_tie_goes_to_lower_task():
    spec = CurriculumSpec((((0, 0), 1.0), ((1, 0), 1.0), ((2, 0), 1.0)))
    assert episode_counts(spec, 4) == {(0, 0): 2, (1, 0): 1, (2, 0): 1}
    assert episode_counts(spec, 5) == {(0, 0): 2, (1, 0): 2, (2, 0): 1}


def test_baseline_ratios():
    spec = baseline_curriculum(TS)
    counts = episode_counts(spec, 1000)
    dens = [sum(c for (i, _), c in counts.items() if i == k) for k in range(4)]
    modes = [sum(c for (_, j), c in counts.items() if j == k) for k in range(3)]
    assert dens == [100, 200, 200, 500]
    assert modes == [200, 200, 600]
    with pytest.raises(ValueError):
        baseline_curriculum(TS, (1, 2, 3))


def test_parse_print_round_trip():
    text = "some prose\n```CURRICULUM\n(0, 1) weight 2\n(3,2)\n# note\n(0, 1) weight 0.5\n```\ntrailing"
    spec = parse_curriculum(text, TS, stage=2)
    assert spec.tasks == (((0, 1), 2.5), ((3, 2), 1.0)) and spec.stage == 2
    printed = print_curriculum(spec)
    assert parse_curriculum(printed, TS, 2) == spec
    assert print_curriculum(parse_curriculum(printed, TS, 2)) == printed


@pytest.mark.parametrize("text,exc", [
    ("no block", ParseFailure),
    ("```CURRICULUM\n```", ParseFailure),
    ("```CURRICULUM\n(0, 0) weight -1\n```", ParseFailure),
    ("```CURRICULUM\n(0, 0) weight 0\n```", ParseFailure),
    ("```CURRICULUM\n(0 0)\n```", ParseFailure),
    ("```CURRICULUM\n(4, 0)\n```", OutOfRange),
    ("```CURRICULUM\n(0, -1)\n```", OutOfRange),
    ("```CURRICULUM\n(99999999999999999999, 0)\n```", ParseFailure),
])
def test_parse_failures(text, exc):
    with pytest.raises(exc):
        parse_curriculum(text, TS)


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=120))
def test_parse_is_total(body):
    try:
        spec = parse_curriculum(f"```CURRICULUM\n{body}\n```", TS)
    except ParseFailure:
        return
    assert all(TS.contains(t) for t in spec.task_ids)


def hardest_oracle(spec):
    top = max(i for (i, _), _ in spec.tasks)
    return top, max(j for (i, j), _ in spec.tasks if i == top)


def test_hardest_task_matches_oracle():
    rng = np.random.default_rng(3)
    for _ in range(100):
        all_tasks = TS.tasks()
        pick = rng.choice(len(all_tasks), size=int(rng.integers(1, len(all_tasks) + 1)), replace=False)
        spec = CurriculumSpec(tuple(sorted((all_tasks[k], float(rng.integers(1, 9))) for k in pick)))
        assert hardest_task(spec) == hardest_oracle(spec)


def test_merge_and_hardest_of_merge():
    a = CurriculumSpec((((0, 2), 1.0), ((1, 0), 1.0)), stage=1)
    b = CurriculumSpec((((1, 0), 2.0), ((2, 1), 1.0)), stage=1)
    m = merge([a, b])
    assert dict(m.tasks) == {(0, 2): 1.0, (1, 0): 3.0, (2, 1): 1.0}
    assert hardest_task(m) == (2, 1)
    assert hardest_task(single_task((3, 0))) == (3, 0)


def test_spec_validation():
    with pytest.raises(ValueError):
        CurriculumSpec(())
    with pytest.raises(ValueError):
        CurriculumSpec((((0, 0), 0.0),))
    with pytest.raises(ValueError):
        schedule(single_task((0, 0)), 0, 1)
