import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ogr.rewardlang import (
    AugmentationProposal,
    CompiledProgram,
    LimitError,
    MissingVariable,
    ObservationRegistry,
    ParseError,
    ProposalStatus,
    check,
    evaluate,
    initial_registry,
    parse_program,
    print_program,
)
from ogr.rewardlang.lang import MAX_DEPTH, MAX_TERMS, SATURATION
from ogr.sim.traffic import IMPLEMENTABLE

from programs import REGISTERED, UNREGISTERED, random_env, random_program

REG = initial_registry(IMPLEMENTABLE)


def test_simple_program_evaluates_by_hand():
    p = parse_program("term progress weight 0.5 = delta_s\nterm crash weight -10 = collision_flag\n")
    total, parts = evaluate(p, {"delta_s": 2.0, "collision_flag": 1.0})
    assert parts == {"progress": 1.0, "crash": -10.0}
    assert total == -9.0


def test_precedence_and_comparisons():
    p = parse_program("term a weight 1 = 1 + 2 * 3 - 4 / 2\n"
                      "term b weight 1 = if speed > 3 then 1 else -1\n"
                      "term c weight 1 = clip(speed, 5, 0) + min(1, 2, -3) + max(1, 2) + abs(-2)\n")
    _, parts = evaluate(p, {"speed": 4.0})
    assert parts == {"a": 5.0, "b": 1.0, "c": 4.0 - 3.0 + 2.0 + 2.0}


def test_saturating_arithmetic():
    p = parse_program("term d weight 1 = 1 / speed\nterm e weight 1 = exp(speed * 1000)\nterm f weight 1e300 = 1e300\n")
    total, parts = evaluate(p, {"speed": 0.0})
    assert evaluate(p, {"speed": 1.0})[1]["e"] == SATURATION
    assert parts["d"] == 0.0
    assert parts["e"] == 1.0
    assert parts["f"] == SATURATION and total == SATURATION


def test_comments_and_blank_lines():
    p = parse_program("# header\n\nterm x weight 2 = speed  # trailing\n")
    assert print_program(p) == "term x weight 2.0 = speed\n"


@pytest.mark.parametrize("src,line,col", [
    ("term x weight 1 = speed +\n", 1, 26),
    ("term x weight 1 = speed\nterm y weigh 1 = 2\n", 2, 8),
    ("term x weight 1 = $\n", 1, 19),
    ("term x weight 1 = 1\nterm x weight 1 = 2\n", 2, 1),
    ("term if weight 1 = 1\n", 1, 6),
    ("term x weight 1 = clip(1, 2)\n", 1, 29),
    ("", 1, 1),
    ("# only a comment\n\n", 1, 1),
])
def test_parse_errors_carry_positions(src, line, col):
    with pytest.raises(ParseError) as e:
        parse_program(src)
    assert (e.value.line, e.value.col) == (line, col)


def test_limits():
    deep = "term x weight 1 = " + "abs(" * (MAX_DEPTH + 1) + "1" + ")" * (MAX_DEPTH + 1) + "\n"
    with pytest.raises(LimitError):
        parse_program(deep)
    with pytest.raises(LimitError):
        parse_program("term x weight 1 = " + "(" * 5000 + "1" + ")" * 5000)
    many = "".join(f"term t{k} weight 1 = 1\n" for k in range(MAX_TERMS + 1))
    with pytest.raises(LimitError):
        parse_program(many)


def test_missing_variable_raises_named_error():
    p = parse_program("term x weight 1 = ttc_front\n")
    with pytest.raises(MissingVariable) as e:
        evaluate(p, {})
    assert e.value.args[0] == "ttc_front"
    assert evaluate(p, {}, suspended={"x"}) == (0.0, {"x": 0.0})


def test_print_parse_fixpoint_on_generated_programs():
    rng = np.random.default_rng(0)
    for _ in range(300):
        p = random_program(rng)
        text = print_program(p)
        q = parse_program(text)
        assert print_program(q) == text
        assert q == parse_program(print_program(q))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_generated_programs_evaluate_finite(seed):
    rng = np.random.default_rng(seed)
    p = parse_program(print_program(random_program(rng)))
    total, parts = evaluate(p, random_env(rng))
    assert math.isfinite(total) and all(math.isfinite(v) for v in parts.values())


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=200))
def test_parser_is_total_on_arbitrary_text(text):
    try:
        p = parse_program(text)
    except ParseError:
        return
    assert print_program(parse_program(print_program(p))) == print_program(p)


def test_check_partitions_terms_and_proposes_once():
    p = parse_program("term a weight 1 = speed\n"
                      "term b weight 1 = ttc_front + jerk\n"
                      "term c weight 1 = ttc_front * speed\n")
    res = check(p, REG, stage=3, branch=1)
    assert res.evaluable == ("a",) and res.suspended == ("b", "c")
    assert [(x.variable, x.term) for x in res.proposals] == [("jerk", "b"), ("ttc_front", "b")]
    assert all(x.status is ProposalStatus.PENDING and x.stage == 3 for x in res.proposals)
    assert not res.ok


def test_every_unregistered_reference_yields_a_proposal():
    rng = np.random.default_rng(5)
    for _ in range(300):
        p = random_program(rng, REGISTERED + UNREGISTERED)
        res = check(p, REG)
        unknown = p.variables() - REG.names
        assert {x.variable for x in res.proposals} == unknown
        assert set(res.evaluable) | set(res.suspended) == set(p.names)
        env = random_env(rng, REGISTERED)
        total, _ = CompiledProgram(p, res.suspended)(env)
        assert math.isfinite(total)


def test_registry_versioning_and_round_trip():
    from ogr.rewardlang import Entry

    r2 = REG.with_entries([Entry("ttc_front", "s", "time to collision")])
    assert r2.version == REG.version + 1 and "ttc_front" in r2
    assert ObservationRegistry.from_json(r2.to_json()) == r2
    with pytest.raises(ValueError):
        REG.with_entries([Entry("speed", "m/s", "dup")])


def test_proposal_round_trip():
    a = AugmentationProposal("jerk", "smooth", 2, "why", ProposalStatus.APPROVED, 1)
    assert AugmentationProposal.from_dict(a.to_dict()) == a
