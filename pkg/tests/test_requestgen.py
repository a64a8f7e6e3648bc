from __future__ import annotations

import json

import pytest

from tabbench.condgen import GenError
from tabbench.oracle import AND, EQ, OR, And, Condition, Diff, Or, evaluate, plan_from_json
from tabbench.requestgen import (
    CORE_TYPES,
    PromptTemplate,
    RequestType,
    SuiteConfig,
    TemplateMismatchError,
    dump_suite,
    expr_phrase,
    generate_suite,
    instance_from_json,
    instance_to_json,
    instantiate,
    load_suite,
    make_pre_instruction,
)
from tabbench.structurer import StructuringLevel, render

from conftest import eq, tiny_soccer_pack


@pytest.fixture
def pack(f2):
    return tiny_soccer_pack(f2)


def retrieval_expr():
    return And((
        Condition("Nationality", EQ, "Argentina", "nationality is Argentina"),
        Condition("Number", EQ, "10", "number is 10"),
    ))


def test_template_pack_shape(pack):
    for request_type in RequestType:
        templates = pack.templates.templates_for(request_type)
        assert len(templates) == 3
        assert [t.template_id for t in templates] == [0, 1, 2]
        assert pack.templates.footer_for(request_type)
    assert len(pack.templates.templates_for(RequestType.EXISTENCE, negated=True)) == 3


def test_template_requires_conditions_slot():
    with pytest.raises(TemplateMismatchError):
        PromptTemplate(RequestType.RETRIEVAL, 0, "Give me everything.")
    with pytest.raises(TemplateMismatchError):
        PromptTemplate(RequestType.RETRIEVAL, 0, "{conditions} and {conditions}")


def test_instantiate_retrieval_prompt(pack, f2):
    template = pack.templates.templates_for(RequestType.RETRIEVAL)[0]
    expr = retrieval_expr()
    instance = instantiate(RequestType.RETRIEVAL, template, expr, (), f2,
                           StructuringLevel.TABLE, 5, pack=pack)
    assert instance.prompt.startswith("Give me the soccer players with")
    for leaf in ("nationality is Argentina", "number is 10"):
        assert leaf in instance.prompt
    assert instance.context == render(f2, StructuringLevel.TABLE, 5, pack.bank)
    assert instance.gold == evaluate(instance.plan, f2)
    assert instance.entity_keys == f2.keys()
    assert "ANSWER:" in instance.prompt


def test_instantiate_negated_existence_prompt(pack, f2):
    template = pack.templates.templates_for(RequestType.EXISTENCE, negated=True)[0]
    instance = instantiate(RequestType.EXISTENCE, template, retrieval_expr(), (), f2,
                           StructuringLevel.TABLE, 0, pack=pack)
    assert instance.prompt.startswith("Is it true that there are no")
    assert instance.plan.negated is True
    assert instance.negated is True


def test_instantiate_update_requires_target(pack, f2):
    template = pack.templates.templates_for(RequestType.UPDATE)[0]
    with pytest.raises(TemplateMismatchError):
        instantiate(RequestType.UPDATE, template, retrieval_expr(), (), f2,
                    StructuringLevel.TABLE, 0, pack=pack)


def test_instantiate_rejects_unexpected_target(pack, f2):
    template = pack.templates.templates_for(RequestType.COUNT)[0]
    with pytest.raises(TemplateMismatchError):
        instantiate(RequestType.COUNT, template, retrieval_expr(), ("Number",), f2,
                    StructuringLevel.TABLE, 0, pack=pack)


def test_instantiate_type_template_mismatch(pack, f2):
    template = pack.templates.templates_for(RequestType.DELETION)[0]
    with pytest.raises(TemplateMismatchError):
        instantiate(RequestType.RETRIEVAL, template, retrieval_expr(), (), f2,
                    StructuringLevel.TABLE, 0, pack=pack)


def test_update_template_zero_wording(pack, f2):
    template = pack.templates.templates_for(RequestType.UPDATE)[0]
    instance = instantiate(RequestType.UPDATE, template, retrieval_expr(), ("Number",), f2,
                           StructuringLevel.TABLE, 0, pack=pack)
    assert instance.prompt.startswith("Replace the uniform numbers of soccer players to N/A if")


def test_expr_phrase_connectives(f2):
    a, b = eq("Nationality", "Argentina"), eq("Number", "10")
    assert expr_phrase(f2, And((a, b))) == "nationality is Argentina and number is 10"
    assert expr_phrase(f2, Or((a, b))) == "nationality is Argentina or number is 10"
    diff = Diff(
        Condition("Number", EQ, "10", "uniform number is 10"),
        Condition("Nationality", EQ, "Argentina", "nationality is Argentina"),
    )
    assert expr_phrase(f2, diff) == "uniform number is 10 and nationality is not Argentina"


def test_pre_instruction_variants(pack):
    assert make_pre_instruction("soccer players") == "Create a table of soccer players."
    with_columns = make_pre_instruction("movies", ("movie title", "director name", "movie length"))
    assert with_columns == "Create a table of movies with columns: movie title, director name, movie length."
    with pytest.raises(GenError):
        make_pre_instruction("")


def test_suite_size_single_slot(pack, f2):
    config = SuiteConfig(pair_count=1, request_types=(RequestType.RETRIEVAL,),
                         connectives=(AND,), seed=1)
    assert len(generate_suite(f2, config, pack)) == 3


def test_suite_size_formula_over_grid(pack, f2):
    grids = [
        dict(pair_count=2, request_types=(RequestType.RETRIEVAL, RequestType.COUNT),
             connectives=(AND, OR), levels=(StructuringLevel.TABLE, StructuringLevel.NATURAL)),
        dict(pair_count=1, request_types=(RequestType.EXISTENCE,), connectives=(AND,)),
        dict(pair_count=2, request_types=(RequestType.SUM,), connectives=(OR,),
             n_conditions=(1, 2, 3)),
        dict(pair_count=1, request_types=(RequestType.RETRIEVAL,), connectives=(AND,),
             portions=(0.0, 0.5, 1.0)),
    ]
    for grid in grids:
        config = SuiteConfig(seed=3, **grid)
        suite = generate_suite(f2, config, pack)
        expected = sum(config.instances_per_type(t) for t in config.request_types)
        assert len(suite) == expected


def test_ablation_grid_size(pack, f2):
    # conditions 1..3 over the three eligible attributes; or-joins keep support
    config = SuiteConfig(pair_count=10, request_types=(RequestType.RETRIEVAL,),
                         connectives=(OR,), n_conditions=(1, 2, 3), seed=5)
    suite = generate_suite(f2, config, pack)
    assert len(suite) == 10 * 1 * 3 * 3


def test_suite_deterministic_serialization(pack, f2):
    config = SuiteConfig(pair_count=2, request_types=(RequestType.RETRIEVAL, RequestType.EXISTENCE),
                         seed=21)
    first = dump_suite(generate_suite(f2, config, pack))
    second = dump_suite(generate_suite(f2, config, pack))
    assert first == second


def test_templates_share_conditions_across_wordings(pack, f2):
    config = SuiteConfig(pair_count=2, request_types=(RequestType.RETRIEVAL,), seed=9)
    suite = generate_suite(f2, config, pack)
    # consecutive triples are the three wordings of one (pair, connective) slot
    for start in range(0, len(suite), 3):
        triple = suite[start : start + 3]
        assert {i.template_id for i in triple} == {0, 1, 2}
        assert len({i.expr for i in triple}) == 1
        assert len({i.prompt for i in triple}) == 3


def test_gold_reproducible_from_serialized_plan(pack, f2):
    config = SuiteConfig(pair_count=2, request_types=CORE_TYPES, seed=2)
    suite = generate_suite(f2, config, pack)
    for line in dump_suite(suite).splitlines():
        payload = json.loads(line)
        plan = plan_from_json(payload["plan"])
        from tabbench.oracle import gold_to_json

        assert gold_to_json(evaluate(plan, f2)) == payload["gold"]


def test_instance_json_round_trip(pack, f2):
    config = SuiteConfig(pair_count=1, request_types=(RequestType.PROJECTION, RequestType.EXISTENCE),
                         seed=6)
    for instance in generate_suite(f2, config, pack):
        assert instance_from_json(instance_to_json(instance)) == instance


def test_suite_text_round_trip(pack, f2):
    config = SuiteConfig(pair_count=1, request_types=(RequestType.SUPERLATIVE,), seed=4)
    suite = generate_suite(f2, config, pack)
    assert load_suite(dump_suite(suite)) == suite


def test_suite_ordering_matches_ids(pack, f2):
    config = SuiteConfig(pair_count=2, request_types=(RequestType.RETRIEVAL, RequestType.COUNT), seed=3)
    suite = generate_suite(f2, config, pack)
    ids = [i.id for i in suite]
    assert ids == sorted(ids)


def test_two_turn_mode_sets_pre_instruction(pack, f2):
    config = SuiteConfig(pair_count=1, request_types=(RequestType.RETRIEVAL,),
                         connectives=(AND,), seed=8, mode="two_turn")
    suite = generate_suite(f2, config, pack)
    assert all(i.mode == "two_turn" for i in suite)
    assert all(i.pre_instruction == "Create a table of soccer players." for i in suite)


def test_ablation_grid_reference_arithmetic():
    """10 pairs x {or} x 3 templates x condition counts 1..5 = 150 instances,
    on the full builtin pack whose five non-key attributes support n=5."""
    from tabbench.datasets import load_pack
    from tabbench.relation import sample_entities

    pack = load_pack("soccer")
    rel = sample_entities(pack.relation, 100, 4)
    config = SuiteConfig(pair_count=10, request_types=(RequestType.RETRIEVAL,),
                         connectives=(OR,), n_conditions=(1, 2, 3, 4, 5), seed=12)
    suite = generate_suite(rel, config, pack)
    assert len(suite) == 150
    assert {i.n_conditions for i in suite} == {1, 2, 3, 4, 5}
