"""Prompt instantiation for all request shapes, and seeded benchmark-suite assembly.

Every instance bundles the instruction text, the rendered knowledge context,
the machine-readable plan, and the oracle's gold answer, so downstream scoring
never has to re-derive what was asked.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING

from . import oracle
from .condgen import ConditionPolicy, GenError, draw_condition_set, render_negated
from .oracle import (
    AND,
    OR,
    And,
    Condition,
    ConditionExpr,
    Diff,
    GoldAnswer,
    Or,
    QueryPlan,
    evaluate,
    expr_from_json,
    expr_to_json,
    gold_from_json,
    gold_to_json,
    plan_from_json,
    plan_to_json,
)
from .relation import Relation
from .seeding import derive_seed
from .structurer import StructuringLevel, render, render_partial

if TYPE_CHECKING:
    from .datasets import DatasetPack


class TemplateMismatchError(GenError):
    pass


class RequestType(Enum):
    RETRIEVAL = "retrieval"
    DELETION = "deletion"
    UPDATE = "update"
    SUPERLATIVE = "superlative"
    SUM = "sum"
    COUNT = "count"
    EXISTENCE = "existence"
    PROJECTION = "projection"


CORE_TYPES = (
    RequestType.RETRIEVAL,
    RequestType.DELETION,
    RequestType.UPDATE,
    RequestType.SUPERLATIVE,
    RequestType.SUM,
    RequestType.COUNT,
)
EXTENSION_TYPES = (RequestType.EXISTENCE, RequestType.PROJECTION)

# request types whose plans carry a single numeric/target attribute
TARGETED_TYPES = (RequestType.UPDATE, RequestType.SUPERLATIVE, RequestType.SUM)

TEMPLATES_PER_TYPE = 3


@dataclass(frozen=True)
class PromptTemplate:
    """One wording of one request type. The pattern must use {conditions}
    exactly once; {target}, {target_plural}, {targets}, {noun} and {nouns}
    are filled when present."""

    request_type: RequestType
    template_id: int
    pattern: str
    negated: bool = False

    def __post_init__(self):
        if self.pattern.count("{conditions}") != 1:
            raise TemplateMismatchError(
                f"template {self.request_type.value}/{self.template_id} must use "
                f"{{conditions}} exactly once"
            )


@dataclass(frozen=True)
class TemplatePack:
    """All templates and answer-format footers for one dataset."""

    patterns: dict[tuple[str, bool], tuple[PromptTemplate, ...]]
    footers: dict[str, str]

    def templates_for(self, request_type: RequestType, negated: bool = False) -> tuple[PromptTemplate, ...]:
        try:
            return self.patterns[(request_type.value, negated)]
        except KeyError:
            raise TemplateMismatchError(
                f"no templates for {request_type.value} (negated={negated})"
            ) from None

    def footer_for(self, request_type: RequestType) -> str:
        try:
            return self.footers[request_type.value]
        except KeyError:
            raise TemplateMismatchError(f"no answer footer for {request_type.value}") from None


def template_pack_from_json(text: str) -> TemplatePack:
    raw = json.loads(text)
    patterns: dict[tuple[str, bool], tuple[PromptTemplate, ...]] = {}
    for key, entries in raw.items():
        if key == "footers":
            continue
        negated = key.endswith("_negated")
        type_value = key[: -len("_negated")] if negated else key
        request_type = RequestType(type_value)
        if len(entries) != TEMPLATES_PER_TYPE:
            raise TemplateMismatchError(f"{key}: expected {TEMPLATES_PER_TYPE} templates, got {len(entries)}")
        patterns[(type_value, negated)] = tuple(
            PromptTemplate(request_type=request_type, template_id=i, pattern=p, negated=negated)
            for i, p in enumerate(entries)
        )
    return TemplatePack(patterns=patterns, footers=dict(raw.get("footers", {})))


@dataclass(frozen=True)
class RequestInstance:
    """One fully rendered benchmark prompt with its plan and gold answer."""

    id: str
    dataset: str
    request_type: RequestType
    template_id: int
    connective: str
    n_conditions: int
    level: StructuringLevel
    portion: float | None
    negated: bool
    target: tuple[str, ...]
    expr: ConditionExpr
    plan: QueryPlan
    prompt: str
    context: str
    pre_instruction: str | None
    gold: GoldAnswer
    entity_keys: tuple[str, ...]
    mode: str = "surrogate"
    resamples: int = 0


def expr_phrase(rel: Relation, expr: ConditionExpr) -> str:
    """Natural-language join of an expression's rendered condition phrases."""
    if isinstance(expr, Condition):
        return expr.rendered
    if isinstance(expr, And):
        return " and ".join(expr_phrase(rel, c) for c in expr.children)
    if isinstance(expr, Or):
        return " or ".join(expr_phrase(rel, c) for c in expr.children)
    if isinstance(expr, Diff):
        left = expr_phrase(rel, expr.left)
        if isinstance(expr.right, Condition):
            return f"{left} and {render_negated(rel, expr.right)}"
        return f"{left} and not ({expr_phrase(rel, expr.right)})"
    raise GenError(f"unknown expression {expr!r}")


def _plural(phrase: str) -> str:
    return phrase if phrase.endswith("s") else phrase + "s"


def build_plan(request_type: RequestType, expr: ConditionExpr, target: tuple[str, ...],
               rel: Relation, negated: bool = False) -> QueryPlan:
    if request_type in TARGETED_TYPES:
        if len(target) != 1:
            raise TemplateMismatchError(f"{request_type.value} needs exactly one target attribute")
    elif request_type is RequestType.PROJECTION:
        if not target:
            raise TemplateMismatchError("projection needs at least one target attribute")
    elif target:
        raise TemplateMismatchError(f"{request_type.value} takes no target attribute")

    if request_type is RequestType.RETRIEVAL:
        return oracle.Retrieve(expr)
    if request_type is RequestType.DELETION:
        return oracle.Delete(expr)
    if request_type is RequestType.UPDATE:
        return oracle.Update(target_attr=target[0], replacement="N/A", expr=expr)
    if request_type is RequestType.SUPERLATIVE:
        return oracle.Superlative(target_attr=target[0], direction="max",
                                  tiebreak_attr=rel.key_attr.name, expr=expr)
    if request_type is RequestType.SUM:
        return oracle.Sum(target_attr=target[0], expr=expr)
    if request_type is RequestType.COUNT:
        return oracle.Count(expr)
    if request_type is RequestType.EXISTENCE:
        return oracle.Exists(expr, negated=negated)
    return oracle.Project(tuple(target), expr)


def _fill_pattern(pattern: str, *, conditions: str, target: tuple[str, ...],
                  rel: Relation, noun: str, nouns: str) -> str:
    out = pattern.replace("{conditions}", conditions)
    out = out.replace("{noun}", noun).replace("{nouns}", nouns)
    if target:
        phrases = [rel.attribute(a).canonical_phrase for a in target]
        out = out.replace("{target}", phrases[0])
        out = out.replace("{target_plural}", _plural(phrases[0]))
        out = out.replace("{targets}", " and ".join(phrases))
    if "{" in out and "}" in out:
        leftovers = [s for s in ("{target}", "{target_plural}", "{targets}") if s in out]
        if leftovers:
            raise TemplateMismatchError(f"pattern needs a target attribute for slots {leftovers}")
    return out


def _auto_id(payload: str) -> str:
    return hashlib.blake2b(payload.encode("utf-8"), digest_size=6).hexdigest()


def instantiate(
    request_type: RequestType,
    template: PromptTemplate,
    expr: ConditionExpr,
    target: tuple[str, ...],
    rel: Relation,
    level: StructuringLevel,
    seed: int,
    *,
    pack: "DatasetPack",
    portion: float | None = None,
    connective: str = AND,
    mode: str = "surrogate",
    pre_instruction: str | None = None,
    instance_id: str | None = None,
    resamples: int = 0,
) -> RequestInstance:
    """Render one benchmark instance: fill the template, render the context at
    the requested level, and compute the gold answer."""
    if template.request_type is not request_type:
        raise TemplateMismatchError(
            f"template is for {template.request_type.value}, not {request_type.value}"
        )
    plan = build_plan(request_type, expr, target, rel, negated=template.negated)
    gold = evaluate(plan, rel)

    conditions_text = expr_phrase(rel, expr)
    body = _fill_pattern(
        template.pattern,
        conditions=conditions_text,
        target=target,
        rel=rel,
        noun=pack.entity_noun,
        nouns=pack.entity_noun_plural,
    )
    prompt = body + "\n" + pack.templates.footer_for(request_type)

    if portion is None:
        context = render(rel, level, seed, pack.bank)
    else:
        context = render_partial(rel, portion, seed, pack.bank)

    if instance_id is None:
        instance_id = _auto_id(json.dumps(
            [pack.name, request_type.value, template.template_id, plan_to_json(plan), level.value],
            sort_keys=True,
        ))

    return RequestInstance(
        id=instance_id,
        dataset=pack.name,
        request_type=request_type,
        template_id=template.template_id,
        connective=connective,
        n_conditions=len(oracle.leaf_conditions(expr)),
        level=level,
        portion=portion,
        negated=template.negated,
        target=tuple(target),
        expr=expr,
        plan=plan,
        prompt=prompt,
        context=context,
        pre_instruction=pre_instruction,
        gold=gold,
        entity_keys=rel.keys(),
        mode=mode,
        resamples=resamples,
    )


def make_pre_instruction(noun_plural: str, column_phrases: tuple[str, ...] | None = None) -> str:
    """Instruction asking the model to lay the facts out as a table first."""
    if not noun_plural:
        raise GenError("dataset has no entity noun configured")
    if column_phrases:
        return f"Create a table of {noun_plural} with columns: {', '.join(column_phrases)}."
    return f"Create a table of {noun_plural}."


@dataclass(frozen=True)
class SuiteConfig:
    """Grid of a suite: pairs x connectives x templates x levels x condition counts."""

    pair_count: int = 100
    request_types: tuple[RequestType, ...] = CORE_TYPES
    connectives: tuple[str, ...] = (AND, OR)
    n_conditions: tuple[int, ...] = (2,)
    levels: tuple[StructuringLevel, ...] = (StructuringLevel.TABLE,)
    portions: tuple[float | None, ...] = (None,)
    seed: int = 0
    min_support: int = 1
    max_resample: int = 1000
    mode: str = "surrogate"

    def instances_per_type(self, request_type: RequestType) -> int:
        variants = 2 if request_type is RequestType.EXISTENCE else 1
        return (
            self.pair_count
            * len(self.connectives)
            * TEMPLATES_PER_TYPE
            * len(self.levels)
            * len(self.n_conditions)
            * len(self.portions)
            * variants
        )


def generate_suite(rel: Relation, config: SuiteConfig, pack: "DatasetPack") -> list[RequestInstance]:
    """Deterministic suite in (type, count, level, portion, pair, connective,
    template) order. Condition pairs are shared across connectives, templates,
    levels and portions so wording effects are isolated from content effects.
    Existence expands into an original and a negated instance per slot."""
    instances: list[RequestInstance] = []
    seq = 0
    for request_type in config.request_types:
        target = pack.target_for(request_type)
        for n in config.n_conditions:
            policy = ConditionPolicy(
                allowed_ops=pack.allowed_ops,
                n_conditions=n,
                connectives=config.connectives,
                min_support=config.min_support,
                max_resample=config.max_resample,
            )
            for pair in range(config.pair_count):
                draw_seed = derive_seed(config.seed, "conditions", pack.name, request_type.value, n, pair)
                exprs, _, resamples = draw_condition_set(rel, policy, config.connectives, draw_seed)
                context_seed = derive_seed(config.seed, "context", pack.name, request_type.value, n, pair)
                for level in config.levels:
                    for portion in config.portions:
                        for connective in config.connectives:
                            expr = exprs[connective]
                            negated_variants = (False, True) if request_type is RequestType.EXISTENCE else (False,)
                            for negated in negated_variants:
                                for template in pack.templates.templates_for(request_type, negated):
                                    suffix = "-neg" if negated else ""
                                    instance_id = (
                                        f"{seq:06d}-{pack.name}-{request_type.value}{suffix}"
                                        f"-{connective}-t{template.template_id}"
                                    )
                                    instances.append(
                                        instantiate(
                                            request_type,
                                            template,
                                            expr,
                                            target,
                                            rel,
                                            level,
                                            context_seed,
                                            pack=pack,
                                            portion=portion,
                                            connective=connective,
                                            mode=config.mode,
                                            pre_instruction=(
                                                make_pre_instruction(pack.entity_noun_plural)
                                                if config.mode == "two_turn" else None
                                            ),
                                            instance_id=instance_id,
                                            resamples=resamples,
                                        )
                                    )
                                    seq += 1
    return instances


# ---------------------------------------------------------------------------
# Suite serialization (JSONL, one instance per line, canonical key order)
# ---------------------------------------------------------------------------


def instance_to_json(instance: RequestInstance) -> dict:
    return {
        "connective": instance.connective,
        "context": instance.context,
        "dataset": instance.dataset,
        "entity_keys": list(instance.entity_keys),
        "expr": expr_to_json(instance.expr),
        "gold": gold_to_json(instance.gold),
        "id": instance.id,
        "level": instance.level.value,
        "mode": instance.mode,
        "n_conditions": instance.n_conditions,
        "negated": instance.negated,
        "plan": plan_to_json(instance.plan),
        "portion": instance.portion,
        "pre_instruction": instance.pre_instruction,
        "prompt": instance.prompt,
        "request_type": instance.request_type.value,
        "resamples": instance.resamples,
        "target": list(instance.target),
        "template_id": instance.template_id,
    }


def instance_from_json(obj: dict) -> RequestInstance:
    return RequestInstance(
        id=obj["id"],
        dataset=obj["dataset"],
        request_type=RequestType(obj["request_type"]),
        template_id=obj["template_id"],
        connective=obj["connective"],
        n_conditions=obj["n_conditions"],
        level=StructuringLevel(obj["level"]),
        portion=obj["portion"],
        negated=obj["negated"],
        target=tuple(obj["target"]),
        expr=expr_from_json(obj["expr"]),
        plan=plan_from_json(obj["plan"]),
        prompt=obj["prompt"],
        context=obj["context"],
        pre_instruction=obj["pre_instruction"],
        gold=gold_from_json(obj["gold"]),
        entity_keys=tuple(obj["entity_keys"]),
        mode=obj["mode"],
        resamples=obj.get("resamples", 0),
    )


def dump_suite(instances: list[RequestInstance]) -> str:
    return "".join(json.dumps(instance_to_json(i), sort_keys=True) + "\n" for i in instances)


def load_suite(text: str) -> list[RequestInstance]:
    return [instance_from_json(json.loads(line)) for line in text.splitlines() if line.strip()]
