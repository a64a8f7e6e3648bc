"""Relational query evaluation producing gold answers for every request shape.

Two evaluators live here on purpose. `evaluate` is the production path built on
set algebra over key sets; `brute_force_reference` re-derives every answer with
a plain row-by-row scan and no shared predicate or aggregation code, so the two
can be differenced against each other in tests.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .relation import DuplicateKeyError, Relation, Row, UnknownAttributeError, normalize, parse_number

EQ = "eq"
GT = "gt"
LT = "lt"
CONTAINS = "contains"
OPS = (EQ, GT, LT, CONTAINS)

AND = "and"
OR = "or"
DIFF = "diff"
CONNECTIVES = (AND, OR, DIFF)


class PlanError(Exception):
    """Query plan incompatible with the relation it runs against."""


class PlanTypeError(PlanError):
    pass


class PlanAttributeError(PlanError):
    pass


# ---------------------------------------------------------------------------
# Condition expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Condition:
    """Atomic predicate over one attribute, with its natural-language phrase."""

    attr: str
    op: str
    value: Union[str, float]
    rendered: str

    def __post_init__(self):
        if self.op not in OPS:
            raise PlanError(f"unknown condition operator {self.op!r}")
        if not self.rendered:
            raise PlanError("condition must carry a rendered phrase")


@dataclass(frozen=True)
class And:
    children: tuple["ConditionExpr", ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise PlanError("and-node needs at least two children")


@dataclass(frozen=True)
class Or:
    children: tuple["ConditionExpr", ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise PlanError("or-node needs at least two children")


@dataclass(frozen=True)
class Diff:
    """Set difference: rows satisfying `left` and not `right` (a AND NOT b)."""

    left: "ConditionExpr"
    right: "ConditionExpr"


ConditionExpr = Union[Condition, And, Or, Diff]


def leaf_conditions(expr: ConditionExpr) -> list[Condition]:
    if isinstance(expr, Condition):
        return [expr]
    if isinstance(expr, (And, Or)):
        out: list[Condition] = []
        for child in expr.children:
            out.extend(leaf_conditions(child))
        return out
    return leaf_conditions(expr.left) + leaf_conditions(expr.right)


# ---------------------------------------------------------------------------
# Query plans
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Retrieve:
    expr: ConditionExpr


@dataclass(frozen=True)
class Delete:
    expr: ConditionExpr


@dataclass(frozen=True)
class Update:
    target_attr: str
    replacement: str
    expr: ConditionExpr


@dataclass(frozen=True)
class Count:
    expr: ConditionExpr


@dataclass(frozen=True)
class Sum:
    target_attr: str
    expr: ConditionExpr


@dataclass(frozen=True)
class Superlative:
    target_attr: str
    direction: str  # "max" | "min"
    tiebreak_attr: str
    expr: ConditionExpr

    def __post_init__(self):
        if self.direction not in ("max", "min"):
            raise PlanError(f"superlative direction must be max or min, got {self.direction!r}")


@dataclass(frozen=True)
class Exists:
    expr: ConditionExpr
    negated: bool = False


@dataclass(frozen=True)
class Project:
    attrs: tuple[str, ...]
    expr: ConditionExpr

    def __post_init__(self):
        if not self.attrs:
            raise PlanError("projection needs at least one attribute")


QueryPlan = Union[Retrieve, Delete, Update, Count, Sum, Superlative, Exists, Project]


# ---------------------------------------------------------------------------
# Gold answers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EntitySet:
    keys: frozenset[str]
    degenerate: bool = False  # superlative over an empty satisfying set


@dataclass(frozen=True)
class TupleSet:
    tuples: frozenset[tuple[str, ...]]


@dataclass(frozen=True)
class RelationSnapshot:
    relation: Relation


@dataclass(frozen=True)
class Number:
    value: float


@dataclass(frozen=True)
class Witnessed:
    """Existence result. `value` is the un-negated existence boolean; the
    witnesses are the satisfying keys, so value is true iff witnesses exist.
    Negated questions are flipped at scoring time, keeping this invariant."""

    value: bool
    witnesses: frozenset[str]


GoldAnswer = Union[EntitySet, TupleSet, RelationSnapshot, Number, Witnessed]


# ---------------------------------------------------------------------------
# Set-algebra evaluator (production path)
# ---------------------------------------------------------------------------


def _attr(rel: Relation, name: str):
    try:
        return rel.attribute(name)
    except UnknownAttributeError as e:
        raise PlanAttributeError(str(e)) from None


def _check_condition(cond: Condition, rel: Relation) -> None:
    spec = _attr(rel, cond.attr)
    if cond.op in (GT, LT):
        if spec.kind != "numeric":
            raise PlanTypeError(f"{cond.op} needs a numeric attribute, {cond.attr!r} is {spec.kind}")
        if _literal_number(cond.value) is None:
            raise PlanTypeError(f"{cond.op} literal {cond.value!r} is not numeric")
    if cond.op == CONTAINS and spec.kind == "numeric":
        raise PlanTypeError(f"contains is not defined on numeric attribute {cond.attr!r}")
    if cond.op == EQ and spec.kind == "numeric" and _literal_number(cond.value) is None:
        raise PlanTypeError(f"eq on numeric attribute {cond.attr!r} needs a numeric literal, got {cond.value!r}")


def _literal_number(value: Union[str, float]) -> float | None:
    if isinstance(value, (int, float)):
        return float(value)
    return parse_number(value)


def _condition_keys(cond: Condition, rel: Relation) -> frozenset[str]:
    _check_condition(cond, rel)
    spec = _attr(rel, cond.attr)
    idx = rel.index(cond.attr)
    key_idx = rel.index(rel.key_attr.name)
    matched = []
    for row in rel.rows:
        cell = row.values[idx]
        if cond.op == EQ and spec.kind == "numeric":
            ok = row.numbers[idx] is not None and row.numbers[idx] == _literal_number(cond.value)
        elif cond.op == EQ:
            ok = normalize(cell) == normalize(str(cond.value))
        elif cond.op == GT:
            ok = row.numbers[idx] is not None and row.numbers[idx] > _literal_number(cond.value)
        elif cond.op == LT:
            ok = row.numbers[idx] is not None and row.numbers[idx] < _literal_number(cond.value)
        else:  # CONTAINS
            ok = normalize(str(cond.value)) in normalize(cell)
        if ok:
            matched.append(row.values[key_idx].strip())
    return frozenset(matched)


def eval_expr(expr: ConditionExpr, rel: Relation) -> frozenset[str]:
    """Keys of rows satisfying the expression: and = intersection, or = union,
    diff = left minus right."""
    if isinstance(expr, Condition):
        return _condition_keys(expr, rel)
    if isinstance(expr, And):
        result = eval_expr(expr.children[0], rel)
        for child in expr.children[1:]:
            result &= eval_expr(child, rel)
        return result
    if isinstance(expr, Or):
        result = eval_expr(expr.children[0], rel)
        for child in expr.children[1:]:
            result |= eval_expr(child, rel)
        return result
    return eval_expr(expr.left, rel) - eval_expr(expr.right, rel)


def _satisfying_rows(expr: ConditionExpr, rel: Relation) -> list[Row]:
    keys = eval_expr(expr, rel)
    key_idx = rel.index(rel.key_attr.name)
    return [row for row in rel.rows if row.values[key_idx].strip() in keys]


def evaluate(plan: QueryPlan, rel: Relation) -> GoldAnswer:
    """Gold answer for a plan against a relation. See each branch for semantics."""
    if isinstance(plan, Retrieve):
        return EntitySet(eval_expr(plan.expr, rel))

    if isinstance(plan, Delete):
        keys = eval_expr(plan.expr, rel)
        key_idx = rel.index(rel.key_attr.name)
        remaining = [row.values for row in rel.rows if row.values[key_idx].strip() not in keys]
        return RelationSnapshot(Relation.from_values(rel.name, rel.schema, remaining))

    if isinstance(plan, Update):
        _attr(rel, plan.target_attr)
        target_idx = rel.index(plan.target_attr)
        keys = eval_expr(plan.expr, rel)
        key_idx = rel.index(rel.key_attr.name)
        values = []
        for row in rel.rows:
            if row.values[key_idx].strip() in keys:
                cells = list(row.values)
                cells[target_idx] = plan.replacement
                values.append(tuple(cells))
            else:
                values.append(row.values)
        try:
            return RelationSnapshot(Relation.from_values(rel.name, rel.schema, values))
        except DuplicateKeyError as e:
            # replacing the key column itself can merge rows; that post-state
            # has no keyed representation, so the plan is rejected
            raise PlanError(f"update would duplicate keys: {e}") from None

    if isinstance(plan, Count):
        return Number(float(len(eval_expr(plan.expr, rel))))

    if isinstance(plan, Sum):
        if _attr(rel, plan.target_attr).kind != "numeric":
            raise PlanTypeError(f"sum target {plan.target_attr!r} is not numeric")
        idx = rel.index(plan.target_attr)
        total = 0.0
        for row in _satisfying_rows(plan.expr, rel):
            if row.numbers[idx] is not None:
                total += row.numbers[idx]
        return Number(total)

    if isinstance(plan, Superlative):
        if _attr(rel, plan.target_attr).kind != "numeric":
            raise PlanTypeError(f"superlative target {plan.target_attr!r} is not numeric")
        _attr(rel, plan.tiebreak_attr)
        idx = rel.index(plan.target_attr)
        tiebreak_idx = rel.index(plan.tiebreak_attr)
        key_idx = rel.index(rel.key_attr.name)
        rows = [r for r in _satisfying_rows(plan.expr, rel) if r.numbers[idx] is not None]
        if not rows:
            return EntitySet(frozenset(), degenerate=True)
        sign = -1.0 if plan.direction == "max" else 1.0
        best = min(
            rows,
            key=lambda r: (sign * r.numbers[idx], normalize(r.values[tiebreak_idx]), normalize(r.values[key_idx])),
        )
        return EntitySet(frozenset({best.values[key_idx].strip()}))

    if isinstance(plan, Exists):
        keys = eval_expr(plan.expr, rel)
        return Witnessed(bool(keys), keys)

    if isinstance(plan, Project):
        indices = [rel.index(_attr(rel, a).name) for a in plan.attrs]
        tuples = {tuple(row.values[i].strip() for i in indices) for row in _satisfying_rows(plan.expr, rel)}
        return TupleSet(frozenset(tuples))

    raise PlanError(f"unknown plan {plan!r}")


# ---------------------------------------------------------------------------
# Row-scan reference evaluator (independent test oracle)
# ---------------------------------------------------------------------------


def _row_satisfies(expr: ConditionExpr, rel: Relation, row: Row) -> bool:
    """Boolean satisfaction per row; deliberately re-derives parsing and
    comparisons instead of reusing the set-algebra path."""
    if isinstance(expr, And):
        return all(_row_satisfies(c, rel, row) for c in expr.children)
    if isinstance(expr, Or):
        return any(_row_satisfies(c, rel, row) for c in expr.children)
    if isinstance(expr, Diff):
        return _row_satisfies(expr.left, rel, row) and not _row_satisfies(expr.right, rel, row)

    cond = expr
    spec = rel.attribute(cond.attr)
    cell = row.values[rel.index(cond.attr)]
    if cond.op in (GT, LT, EQ) and spec.kind == "numeric":
        try:
            threshold = float(cond.value)
        except (TypeError, ValueError):
            raise PlanTypeError(f"literal {cond.value!r} is not numeric")
        try:
            cell_num = float(cell.strip())
        except ValueError:
            return False
        if cond.op == GT:
            return cell_num > threshold
        if cond.op == LT:
            return cell_num < threshold
        return cell_num == threshold
    if cond.op in (GT, LT):
        raise PlanTypeError(f"{cond.op} needs a numeric attribute, {cond.attr!r} is {spec.kind}")
    if cond.op == CONTAINS:
        if spec.kind == "numeric":
            raise PlanTypeError(f"contains is not defined on numeric attribute {cond.attr!r}")
        return str(cond.value).strip().casefold() in cell.strip().casefold()
    return cell.strip().casefold() == str(cond.value).strip().casefold()


def _reference_validate(expr: ConditionExpr, rel: Relation) -> None:
    """Standalone pre-check so malformed plans fail the same way on empty relations."""
    names = {a.name: a.kind for a in rel.schema}
    stack: list[ConditionExpr] = [expr]
    while stack:
        node = stack.pop()
        if isinstance(node, (And, Or)):
            stack.extend(node.children)
        elif isinstance(node, Diff):
            stack.extend((node.left, node.right))
        else:
            kind = names.get(node.attr)
            if kind is None:
                raise PlanAttributeError(f"no attribute {node.attr!r} in {rel.name!r}")
            if node.op in (GT, LT) and kind != "numeric":
                raise PlanTypeError(f"{node.op} needs a numeric attribute, {node.attr!r} is {kind}")
            if node.op == CONTAINS and kind == "numeric":
                raise PlanTypeError(f"contains is not defined on numeric attribute {node.attr!r}")
            if node.op in (GT, LT, EQ) and kind == "numeric":
                import math

                try:
                    literal = float(node.value)
                except (TypeError, ValueError):
                    raise PlanTypeError(f"literal {node.value!r} is not numeric")
                if not math.isfinite(literal):
                    raise PlanTypeError(f"literal {node.value!r} is not finite")


def brute_force_reference(plan: QueryPlan, rel: Relation) -> GoldAnswer:
    """Same contract as `evaluate`, recomputed by scanning rows one at a time."""
    if len(rel.rows) > 10_000:
        raise PlanError("reference evaluator is capped at 10000 rows")

    _reference_validate(plan.expr, rel)
    key_pos = rel.index(rel.key_attr.name)
    matched: list[Row] = []
    unmatched: list[Row] = []
    for row in rel.rows:
        if _row_satisfies(plan.expr, rel, row):
            matched.append(row)
        else:
            unmatched.append(row)

    if isinstance(plan, Retrieve):
        return EntitySet(frozenset(r.values[key_pos].strip() for r in matched))

    if isinstance(plan, Delete):
        kept = []
        for row in rel.rows:
            if not _row_satisfies(plan.expr, rel, row):
                kept.append(row.values)
        return RelationSnapshot(Relation.from_values(rel.name, rel.schema, kept))

    if isinstance(plan, Update):
        if plan.target_attr not in {a.name for a in rel.schema}:
            raise PlanAttributeError(f"no attribute {plan.target_attr!r} in {rel.name!r}")
        pos = rel.index(plan.target_attr)
        out = []
        for row in rel.rows:
            cells = list(row.values)
            if _row_satisfies(plan.expr, rel, row):
                cells[pos] = plan.replacement
            out.append(tuple(cells))
        try:
            return RelationSnapshot(Relation.from_values(rel.name, rel.schema, out))
        except DuplicateKeyError as e:
            raise PlanError(f"update would duplicate keys: {e}") from None

    if isinstance(plan, Count):
        tally = 0
        for row in rel.rows:
            if _row_satisfies(plan.expr, rel, row):
                tally += 1
        return Number(float(tally))

    if isinstance(plan, Sum):
        kinds = {a.name: a.kind for a in rel.schema}
        if plan.target_attr not in kinds:
            raise PlanAttributeError(f"no attribute {plan.target_attr!r} in {rel.name!r}")
        if kinds[plan.target_attr] != "numeric":
            raise PlanTypeError(f"sum target {plan.target_attr!r} is not numeric")
        pos = rel.index(plan.target_attr)
        total = 0.0
        for row in matched:
            try:
                total += float(row.values[pos].strip())
            except ValueError:
                continue
        return Number(total)

    if isinstance(plan, Superlative):
        kinds = {a.name: a.kind for a in rel.schema}
        if plan.target_attr not in kinds or plan.tiebreak_attr not in kinds:
            raise PlanAttributeError("superlative target or tiebreak attribute missing")
        if kinds[plan.target_attr] != "numeric":
            raise PlanTypeError(f"superlative target {plan.target_attr!r} is not numeric")
        pos = rel.index(plan.target_attr)
        tie_pos = rel.index(plan.tiebreak_attr)
        best_row = None
        best_value = None
        for row in matched:
            try:
                value = float(row.values[pos].strip())
            except ValueError:
                continue
            if best_row is None:
                best_row, best_value = row, value
                continue
            better = value > best_value if plan.direction == "max" else value < best_value
            if better:
                best_row, best_value = row, value
            elif value == best_value:
                lhs = (row.values[tie_pos].strip().casefold(), row.values[key_pos].strip().casefold())
                rhs = (best_row.values[tie_pos].strip().casefold(), best_row.values[key_pos].strip().casefold())
                if lhs < rhs:
                    best_row = row
        if best_row is None:
            return EntitySet(frozenset(), degenerate=True)
        return EntitySet(frozenset({best_row.values[key_pos].strip()}))

    if isinstance(plan, Exists):
        return Witnessed(len(matched) > 0, frozenset(r.values[key_pos].strip() for r in matched))

    if isinstance(plan, Project):
        known = {a.name for a in rel.schema}
        for a in plan.attrs:
            if a not in known:
                raise PlanAttributeError(f"no attribute {a!r} in {rel.name!r}")
        positions = [rel.index(a) for a in plan.attrs]
        seen = []
        for row in matched:
            item = tuple(row.values[p].strip() for p in positions)
            if item not in seen:
                seen.append(item)
        return TupleSet(frozenset(seen))

    raise PlanError(f"unknown plan {plan!r}")


# ---------------------------------------------------------------------------
# Canonical JSON forms (stable field names and key order, diffable suites)
# ---------------------------------------------------------------------------


def expr_to_json(expr: ConditionExpr) -> dict:
    if isinstance(expr, Condition):
        return {"attr": expr.attr, "kind": "condition", "op": expr.op,
                "rendered": expr.rendered, "value": expr.value}
    if isinstance(expr, And):
        return {"children": [expr_to_json(c) for c in expr.children], "kind": "and"}
    if isinstance(expr, Or):
        return {"children": [expr_to_json(c) for c in expr.children], "kind": "or"}
    return {"kind": "diff", "left": expr_to_json(expr.left), "right": expr_to_json(expr.right)}


def expr_from_json(obj: dict) -> ConditionExpr:
    kind = obj["kind"]
    if kind == "condition":
        return Condition(attr=obj["attr"], op=obj["op"], value=obj["value"], rendered=obj["rendered"])
    if kind == "and":
        return And(tuple(expr_from_json(c) for c in obj["children"]))
    if kind == "or":
        return Or(tuple(expr_from_json(c) for c in obj["children"]))
    if kind == "diff":
        return Diff(expr_from_json(obj["left"]), expr_from_json(obj["right"]))
    raise PlanError(f"unknown expression kind {kind!r}")


def plan_to_json(plan: QueryPlan) -> dict:
    if isinstance(plan, Retrieve):
        return {"expr": expr_to_json(plan.expr), "kind": "retrieve"}
    if isinstance(plan, Delete):
        return {"expr": expr_to_json(plan.expr), "kind": "delete"}
    if isinstance(plan, Update):
        return {"expr": expr_to_json(plan.expr), "kind": "update",
                "replacement": plan.replacement, "target_attr": plan.target_attr}
    if isinstance(plan, Count):
        return {"expr": expr_to_json(plan.expr), "kind": "count"}
    if isinstance(plan, Sum):
        return {"expr": expr_to_json(plan.expr), "kind": "sum", "target_attr": plan.target_attr}
    if isinstance(plan, Superlative):
        return {"direction": plan.direction, "expr": expr_to_json(plan.expr), "kind": "superlative",
                "target_attr": plan.target_attr, "tiebreak_attr": plan.tiebreak_attr}
    if isinstance(plan, Exists):
        return {"expr": expr_to_json(plan.expr), "kind": "exists", "negated": plan.negated}
    if isinstance(plan, Project):
        return {"attrs": list(plan.attrs), "expr": expr_to_json(plan.expr), "kind": "project"}
    raise PlanError(f"unknown plan {plan!r}")


def plan_from_json(obj: dict) -> QueryPlan:
    kind = obj["kind"]
    expr = expr_from_json(obj["expr"])
    if kind == "retrieve":
        return Retrieve(expr)
    if kind == "delete":
        return Delete(expr)
    if kind == "update":
        return Update(target_attr=obj["target_attr"], replacement=obj["replacement"], expr=expr)
    if kind == "count":
        return Count(expr)
    if kind == "sum":
        return Sum(target_attr=obj["target_attr"], expr=expr)
    if kind == "superlative":
        return Superlative(target_attr=obj["target_attr"], direction=obj["direction"],
                           tiebreak_attr=obj["tiebreak_attr"], expr=expr)
    if kind == "exists":
        return Exists(expr, negated=bool(obj.get("negated", False)))
    if kind == "project":
        return Project(tuple(obj["attrs"]), expr)
    raise PlanError(f"unknown plan kind {kind!r}")


def gold_to_json(gold: GoldAnswer) -> dict:
    if isinstance(gold, EntitySet):
        return {"degenerate": gold.degenerate, "keys": sorted(gold.keys), "kind": "entity_set"}
    if isinstance(gold, TupleSet):
        return {"kind": "tuple_set", "tuples": sorted(list(t) for t in gold.tuples)}
    if isinstance(gold, RelationSnapshot):
        rel = gold.relation
        return {
            "columns": list(rel.attribute_names),
            "key": rel.key_attr.name,
            "kind": "relation",
            "rows": [list(r.values) for r in rel.rows],
        }
    if isinstance(gold, Number):
        return {"kind": "number", "value": gold.value}
    return {"kind": "witnessed", "value": gold.value, "witnesses": sorted(gold.witnesses)}


def gold_from_json(obj: dict) -> GoldAnswer:
    kind = obj["kind"]
    if kind == "entity_set":
        return EntitySet(frozenset(obj["keys"]), degenerate=bool(obj.get("degenerate", False)))
    if kind == "tuple_set":
        return TupleSet(frozenset(tuple(t) for t in obj["tuples"]))
    if kind == "relation":
        from .relation import AttributeSpec

        schema = tuple(
            AttributeSpec(name=c, kind="categorical", canonical_phrase=c.lower(), is_key=(c == obj["key"]))
            for c in obj["columns"]
        )
        return RelationSnapshot(Relation.from_values("snapshot", schema, [tuple(r) for r in obj["rows"]]))
    if kind == "number":
        return Number(float(obj["value"]))
    if kind == "witnessed":
        return Witnessed(bool(obj["value"]), frozenset(obj["witnesses"]))
    raise PlanError(f"unknown gold kind {kind!r}")
