"""Render a relation at four structuring levels and parse pipe tables back.

The levels differ only in how fixed the wording, attribute order, and layout
are; every level carries every cell value verbatim, so the information content
is identical and checkable by substring search.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum

from .relation import AttributeSpec, Relation, normalize, parse_number
from .seeding import rng_for


class RenderError(Exception):
    pass


class NoBankError(RenderError):
    pass


class BadPortionError(RenderError):
    pass


class ParseError(Exception):
    pass


class NoTableError(ParseError):
    pass


class StructuringLevel(Enum):
    """Renderings ordered by structuredness: fixed attribute order, then fixed
    expression, then tabular layout."""

    NATURAL = "natural"
    ORDER_FIXED = "order_fixed"
    TEMPLATE_BASED = "template_based"
    TABLE = "table"

    @property
    def rank(self) -> int:
        return ("natural", "order_fixed", "template_based", "table").index(self.value)


PORTIONS = (0.0, 0.25, 0.5, 1.0)


@dataclass(frozen=True)
class SentenceFrame:
    """Skeleton of one sentence: a head holding the key, then one clause per
    non-key attribute in the frame's own order."""

    head: str
    order: tuple[str, ...]

    def __post_init__(self):
        if "{key}" not in self.head:
            raise NoBankError(f"frame head {self.head!r} has no {{key}} slot")


@dataclass(frozen=True)
class PhraseBank:
    """Per-dataset wording: sentence frames plus clause templates per attribute.

    frames[0] is the canonical frame; clauses[attr][0] the canonical clause.
    Clause templates use {value} for the cell and {phrase} for the attribute
    phrase drawn from the schema's paraphrase list.
    """

    frames: tuple[SentenceFrame, ...]
    clauses: dict[str, tuple[str, ...]]

    def __post_init__(self):
        if not self.frames:
            raise NoBankError("phrase bank has no sentence frames")

    def check_schema(self, schema: tuple[AttributeSpec, ...]) -> None:
        non_key = [a.name for a in schema if not a.is_key]
        for frame in self.frames:
            if sorted(frame.order) != sorted(non_key):
                raise NoBankError(
                    f"frame order {frame.order} does not cover non-key attributes {tuple(non_key)}"
                )
        for name in non_key:
            if not self.clauses.get(name):
                raise NoBankError(f"no clause templates for attribute {name!r}")


def bank_from_json(text: str) -> PhraseBank:
    raw = json.loads(text)
    frames = tuple(SentenceFrame(head=f["head"], order=tuple(f["order"])) for f in raw["frames"])
    clauses = {attr: tuple(templates) for attr, templates in raw["clauses"].items()}
    return PhraseBank(frames=frames, clauses=clauses)


def _fill(template: str, **slots: str) -> str:
    out = template
    for slot, value in slots.items():
        out = out.replace("{" + slot + "}", value)
    return out


def render_table(rel: Relation) -> str:
    """Pipe table: header row then one row per entity, single spaces around cells."""
    lines = ["| " + " | ".join(rel.attribute_names) + " |"]
    for row in rel.rows:
        lines.append("| " + " | ".join(row.values) + " |")
    return "\n".join(lines)


def _sentence(rel: Relation, row, frame_head: str, order: tuple[str, ...],
              clause_pick, phrase_pick, bank: PhraseBank) -> str:
    key_value = rel.key_of(row)
    parts = [_fill(frame_head, key=key_value)]
    for attr_name in order:
        spec = rel.attribute(attr_name)
        templates = bank.clauses.get(attr_name)
        if not templates:
            raise NoBankError(f"no clause templates for attribute {attr_name!r}")
        clause = templates[clause_pick(attr_name, len(templates))]
        phrase = spec.paraphrases[phrase_pick(attr_name, len(spec.paraphrases))]
        parts.append(_fill(clause, value=rel.value(row, attr_name), phrase=phrase))
    return " ".join(parts) + "."


def render(rel: Relation, level: StructuringLevel, seed: int, bank: PhraseBank | None = None) -> str:
    """Deterministic rendering of a relation at one structuring level.

    Table needs no bank. The three text levels need frames and clause banks:
    template-based always uses the canonical frame and clauses; order-fixed
    keeps the canonical attribute order but draws wording per entity; natural
    additionally permutes the attribute order per entity.
    """
    if not rel.rows:
        raise RenderError("cannot render an empty relation")
    if level is StructuringLevel.TABLE:
        return render_table(rel)
    if bank is None:
        raise NoBankError(f"{level.value} rendering needs a phrase bank")
    bank.check_schema(rel.schema)

    canonical = bank.frames[0]
    lines = []
    for entity_index, row in enumerate(rel.rows):
        if level is StructuringLevel.TEMPLATE_BASED:
            head, order = canonical.head, canonical.order
            pick = lambda attr, n: 0
            lines.append(_sentence(rel, row, head, order, pick, pick, bank))
            continue

        rng = rng_for(seed, "render", level.value, entity_index, rel.key_of(row))
        head = bank.frames[rng.randrange(len(bank.frames))].head
        if level is StructuringLevel.ORDER_FIXED:
            order = canonical.order
        else:  # NATURAL: per-entity permutation of the attribute order
            order = list(canonical.order)
            rng.shuffle(order)
            order = tuple(order)
        draws: dict[tuple[str, str], int] = {}

        def pick(attr: str, n: int, tag: str, rng=rng, draws=draws) -> int:
            marker = (tag, attr)
            if marker not in draws:
                draws[marker] = rng.randrange(n)
            return draws[marker]

        lines.append(
            _sentence(
                rel, row, head, order,
                lambda attr, n: pick(attr, n, "clause"),
                lambda attr, n: pick(attr, n, "phrase"),
                bank,
            )
        )
    return "\n".join(lines)


def render_partial(rel: Relation, portion: float, seed: int, bank: PhraseBank | None = None) -> str:
    """Seeded split: floor(portion*n) entities as a trailing pipe-table block,
    the rest as natural text above it. The two blocks partition the entities."""
    if portion not in PORTIONS:
        raise BadPortionError(f"portion must be one of {PORTIONS}, got {portion}")
    if not rel.rows:
        raise RenderError("cannot render an empty relation")

    n = len(rel.rows)
    take = int(portion * n)
    if take == 0:
        return render(rel, StructuringLevel.NATURAL, seed, bank)
    if take == n:
        return render(rel, StructuringLevel.TABLE, seed, bank)

    rng = rng_for(seed, "partition", portion)
    table_indices = sorted(rng.sample(range(n), take))
    table_part = Relation(rel.name, rel.schema, tuple(rel.rows[i] for i in table_indices))
    text_part = Relation(rel.name, rel.schema,
                         tuple(r for i, r in enumerate(rel.rows) if i not in set(table_indices)))
    text_block = render(text_part, StructuringLevel.NATURAL, seed, bank)
    return text_block + "\n\n" + render_table(table_part)


_SEPARATOR_CELL = re.compile(r"^:?-+:?$")


def _split_pipe_line(line: str) -> list[str] | None:
    stripped = line.strip()
    if "|" not in stripped:
        return None
    cells = [c.strip() for c in stripped.split("|")]
    if stripped.startswith("|"):
        cells = cells[1:]
    if stripped.endswith("|"):
        cells = cells[:-1]
    return cells if cells else None


def parse_table(text: str) -> Relation:
    """Best-effort pipe-table extraction from free text.

    Takes the first contiguous block of pipe-delimited lines, skipping markdown
    separator rows; tolerates missing boundary pipes, ragged rows, surrounding
    prose, and repeated keys (first occurrence wins).
    """
    block: list[list[str]] = []
    in_block = False
    for line in text.splitlines():
        cells = _split_pipe_line(line)
        if cells is None:
            if in_block:
                break
            continue
        in_block = True
        if all(_SEPARATOR_CELL.match(c) for c in cells if c) and any(cells):
            continue
        block.append(cells)

    if not block:
        raise NoTableError("no pipe-delimited header line found")

    header = [h if h else f"col{i}" for i, h in enumerate(block[0])]
    width = len(header)
    rows: list[tuple[str, ...]] = []
    seen_keys: set[str] = set()
    for cells in block[1:]:
        padded = tuple((cells + [""] * width)[:width])
        key = normalize(padded[0])
        if key in seen_keys or not padded[0]:
            continue
        seen_keys.add(key)
        rows.append(padded)

    schema = []
    for i, name in enumerate(header):
        column = [r[i] for r in rows]
        numeric = bool(column) and all(parse_number(c) is not None for c in column)
        schema.append(
            AttributeSpec(
                name=name,
                kind="numeric" if numeric else "categorical",
                canonical_phrase=name.lower(),
                is_key=(i == 0),
            )
        )
    return Relation.from_values("parsed", tuple(schema), rows)


def _cells_match(a: str, b: str) -> bool:
    na, nb = parse_number(a), parse_number(b)
    if na is not None and nb is not None:
        return na == nb
    return normalize(a) == normalize(b)


def cell_fill_rate(predicted: Relation, gold: Relation) -> float:
    """Fraction of gold cells present at the matching (key, attribute) position
    in the prediction; missing rows and columns count as unfilled."""
    total = len(gold.rows) * len(gold.schema)
    if total == 0:
        return 1.0

    pred_columns = {normalize(a.name): i for i, a in enumerate(predicted.schema)}
    gold_key_idx = gold.index(gold.key_attr.name)
    pred_key_col = pred_columns.get(normalize(gold.key_attr.name))
    if pred_key_col is None:
        return 0.0
    pred_rows = {normalize(r.values[pred_key_col]): r for r in predicted.rows}

    filled = 0
    for row in gold.rows:
        pred_row = pred_rows.get(normalize(row.values[gold_key_idx]))
        if pred_row is None:
            continue
        for attr_idx, attr in enumerate(gold.schema):
            col = pred_columns.get(normalize(attr.name))
            if col is None:
                continue
            if _cells_match(pred_row.values[col], row.values[attr_idx]):
                filled += 1
    return filled / total
