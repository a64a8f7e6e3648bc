"""Benchmark harness for multi-condition requests over small tabular datasets.

Pipeline: load a dataset pack, sample entities, generate seeded request suites
with oracle-computed gold answers, render the knowledge context at one of four
structuring levels, run prompts against remote or mock models, and score the
responses with set-F1 / accuracy / absolute-difference metrics plus robustness
variance across prompt templates.
"""

__version__ = "0.1.0"

from .relation import AttributeSpec, Relation, load_csv, sample_entities, unique_values
from .structurer import StructuringLevel, cell_fill_rate, parse_table, render, render_partial

__all__ = [
    "AttributeSpec",
    "Relation",
    "StructuringLevel",
    "__version__",
    "cell_fill_rate",
    "load_csv",
    "parse_table",
    "render",
    "render_partial",
    "sample_entities",
    "unique_values",
]
