from dataclasses import dataclass
from pathlib import Path

import pytest

from dlbeam.fixtures import fixture_path
from dlbeam.kb import (ExampleSet, KbStatistics, KnowledgeBase, SymbolTable,
                       compute_statistics, materialize, parse_examples,
                       parse_kb)
from dlbeam.refine import build_mb


@dataclass
class LoadedKb:
    st: SymbolTable
    kb: KnowledgeBase
    stats: KbStatistics
    mb: list
    examples: ExampleSet


def load_fixture(name: str) -> LoadedKb:
    st, kb = parse_kb(Path(fixture_path(f"{name}.kb")).read_text())
    materialize(kb, st)
    stats = compute_statistics(kb)
    examples = parse_examples(Path(fixture_path(f"{name}.ex")).read_text(), st)
    return LoadedKb(st, kb, stats, build_mb(kb, stats), examples)


@pytest.fixture(scope="session")
def trains() -> LoadedKb:
    return load_fixture("trains")


@pytest.fixture(scope="session")
def smoke() -> LoadedKb:
    return load_fixture("smoke")
