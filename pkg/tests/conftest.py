import json
import random
from pathlib import Path

import pytest

from cellcast.notebook import Notebook, parse_notebook
from cellcast.script import (
    DesignScript,
    EmphasisElement,
    NarrationCategory,
    NarrationSegment,
    Scene,
    Settings,
)

FIXTURES = Path(__file__).parent / "fixtures"
LLM_FIXTURES = FIXTURES / "llm"


def load_fixture_bytes(name: str) -> bytes:
    return (FIXTURES / name).read_bytes()


def make_notebook_doc(cells: list[dict]) -> bytes:
    return json.dumps({"cells": cells, "metadata": {}, "nbformat": 4, "nbformat_minor": 5}).encode()


def code_cell(source, outputs=None) -> dict:
    return {"cell_type": "code", "metadata": {}, "source": source,
            "outputs": outputs or [], "execution_count": 1}


def markdown_cell(source) -> dict:
    return {"cell_type": "markdown", "metadata": {}, "source": source}


def notebook_of_sources(sources: list[str]) -> Notebook:
    return parse_notebook(make_notebook_doc([code_cell(s) for s in sources]))


@pytest.fixture
def covid_notebook() -> Notebook:
    return parse_notebook(load_fixture_bytes("covid_tutorial.ipynb"), source_path="covid_tutorial.ipynb")


# --- random linear notebooks with known def/use ground truth ----------------

NAME_POOL = "abcde"


def generate_linear_notebook(rng: random.Random, max_cells: int = 6, names: str = NAME_POOL):
    """Random straight-line assignment cells plus the ground-truth def/use
    edges, computed during generation by replaying bindings."""
    cell_count = rng.randint(1, max_cells)
    sources = []
    truth_edges = set()
    last_definer: dict[str, int] = {}
    for cell_index in range(cell_count):
        lines = []
        defined_in_cell: set[str] = set()
        referenced: set[str] = set()
        for _ in range(rng.randint(1, 3)):
            kind = rng.choice(("const", "unary", "binary", "use"))
            target = rng.choice(names)
            if kind == "const":
                lines.append(f"{target} = {rng.randint(0, 99)}")
            elif kind == "unary":
                operand = rng.choice(names)
                if operand not in defined_in_cell:
                    referenced.add(operand)
                lines.append(f"{target} = {operand} + {rng.randint(1, 9)}")
            elif kind == "binary":
                left, right = rng.choice(names), rng.choice(names)
                for operand in (left, right):
                    if operand not in defined_in_cell:
                        referenced.add(operand)
                lines.append(f"{target} = {left} * {right}")
            else:
                operand = rng.choice(names)
                if operand not in defined_in_cell:
                    referenced.add(operand)
                lines.append(f"print({operand})")
                target = None
            if target is not None:
                defined_in_cell.add(target)
        for name in referenced:
            if name in last_definer:
                truth_edges.add((last_definer[name], cell_index, name))
        for name in defined_in_cell:
            last_definer[name] = cell_index
        sources.append("\n".join(lines))
    return notebook_of_sources(sources), truth_edges


# --- random design scripts ---------------------------------------------------

WORDS = ("data", "this", "step", "filter", "plot", "values", "frame", "loads",
         "select", "group", "result", "column", "series", "analysis")


def random_script(rng: random.Random, max_scenes: int = 4) -> DesignScript:
    scenes = []
    for position in range(rng.randint(1, max_scenes)):
        cell_index = position * 2 + rng.randint(0, 1)
        line_count = rng.randint(1, 6)
        source = "\n".join(
            " ".join(rng.choice(WORDS) for _ in range(rng.randint(2, 6)))
            for _ in range(line_count)
        )
        emphases = []
        cuts = sorted(rng.sample(range(len(source) + 1), min(len(source) + 1, 2 * rng.randint(0, 2))))
        for k in range(0, len(cuts) - 1, 2):
            if cuts[k] < cuts[k + 1]:
                emphases.append(EmphasisElement(
                    id=f"e{cell_index}.{k // 2 + 1}",
                    cell_index=cell_index,
                    span=(cuts[k], cuts[k + 1]),
                    annotation=rng.choice(WORDS) + " matters",
                    scale_factor=1.0 + rng.randint(1, 8) / 10,
                ))
        segments = []
        for number in range(rng.randint(0, 4)):
            category = rng.choice(list(NarrationCategory))
            link_pool = [e.id for e in emphases]
            rng.shuffle(link_pool)
            segments.append(NarrationSegment(
                id=f"g{cell_index}.{number + 1}",
                text=" ".join(rng.choice(WORDS) for _ in range(rng.randint(1, 12)))
                     + ("?" if category is NarrationCategory.QUESTION else "."),
                category=category,
                linked_emphasis=tuple(link_pool[:rng.randint(0, min(2, len(link_pool)))]),
                interactive=category is NarrationCategory.QUESTION and rng.random() < 0.3,
            ))
        scenes.append(Scene(
            id=f"s{cell_index}",
            cell_index=cell_index,
            source=source,
            emphases=tuple(emphases),
            segments=tuple(segments),
            include_outputs=rng.random() < 0.3,
        ))
    settings = Settings(
        resolution=(rng.choice((320, 640, 1280, 1920)), rng.choice((180, 360, 720, 1080))),
        fps=rng.choice((1, 10, 24, 30, 60)),
        voice="default",
        gap_ms=rng.randint(0, 900),
        enter_ms=rng.randint(0, 900),
        exit_ms=rng.randint(0, 900),
    )
    return DesignScript(scenes=tuple(scenes), settings=settings)


def random_durations(rng: random.Random, script: DesignScript) -> dict[str, int]:
    return {
        segment.id: rng.randint(100, 6000)
        for scene in script.scenes for segment in scene.segments
    }
