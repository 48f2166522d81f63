#!/usr/bin/env python3
"""Regenerate the committed test fixtures: small .ipynb documents plus the
recorded LLM responses used in replay mode.

Run from the repository root:  python scripts/build_fixtures.py
"""

from __future__ import annotations

import base64
import io
import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from PIL import Image

from cellcast.llm import FixtureStore, LlmBridge

FIXTURES = ROOT / "tests" / "fixtures"

QUESTION_DEMO_INPUT = "The use of *head()* to preview our filtered data ensures its accuracy."
QUESTION_DEMO_OUTPUT = ("How can we verify the accuracy of our filtered data? "
                        "Just use the *head()* function to preview the filtered data.")


def nb(cells, minor=5):
    return {"cells": cells, "metadata": {}, "nbformat": 4, "nbformat_minor": minor}


def code(source, outputs=None, execution_count=1):
    return {"cell_type": "code", "metadata": {}, "source": source,
            "outputs": outputs or [], "execution_count": execution_count}


def markdown(source):
    return {"cell_type": "markdown", "metadata": {}, "source": source}


def write_nb(name, doc):
    path = FIXTURES / name
    path.write_text(json.dumps(doc, indent=1, ensure_ascii=False), encoding="utf-8")
    print(f"wrote {path}")


def build_notebooks():
    write_nb("empty.ipynb", nb([]))

    write_nb("three_cells.ipynb", nb([
        markdown(["# Demo\n", "\n", "A tiny notebook.\n"]),
        code(["import pandas as pd\n", "import numpy as np"]),
        code("squares = [n ** 2 for n in range(10)]\nprint(squares)",
             outputs=[{"output_type": "stream", "name": "stdout",
                       "text": ["[0, 1, 4, 9, 16, 25, 36, 49, 64, 81]\n"]}]),
    ]))

    image = Image.new("RGB", (24, 16), (200, 40, 40))
    buffer = io.BytesIO()
    image.save(buffer, format="PNG")
    png_bytes = buffer.getvalue()
    write_nb("outputs_png.ipynb", nb([
        code("plot()", outputs=[
            {"output_type": "display_data",
             "data": {"image/png": base64.b64encode(png_bytes).decode("ascii")},
             "metadata": {}},
        ]),
    ]))
    (FIXTURES / "outputs_png.meta.json").write_text(
        json.dumps({"png_byte_length": len(png_bytes)}), encoding="utf-8")
    print(f"wrote outputs_png.meta.json (png {len(png_bytes)} bytes)")

    covid_stream = ("Continent\nAsia          104500\nEurope        221340\n"
                    "North America 153220\nName: Cases, dtype: int64\n")
    write_nb("covid_tutorial.ipynb", nb([
        markdown("# COVID-19 data walkthrough\n\nFrom raw case records to a per-country view."),
        code("# Load libraries\nimport pandas as pd"),
        code("# Load dataset\nraw = pd.read_csv('covid_data.csv')"),
        code("# Germany COVID-19 data\n"
             "confirmed = raw.query(\"Case_Type == 'Confirmed'\")\n"
             "germany = confirmed.query(\"Country_Region == 'Germany'\")"),
        code("# Summarize by continent\n"
             "by_continent = raw.groupby('Continent')['Cases'].sum()\n"
             "print(by_continent.head())",
             outputs=[{"output_type": "stream", "name": "stdout", "text": covid_stream}]),
    ]))


class _OneShotProvider:
    def __init__(self, text):
        self.text = text

    def complete(self, messages, *, model, temperature):
        return self.text


def record_llm_fixtures():
    store = FixtureStore(FIXTURES / "llm")
    bridge = LlmBridge(_OneShotProvider(QUESTION_DEMO_OUTPUT), fixtures=store, record=True)
    result = bridge.transform_to_question(QUESTION_DEMO_INPUT)
    assert result == QUESTION_DEMO_OUTPUT
    print(f"recorded question fixture {bridge.exchanges[-1].request_hash[:12]}...")


if __name__ == "__main__":
    FIXTURES.mkdir(parents=True, exist_ok=True)
    build_notebooks()
    record_llm_fixtures()
