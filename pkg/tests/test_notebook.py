import json

import pytest
from hypothesis import given, strategies as st

from cellcast.errors import DecodeError, MalformedDocument, UnsupportedVersion
from cellcast.notebook import (
    CellKind,
    OutputKind,
    code_cells,
    extract_output_assets,
    parse_notebook,
    serialize_notebook,
)

from conftest import (
    FIXTURES,
    code_cell,
    load_fixture_bytes,
    make_notebook_doc,
    markdown_cell,
)


def test_empty_notebook():
    notebook = parse_notebook(load_fixture_bytes("empty.ipynb"))
    assert notebook.cells == ()
    assert notebook.format_version[0] == 4


def test_three_cell_fixture_kinds_and_indices():
    notebook = parse_notebook(load_fixture_bytes("three_cells.ipynb"))
    assert [cell.index for cell in notebook.cells] == [0, 1, 2]
    assert [cell.kind for cell in notebook.cells] == [CellKind.MARKDOWN, CellKind.CODE, CellKind.CODE]
    # list-form sources are joined without alteration
    assert notebook.cells[1].source == "import pandas as pd\nimport numpy as np"


def test_empty_object_is_malformed():
    with pytest.raises(MalformedDocument):
        parse_notebook(b"{}")


def test_not_json_is_malformed():
    with pytest.raises(MalformedDocument):
        parse_notebook(b"not a notebook")


def test_major_version_3_rejected():
    doc = json.loads(make_notebook_doc([]))
    doc["nbformat"] = 3
    with pytest.raises(UnsupportedVersion):
        parse_notebook(json.dumps(doc).encode())


def test_outputs_empty_for_non_code_cells():
    notebook = parse_notebook(make_notebook_doc([markdown_cell("hello"), code_cell("x = 1")]))
    assert notebook.cells[0].outputs == ()
    assert notebook.cells[1].execution_count == 1


def test_code_cells_filter():
    notebook = parse_notebook(make_notebook_doc(
        [markdown_cell("m"), code_cell("a = 1"), code_cell("b = 2")]))
    assert [cell.index for cell in code_cells(notebook)] == [1, 2]


def test_code_cells_empty_notebook():
    assert code_cells(parse_notebook(load_fixture_bytes("empty.ipynb"))) == []


def test_code_cells_all_code():
    notebook = parse_notebook(make_notebook_doc([code_cell(f"x{i} = {i}") for i in range(6)]))
    assert [cell.index for cell in code_cells(notebook)] == list(range(6))


def test_round_trip_fixture_corpus():
    for path in FIXTURES.glob("*.ipynb"):
        original = parse_notebook(path.read_bytes())
        reparsed = parse_notebook(serialize_notebook(original))
        assert [c.source for c in reparsed.cells] == [c.source for c in original.cells], path.name
        assert [c.kind for c in reparsed.cells] == [c.kind for c in original.cells]


_kinds = st.sampled_from(["code", "markdown", "raw"])
_sources = st.text(max_size=80)


@given(st.lists(st.tuples(_kinds, _sources), max_size=8))
def test_round_trip_sources_byte_exact(specs):
    cells = []
    for kind, source in specs:
        if kind == "code":
            cells.append(code_cell(source))
        else:
            cells.append({"cell_type": kind, "metadata": {}, "source": source})
    original = parse_notebook(make_notebook_doc(cells))
    reparsed = parse_notebook(serialize_notebook(original))
    assert [c.source for c in reparsed.cells] == [c.source for c in original.cells]
    assert all(cell.index == i for i, cell in enumerate(reparsed.cells))


@given(st.lists(_kinds, max_size=10))
def test_code_cell_filter_preserves_order(kinds):
    cells = [{"cell_type": kind, "metadata": {}, "source": f"cell {i}",
              **({"outputs": [], "execution_count": None} if kind == "code" else {})}
             for i, kind in enumerate(kinds)]
    notebook = parse_notebook(make_notebook_doc(cells))
    filtered = code_cells(notebook)
    assert [c.index for c in filtered] == [i for i, kind in enumerate(kinds) if kind == "code"]


def test_stream_output_asset():
    notebook = parse_notebook(make_notebook_doc(
        [code_cell("print('hello')",
                   outputs=[{"output_type": "stream", "name": "stdout", "text": "hello\n"}])]))
    assets = extract_output_assets(notebook.cells[0])
    assert len(assets) == 1
    assert assets[0].kind is OutputKind.STREAM_TEXT
    assert assets[0].payload == "hello\n"


def test_png_output_asset_decoded_length():
    meta = json.loads(load_fixture_bytes("outputs_png.meta.json"))
    notebook = parse_notebook(load_fixture_bytes("outputs_png.ipynb"))
    assets = extract_output_assets(notebook.cells[0])
    assert len(assets) == 1
    assert assets[0].kind is OutputKind.IMAGE_PNG
    assert isinstance(assets[0].payload, bytes)
    assert len(assets[0].payload) == meta["png_byte_length"]


def test_markdown_cell_outputs_precondition():
    notebook = parse_notebook(make_notebook_doc([markdown_cell("notes")]))
    with pytest.raises(ValueError):
        extract_output_assets(notebook.cells[0])


def test_invalid_base64_png_raises_decode_error():
    notebook = parse_notebook(make_notebook_doc(
        [code_cell("plot()", outputs=[{"output_type": "display_data",
                                       "data": {"image/png": "@@not base64@@"},
                                       "metadata": {}}])]))
    with pytest.raises(DecodeError):
        extract_output_assets(notebook.cells[0])


def test_valid_base64_but_not_png_raises_decode_error():
    import base64
    payload = base64.b64encode(b"plain bytes, no png magic").decode()
    notebook = parse_notebook(make_notebook_doc(
        [code_cell("plot()", outputs=[{"output_type": "display_data",
                                       "data": {"image/png": payload},
                                       "metadata": {}}])]))
    with pytest.raises(DecodeError):
        extract_output_assets(notebook.cells[0])


def test_error_output_asset():
    notebook = parse_notebook(make_notebook_doc(
        [code_cell("boom()", outputs=[{"output_type": "error", "ename": "NameError",
                                       "evalue": "boom", "traceback": ["tb line 1", "tb line 2"]}])]))
    assets = extract_output_assets(notebook.cells[0])
    assert assets[0].kind is OutputKind.ERROR
    assert "tb line 1" in assets[0].payload
