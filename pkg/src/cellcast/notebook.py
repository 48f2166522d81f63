"""Notebook document model: parse .ipynb (nbformat 4.x) into immutable values.

Cell identity is the positional index; the notebook `id` metadata is ignored.
Non-code cells are kept but carry no outputs.
"""

from __future__ import annotations

import base64
import binascii
import json
from dataclasses import dataclass, field
from enum import Enum

from .errors import DecodeError, MalformedDocument, UnsupportedVersion

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


class CellKind(str, Enum):
    CODE = "code"
    MARKDOWN = "markdown"
    RAW = "raw"


class OutputKind(str, Enum):
    STREAM_TEXT = "stream_text"
    EXECUTE_RESULT_TEXT = "execute_result_text"
    IMAGE_PNG = "image_png"
    ERROR = "error"


@dataclass(frozen=True)
class OutputAsset:
    kind: OutputKind
    payload: str | bytes
    mime: str


@dataclass(frozen=True)
class Cell:
    index: int
    kind: CellKind
    source: str
    outputs: tuple[dict, ...] = ()  # raw nbformat output dicts, code cells only
    execution_count: int | None = None


@dataclass(frozen=True)
class Notebook:
    format_version: tuple[int, int]
    cells: tuple[Cell, ...]
    source_path: str = ""
    metadata: dict = field(default_factory=dict, compare=False)


def _join_source(source) -> str:
    # nbformat stores source as a string or a list of line fragments
    if isinstance(source, str):
        return source
    if isinstance(source, list) and all(isinstance(s, str) for s in source):
        return "".join(source)
    raise MalformedDocument(f"cell source must be text, got {type(source).__name__}")


def parse_notebook(data: bytes, source_path: str = "") -> Notebook:
    """Parse raw .ipynb bytes into a Notebook.

    Raises MalformedDocument for anything that is not a notebook JSON
    document, UnsupportedVersion when the major format version is not 4.
    """
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedDocument(f"not valid notebook JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedDocument("notebook document must be a JSON object")
    for key in ("cells", "nbformat"):
        if key not in doc:
            raise MalformedDocument(f"missing required key {key!r}")
    major = doc["nbformat"]
    minor = doc.get("nbformat_minor", 0)
    if not isinstance(major, int) or not isinstance(minor, int):
        raise MalformedDocument("nbformat version fields must be integers")
    if major != 4:
        raise UnsupportedVersion(f"nbformat {major}.x is not supported, need 4.x")
    raw_cells = doc["cells"]
    if not isinstance(raw_cells, list):
        raise MalformedDocument("cells must be a list")

    cells = []
    for index, raw in enumerate(raw_cells):
        if not isinstance(raw, dict) or "cell_type" not in raw or "source" not in raw:
            raise MalformedDocument(f"cell {index} lacks cell_type/source")
        try:
            kind = CellKind(raw["cell_type"])
        except ValueError as exc:
            raise MalformedDocument(f"cell {index}: unknown cell_type {raw['cell_type']!r}") from exc
        source = _join_source(raw["source"])
        outputs: tuple[dict, ...] = ()
        execution_count = None
        if kind is CellKind.CODE:
            raw_outputs = raw.get("outputs", [])
            if not isinstance(raw_outputs, list):
                raise MalformedDocument(f"cell {index}: outputs must be a list")
            outputs = tuple(raw_outputs)
            execution_count = raw.get("execution_count")
            if execution_count is not None and not isinstance(execution_count, int):
                raise MalformedDocument(f"cell {index}: execution_count must be integer or null")
        cells.append(Cell(index=index, kind=kind, source=source,
                          outputs=outputs, execution_count=execution_count))

    return Notebook(
        format_version=(major, minor),
        cells=tuple(cells),
        source_path=source_path,
        metadata=doc.get("metadata", {}),
    )


def serialize_notebook(notebook: Notebook) -> bytes:
    """Write a Notebook back to nbformat-4 JSON.

    Sources are emitted as plain strings, which nbformat permits; cell
    sources round-trip byte-exactly through parse -> serialize -> parse.
    """
    cells = []
    for cell in notebook.cells:
        entry: dict = {
            "cell_type": cell.kind.value,
            "metadata": {},
            "source": cell.source,
        }
        if cell.kind is CellKind.CODE:
            entry["outputs"] = list(cell.outputs)
            entry["execution_count"] = cell.execution_count
        cells.append(entry)
    doc = {
        "cells": cells,
        "metadata": notebook.metadata,
        "nbformat": notebook.format_version[0],
        "nbformat_minor": notebook.format_version[1],
    }
    return json.dumps(doc, ensure_ascii=False, indent=1).encode("utf-8")


def code_cells(notebook: Notebook) -> list[Cell]:
    """Cells with kind=code, document order and indices preserved."""
    return [cell for cell in notebook.cells if cell.kind is CellKind.CODE]


def _output_text(value) -> str:
    return _join_source(value)


def extract_output_assets(cell: Cell) -> list[OutputAsset]:
    """Convert a code cell's raw outputs into typed assets, order preserved."""
    if cell.kind is not CellKind.CODE:
        raise ValueError(f"cell {cell.index} is {cell.kind.value}, outputs exist on code cells only")
    assets: list[OutputAsset] = []
    for raw in cell.outputs:
        output_type = raw.get("output_type")
        if output_type == "stream":
            assets.append(OutputAsset(OutputKind.STREAM_TEXT, _output_text(raw.get("text", "")), "text/plain"))
        elif output_type == "execute_result":
            text = _output_text(raw.get("data", {}).get("text/plain", ""))
            assets.append(OutputAsset(OutputKind.EXECUTE_RESULT_TEXT, text, "text/plain"))
        elif output_type == "display_data":
            data = raw.get("data", {})
            if "image/png" in data:
                b64 = _output_text(data["image/png"])
                try:
                    payload = base64.b64decode(b64, validate=True)
                except (binascii.Error, ValueError) as exc:
                    raise DecodeError(f"cell {cell.index}: invalid base64 image payload") from exc
                if not payload.startswith(PNG_MAGIC):
                    raise DecodeError(f"cell {cell.index}: image/png payload is not a PNG")
                assets.append(OutputAsset(OutputKind.IMAGE_PNG, payload, "image/png"))
            elif "text/plain" in data:
                assets.append(OutputAsset(OutputKind.EXECUTE_RESULT_TEXT, _output_text(data["text/plain"]), "text/plain"))
        elif output_type == "error":
            trace = raw.get("traceback", [])
            payload = "\n".join(trace) if trace else f"{raw.get('ename', '')}: {raw.get('evalue', '')}"
            assets.append(OutputAsset(OutputKind.ERROR, payload, "text/plain"))
    return assets
