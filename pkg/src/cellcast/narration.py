"""Narration assembly over a design script: applying generated narration as
sentence segments, inserting transitions, and the question transform.
"""

from __future__ import annotations

import re
from dataclasses import replace
from typing import Callable, Sequence

from .errors import AlreadyInteractive, UnknownCell, UnknownScene
from .llm import NarrationResult
from .script import (
    DesignScript,
    EmphasisElement,
    NarrationCategory,
    NarrationSegment,
    Scene,
    classify_segment,
)

_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])[\"')\]]*\s+")
_IDENTIFIER_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")

TRANSITION_TEMPLATES = (
    "So the next thing we're going to do is work through this cell.",
    "Focusing on this cell, let's take the analysis one step further.",
    "By further building on what we have, we move to the next part.",
)


def split_sentences(text: str) -> list[str]:
    """One segment per sentence: terminal punctuation followed by whitespace.

    Abbreviation periods are deliberately not special-cased.
    """
    return [part.strip() for part in _SENTENCE_SPLIT_RE.split(text) if part.strip()]


def _mentions(segment_text: str, snippet: str) -> bool:
    # full snippet substring, or any identifier of length >= 5 on a word
    # boundary; the length floor keeps generic words like "data" from linking
    snippet = snippet.strip()
    if snippet and snippet in segment_text:
        return True
    for token in _IDENTIFIER_RE.findall(snippet):
        if len(token) >= 5 and re.search(rf"\b{re.escape(token)}\b", segment_text):
            return True
    return False


def _auto_links(segment_text: str, scene: Scene) -> tuple[str, ...]:
    matches = [
        element for element in sorted(scene.emphases, key=lambda e: e.span[0])
        if _mentions(segment_text, scene.source[element.span[0]:element.span[1]])
    ]
    return tuple(element.id for element in matches[:2])  # earliest spans win


def _next_segment_suffix(scene: Scene) -> int:
    best = 0
    for segment in scene.segments:
        tail = segment.id.rsplit(".", 1)[-1]
        if tail.isdigit():
            best = max(best, int(tail))
    return best + 1


def segments_from_narration(scene: Scene, narration: str) -> tuple[NarrationSegment, ...]:
    """Sentence-split, classify against the scene source, and auto-link."""
    segments = []
    for position, sentence in enumerate(split_sentences(narration), start=1):
        segments.append(NarrationSegment(
            id=f"g{scene.cell_index}.{position}",
            text=sentence,
            category=classify_segment(sentence, scene.source),
            linked_emphasis=_auto_links(sentence, scene),
        ))
    return tuple(segments)


def apply_narration(script: DesignScript, results: Sequence[NarrationResult]) -> DesignScript:
    """Replace each addressed scene's segments with the generated narration.

    Emphasis elements are untouched; only segments are rebuilt.
    """
    for result in results:
        matched = [scene for scene in script.scenes if scene.cell_index == result.id]
        if not matched:
            raise UnknownCell(f"narration result for cell {result.id}, which has no scene")
        scene = matched[0]
        script = script.replace_scene(
            replace(scene, segments=segments_from_narration(scene, result.narration)))
    return script


def insert_transition(script: DesignScript, scene_id: str, position: str,
                      text: str | None = None, segment_index: int | None = None) -> DesignScript:
    """Insert a transition segment at the scene opening or before a chosen
    segment index (a turning point).
    """
    try:
        scene = script.scene(scene_id)
    except Exception as exc:
        raise UnknownScene(str(exc)) from exc
    if position not in ("opening", "turning_point"):
        raise ValueError(f"position must be opening or turning_point, got {position!r}")
    if position == "turning_point":
        if segment_index is None:
            raise ValueError("turning_point requires a segment index")
        at = max(0, min(segment_index, len(scene.segments)))
    else:
        at = 0
    if text is None:
        scene_position = list(script.scenes).index(scene)
        text = TRANSITION_TEMPLATES[scene_position % len(TRANSITION_TEMPLATES)]
    segment = NarrationSegment(
        id=f"g{scene.cell_index}.{_next_segment_suffix(scene)}",
        text=text,
        category=NarrationCategory.TRANSITION,
    )
    segments = scene.segments[:at] + (segment,) + scene.segments[at:]
    return script.replace_scene(replace(scene, segments=segments))


def make_interactive(script: DesignScript, scene_id: str, segment_id: str,
                     transform: Callable[[str], str]) -> DesignScript:
    """Swap a declarative segment for its question-and-answer form."""
    try:
        scene = script.scene(scene_id)
    except Exception as exc:
        raise UnknownScene(str(exc)) from exc
    segment = scene.segment(segment_id)  # raises UnknownId
    if segment.interactive:
        raise AlreadyInteractive(f"segment {segment_id} is already interactive")
    updated = replace(
        segment,
        text=transform(segment.text),
        category=NarrationCategory.QUESTION,
        interactive=True,
    )
    segments = tuple(updated if seg.id == segment_id else seg for seg in scene.segments)
    return script.replace_scene(replace(scene, segments=segments))


def scene_emphases(script: DesignScript) -> list[EmphasisElement]:
    return [element for scene in script.scenes for element in scene.emphases]
