"""Scene-based authoring IR: emphasis elements, categorized narration
segments, the category-to-effect mapping, validation and canonical
serialization (.nps.json, schema version 1).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum

from .dataflow import LogicFlow
from .errors import (
    EmptyAnnotation,
    EmptyText,
    SchemaViolation,
    SpanOutOfBounds,
    SpanOverlap,
    TooManyLinks,
    UnknownId,
)
from .notebook import Notebook

SCHEMA_VERSION = 1
FILE_EXTENSION = ".nps.json"
DEFAULT_SCALE_FACTOR = 1.25


class NarrationCategory(str, Enum):
    BACKGROUND = "background"
    CODE_INTERPRETATION = "code_interpretation"
    RESULT_DESCRIPTION = "result_description"
    INSIGHT = "insight"
    CONCLUSION = "conclusion"
    TRANSITION = "transition"
    DIRECTION = "direction"
    QUESTION = "question"


class Effect(str, Enum):
    FADE_IN = "fade_in"
    FADE_OUT = "fade_out"
    MOVE_TO_NEXT = "move_to_next"
    SNIPPET_SCALING = "snippet_scaling"
    SNIPPET_SHADOW = "snippet_shadow"
    ANNOTATION_FADE_IN = "annotation_fade_in"
    ANNOTATION_FADE_OUT = "annotation_fade_out"


# category -> default visual effects; the interpretation-style categories
# other than code interpretation share the plain fade-in treatment
EFFECT_MAP: dict[NarrationCategory, frozenset[Effect]] = {
    NarrationCategory.CODE_INTERPRETATION: frozenset({
        Effect.SNIPPET_SHADOW, Effect.SNIPPET_SCALING,
        Effect.ANNOTATION_FADE_IN, Effect.ANNOTATION_FADE_OUT,
    }),
    NarrationCategory.TRANSITION: frozenset({Effect.MOVE_TO_NEXT}),
    NarrationCategory.DIRECTION: frozenset({Effect.FADE_IN}),
    NarrationCategory.QUESTION: frozenset({Effect.FADE_IN, Effect.FADE_OUT}),
    NarrationCategory.BACKGROUND: frozenset({Effect.FADE_IN}),
    NarrationCategory.RESULT_DESCRIPTION: frozenset({Effect.FADE_IN}),
    NarrationCategory.INSIGHT: frozenset({Effect.FADE_IN}),
    NarrationCategory.CONCLUSION: frozenset({Effect.FADE_IN}),
}


def effects_for(category: NarrationCategory) -> frozenset[Effect]:
    """Default visual effects for a narration category. Total function."""
    return EFFECT_MAP[category]


@dataclass(frozen=True)
class EmphasisElement:
    id: str
    cell_index: int
    span: tuple[int, int]  # character offsets into the cell source
    annotation: str
    scale_factor: float = DEFAULT_SCALE_FACTOR


@dataclass(frozen=True)
class NarrationSegment:
    id: str
    text: str
    category: NarrationCategory
    linked_emphasis: tuple[str, ...] = ()
    interactive: bool = False

    def __post_init__(self):
        if len(self.linked_emphasis) > 2:
            raise TooManyLinks(f"segment {self.id}: at most 2 linked emphasis elements")
        if self.interactive and self.category is not NarrationCategory.QUESTION:
            raise SchemaViolation(f"segment {self.id}: interactive requires the question category")


@dataclass(frozen=True)
class Scene:
    id: str
    cell_index: int
    source: str  # snapshot of the backing cell, the scene backdrop
    emphases: tuple[EmphasisElement, ...] = ()
    segments: tuple[NarrationSegment, ...] = ()
    include_outputs: bool = False

    def emphasis(self, emphasis_id: str) -> EmphasisElement:
        for element in self.emphases:
            if element.id == emphasis_id:
                return element
        raise UnknownId(f"scene {self.id}: no emphasis {emphasis_id!r}")

    def segment(self, segment_id: str) -> NarrationSegment:
        for segment in self.segments:
            if segment.id == segment_id:
                return segment
        raise UnknownId(f"scene {self.id}: no segment {segment_id!r}")


@dataclass(frozen=True)
class Settings:
    resolution: tuple[int, int] = (1920, 1080)
    fps: int = 30
    voice: str = "default"
    gap_ms: int = 300
    enter_ms: int = 500
    exit_ms: int = 500


@dataclass(frozen=True)
class DesignScript:
    scenes: tuple[Scene, ...] = ()
    settings: Settings = field(default_factory=Settings)

    def scene(self, scene_id: str) -> Scene:
        for scene in self.scenes:
            if scene.id == scene_id:
                return scene
        raise UnknownId(f"no scene {scene_id!r}")

    def scene_for_cell(self, cell_index: int) -> Scene:
        for scene in self.scenes:
            if scene.cell_index == cell_index:
                return scene
        raise UnknownId(f"no scene for cell {cell_index}")

    def replace_scene(self, updated: Scene) -> "DesignScript":
        scenes = tuple(updated if scene.id == updated.id else scene for scene in self.scenes)
        return replace(self, scenes=scenes)


def script_from_flow(notebook: Notebook, flow: LogicFlow, settings: Settings | None = None) -> DesignScript:
    """One scene per visible flow node, in flow order, with empty narration."""
    cells = {cell.index: cell for cell in notebook.cells}
    scenes = []
    for node in flow.visible_nodes():
        cell = cells[node.id]
        scenes.append(Scene(
            id=f"s{node.id}",
            cell_index=node.id,
            source=cell.source,
            include_outputs=bool(cell.outputs),
        ))
    return DesignScript(scenes=tuple(scenes), settings=settings or Settings())


def _next_suffix(ids: list[str]) -> int:
    best = 0
    for existing in ids:
        tail = existing.rsplit(".", 1)[-1]
        if tail.isdigit():
            best = max(best, int(tail))
    return best + 1


def add_emphasis(scene: Scene, span: tuple[int, int], annotation: str,
                 scale_factor: float = DEFAULT_SCALE_FACTOR) -> tuple[Scene, EmphasisElement]:
    """Append a new emphasis element over a span of the scene's source."""
    start, end = span
    if not (0 <= start < end <= len(scene.source)):
        raise SpanOutOfBounds(f"span {span} outside source of length {len(scene.source)}")
    for other in scene.emphases:
        if start < other.span[1] and other.span[0] < end:
            raise SpanOverlap(f"span {span} overlaps emphasis {other.id} at {other.span}")
    if not annotation.strip():
        raise EmptyAnnotation("annotation must not be empty")
    element = EmphasisElement(
        id=f"e{scene.cell_index}.{_next_suffix([e.id for e in scene.emphases])}",
        cell_index=scene.cell_index,
        span=(start, end),
        annotation=annotation,
        scale_factor=scale_factor,
    )
    return replace(scene, emphases=scene.emphases + (element,)), element


def remove_emphasis(scene: Scene, emphasis_id: str) -> Scene:
    """Drop an emphasis element and clear any segment links to it."""
    scene.emphasis(emphasis_id)
    emphases = tuple(e for e in scene.emphases if e.id != emphasis_id)
    segments = tuple(
        replace(seg, linked_emphasis=tuple(x for x in seg.linked_emphasis if x != emphasis_id))
        for seg in scene.segments
    )
    return replace(scene, emphases=emphases, segments=segments)


def link_segment(scene: Scene, segment_id: str, emphasis_ids: list[str]) -> Scene:
    """Replace a segment's emphasis links (at most two)."""
    if len(emphasis_ids) > 2:
        raise TooManyLinks(f"segment may link one or two emphasis elements, got {len(emphasis_ids)}")
    segment = scene.segment(segment_id)
    for emphasis_id in emphasis_ids:
        scene.emphasis(emphasis_id)  # raises UnknownId
    updated = replace(segment, linked_emphasis=tuple(emphasis_ids))
    segments = tuple(updated if seg.id == segment_id else seg for seg in scene.segments)
    return replace(scene, segments=segments)


TRANSITION_CUES = ("next", "now", "so the next", "we started with", "focusing on", "by further")
DIRECTION_CUES = ("pay close attention", "special attention", "note that")
FALLBACK_CUES: list[tuple[NarrationCategory, tuple[str, ...]]] = [
    (NarrationCategory.BACKGROUND,
     ("in this video", "going to explore", "this dataset contains", "let's start", "we will use", "in this tutorial")),
    (NarrationCategory.RESULT_DESCRIPTION,
     ("the result", "we can see", "shows us", "the output", "from this", "as you can see")),
    (NarrationCategory.INSIGHT,
     ("there is no relationship", "suggests that", "indicates that", "correlation", "interestingly")),
    (NarrationCategory.CONCLUSION,
     ("in conclusion", "to summarize", "key takeaway", "allows us to understand", "overall", "in summary")),
]

_QUOTED_TOKEN_RE = re.compile(r"\*([^*\n]+)\*|`([^`\n]+)`|\"([^\"\n]+)\"|'([^'\n]+)'")
_CODE_SHAPED_RE = re.compile(r"[A-Za-z_][\w.]*\(\)?|\w+_\w+|\w+\.\w+")


def _code_candidates(text: str) -> list[str]:
    candidates = [next(g for g in match.groups() if g is not None)
                  for match in _QUOTED_TOKEN_RE.finditer(text)]
    candidates.extend(_CODE_SHAPED_RE.findall(text))
    return candidates


def _names_code_token(text: str, source: str) -> bool:
    candidates = _code_candidates(text)
    if not source:
        return bool(candidates)
    lowered = source.lower()
    return any(c.lower().strip() in lowered for c in candidates if c.strip())


def classify_segment(text: str, source: str = "") -> NarrationCategory:
    """Rule-based narration category for one sentence.

    `source` is the backing cell's code; when given, the code-interpretation
    check requires a token from the sentence to occur in it.
    """
    stripped = text.strip()
    if not stripped:
        raise EmptyText("cannot classify an empty sentence")
    if stripped.endswith("?"):
        return NarrationCategory.QUESTION
    lowered = stripped.lower()
    openings = (lowered, lowered[3:]) if lowered.startswith("so ") else (lowered,)
    if any(opening.startswith(cue) for cue in TRANSITION_CUES for opening in openings):
        return NarrationCategory.TRANSITION
    if any(cue in lowered for cue in DIRECTION_CUES):
        return NarrationCategory.DIRECTION
    if _names_code_token(stripped, source):
        return NarrationCategory.CODE_INTERPRETATION
    for category, cues in FALLBACK_CUES:
        if any(cue in lowered for cue in cues):
            return category
    return NarrationCategory.BACKGROUND


def emphasis_record(script: DesignScript) -> list[tuple[str, EmphasisElement]]:
    """All emphasis elements, scene order first, span order within a scene."""
    record = []
    for scene in script.scenes:
        for element in sorted(scene.emphases, key=lambda e: e.span[0]):
            record.append((scene.id, element))
    return record


# --- serialization ---------------------------------------------------------

def _script_to_dict(script: DesignScript) -> dict:
    return {
        "nps": SCHEMA_VERSION,
        "settings": {
            "resolution": list(script.settings.resolution),
            "fps": script.settings.fps,
            "voice": script.settings.voice,
            "gap_ms": script.settings.gap_ms,
            "enter_ms": script.settings.enter_ms,
            "exit_ms": script.settings.exit_ms,
        },
        "scenes": [
            {
                "id": scene.id,
                "cell_index": scene.cell_index,
                "source": scene.source,
                "include_outputs": scene.include_outputs,
                "emphases": [
                    {
                        "id": element.id,
                        "cell_index": element.cell_index,
                        "span": list(element.span),
                        "annotation": element.annotation,
                        "scale_factor": element.scale_factor,
                    }
                    for element in scene.emphases
                ],
                "segments": [
                    {
                        "id": segment.id,
                        "text": segment.text,
                        "category": segment.category.value,
                        "linked_emphasis": list(segment.linked_emphasis),
                        "interactive": segment.interactive,
                    }
                    for segment in scene.segments
                ],
            }
            for scene in script.scenes
        ],
    }


def serialize(script: DesignScript) -> bytes:
    """Canonical JSON: sorted keys, two-space indent, trailing newline."""
    return (json.dumps(_script_to_dict(script), sort_keys=True, ensure_ascii=False, indent=2) + "\n").encode("utf-8")


class _Check:
    """Validation helper that carries the JSON path into error messages."""

    def __init__(self, payload, path: str):
        self.payload = payload
        self.path = path

    def require(self, condition: bool, message: str) -> None:
        if not condition:
            raise SchemaViolation(f"{self.path}: {message}")

    def key(self, name: str, kind=None):
        self.require(isinstance(self.payload, dict) and name in self.payload, f"missing key {name!r}")
        value = self.payload[name]
        if kind is not None and not isinstance(value, kind):
            raise SchemaViolation(f"{self.path}.{name}: expected {getattr(kind, '__name__', kind)}")
        return value


def _parse_emphasis(payload, path: str) -> EmphasisElement:
    check = _Check(payload, path)
    span = check.key("span", list)
    check.require(len(span) == 2 and all(isinstance(x, int) for x in span), "span must be [start, end]")
    annotation = check.key("annotation", str)
    check.require(bool(annotation.strip()), "annotation must not be empty")
    return EmphasisElement(
        id=str(check.key("id")),
        cell_index=check.key("cell_index", int),
        span=(span[0], span[1]),
        annotation=annotation,
        scale_factor=float(check.key("scale_factor", (int, float))),
    )


def _parse_segment(payload, path: str) -> NarrationSegment:
    check = _Check(payload, path)
    linked = check.key("linked_emphasis", list)
    if len(linked) > 2:
        raise SchemaViolation(f"{path}.linked_emphasis: at most 2 linked emphasis elements")
    category_raw = check.key("category", str)
    try:
        category = NarrationCategory(category_raw)
    except ValueError:
        raise SchemaViolation(f"{path}.category: unknown category {category_raw!r}") from None
    interactive = check.key("interactive", bool)
    check.require(not interactive or category is NarrationCategory.QUESTION,
                  "interactive requires the question category")
    return NarrationSegment(
        id=str(check.key("id")),
        text=check.key("text", str),
        category=category,
        linked_emphasis=tuple(str(x) for x in linked),
        interactive=interactive,
    )


def _parse_scene(payload, path: str) -> Scene:
    check = _Check(payload, path)
    source = check.key("source", str)
    emphases = tuple(
        _parse_emphasis(entry, f"{path}.emphases[{i}]")
        for i, entry in enumerate(check.key("emphases", list))
    )
    seen_spans: list[tuple[int, int]] = []
    for i, element in enumerate(emphases):
        start, end = element.span
        if not (0 <= start < end <= len(source)):
            raise SchemaViolation(f"{path}.emphases[{i}].span: outside source bounds")
        if any(start < e2 and s2 < end for s2, e2 in seen_spans):
            raise SchemaViolation(f"{path}.emphases[{i}].span: overlaps an earlier span")
        seen_spans.append((start, end))
    segments = tuple(
        _parse_segment(entry, f"{path}.segments[{i}]")
        for i, entry in enumerate(check.key("segments", list))
    )
    known = {element.id for element in emphases}
    for i, segment in enumerate(segments):
        for linked_id in segment.linked_emphasis:
            if linked_id not in known:
                raise SchemaViolation(f"{path}.segments[{i}].linked_emphasis: unknown id {linked_id!r}")
    return Scene(
        id=str(check.key("id")),
        cell_index=check.key("cell_index", int),
        source=source,
        emphases=emphases,
        segments=segments,
        include_outputs=check.key("include_outputs", bool),
    )


def deserialize(data: bytes) -> DesignScript:
    """Parse and validate .nps.json bytes. Raises SchemaViolation with a
    path diagnostic on the first offending element.
    """
    try:
        payload = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaViolation(f"$: not valid JSON ({exc})") from exc
    check = _Check(payload, "$")
    check.require(isinstance(payload, dict), "top level must be an object")
    version = check.key("nps", int)
    check.require(version == SCHEMA_VERSION, f"unsupported schema version {version}")
    settings_payload = check.key("settings", dict)
    s_check = _Check(settings_payload, "$.settings")
    resolution = s_check.key("resolution", list)
    s_check.require(len(resolution) == 2 and all(isinstance(x, int) and x > 0 for x in resolution),
                    "resolution must be two positive integers")
    fps = s_check.key("fps", int)
    s_check.require(fps > 0, "fps must be positive")
    for field_name in ("gap_ms", "enter_ms", "exit_ms"):
        value = s_check.key(field_name, int)
        s_check.require(value >= 0, f"{field_name} must be non-negative")
    settings = Settings(
        resolution=(resolution[0], resolution[1]),
        fps=fps,
        voice=s_check.key("voice", str),
        gap_ms=settings_payload["gap_ms"],
        enter_ms=settings_payload["enter_ms"],
        exit_ms=settings_payload["exit_ms"],
    )
    scenes = tuple(
        _parse_scene(entry, f"$.scenes[{i}]")
        for i, entry in enumerate(check.key("scenes", list))
    )
    seen_ids = set()
    for i, scene in enumerate(scenes):
        if scene.id in seen_ids:
            raise SchemaViolation(f"$.scenes[{i}].id: duplicate scene id {scene.id!r}")
        seen_ids.add(scene.id)
    return DesignScript(scenes=scenes, settings=settings)
