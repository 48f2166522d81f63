"""Compile a design script plus measured audio durations into an absolute
timeline of animated clips.

All times are integer milliseconds on the full-timeline axis: scene k+1
starts exactly where scene k ends, so durations sum without drift.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .errors import MissingAudio
from .script import DesignScript, Effect, Scene, effects_for

MOVE_TO_NEXT_MS = 400
EMPHASIS_SCALE_MS = 300
ANNOTATION_FADE_MS = 200
CAPTION_FADE_MS = 150


@dataclass(frozen=True)
class AnimationSpec:
    kind: str  # fade_in | fade_out | move_to_next | scale | shadow | none
    duration_ms: int = 0
    curve: str = "ease_in_out"  # linear | ease_in_out

    def __post_init__(self):
        if self.duration_ms < 0:
            raise ValueError("animation duration must be >= 0")


NO_ANIMATION = AnimationSpec("none", 0)


@dataclass(frozen=True)
class Clip:
    target: str  # scene_backdrop | emphasis:<id> | annotation:<id> | caption:<segment id>
    start_ms: int
    duration_ms: int
    enter: AnimationSpec = NO_ANIMATION
    exit: AnimationSpec = NO_ANIMATION
    emphasis_anim: AnimationSpec | None = None

    @property
    def end_ms(self) -> int:
        return self.start_ms + self.duration_ms


@dataclass(frozen=True)
class TimelineScene:
    scene_id: str
    start_ms: int
    duration_ms: int
    clips: tuple[Clip, ...]
    segment_windows: tuple[tuple[str, int, int], ...]  # (segment id, audio start, duration)
    scene: Scene

    @property
    def end_ms(self) -> int:
        return self.start_ms + self.duration_ms


@dataclass(frozen=True)
class Timeline:
    scenes: tuple[TimelineScene, ...]
    total_ms: int
    fps: int
    resolution: tuple[int, int]


def frame_count(total_ms: int, fps: int) -> int:
    return -(-total_ms * fps // 1000)  # exact ceil(total_ms * fps / 1000)


def segment_audio_starts(timeline: Timeline) -> dict[str, int]:
    return {
        segment_id: start
        for scene in timeline.scenes
        for segment_id, start, _duration in scene.segment_windows
    }


def _first_linking_window(scene: Scene, windows, emphasis_id: str):
    for segment in scene.segments:
        if emphasis_id in segment.linked_emphasis:
            for segment_id, start, duration in windows:
                if segment_id == segment.id:
                    return start, duration
    return None


def compile_timeline(script: DesignScript, audio_durations: Mapping[str, int]) -> Timeline:
    """Schedule every scene and clip.

    Per scene: the enter animation occupies [0, enter_ms); segment k's audio
    starts at enter_ms + sum of earlier durations plus one gap per boundary;
    a linked emphasis starts exactly at its first linking segment's audio
    start, with its annotation fading in at that instant and out at segment
    end; the exit animation occupies the final exit_ms. Scenes after the
    first enter with the move-to-next slide instead of a fade.
    """
    settings = script.settings
    scenes: list[TimelineScene] = []
    cursor = 0

    for scene_position, scene in enumerate(script.scenes):
        for segment in scene.segments:
            if segment.id not in audio_durations:
                raise MissingAudio(f"segment {segment.id} has no audio duration")

        offset = settings.enter_ms
        windows: list[tuple[str, int, int]] = []
        for k, segment in enumerate(scene.segments):
            duration = int(audio_durations[segment.id])
            windows.append((segment.id, cursor + offset, duration))
            offset += duration
            if k < len(scene.segments) - 1:
                offset += settings.gap_ms
        content_end = cursor + offset  # == cursor + enter_ms for empty scenes
        scene_duration = offset + settings.exit_ms
        scene_end = cursor + scene_duration

        if scene_position == 0:
            enter = AnimationSpec("fade_in", settings.enter_ms)
        else:
            enter = AnimationSpec("move_to_next", min(MOVE_TO_NEXT_MS, settings.enter_ms))
        clips: list[Clip] = [Clip(
            target="scene_backdrop",
            start_ms=cursor,
            duration_ms=scene_duration,
            enter=enter,
            exit=AnimationSpec("fade_out", settings.exit_ms),
        )]

        for (segment_id, start, duration), segment in zip(windows, scene.segments):
            if duration <= 0:
                continue
            effects = effects_for(segment.category)
            clips.append(Clip(
                target=f"caption:{segment_id}",
                start_ms=start,
                duration_ms=duration,
                enter=AnimationSpec("fade_in", min(CAPTION_FADE_MS, duration // 2))
                if Effect.FADE_IN in effects else NO_ANIMATION,
                exit=AnimationSpec("fade_out", min(CAPTION_FADE_MS, duration // 2))
                if Effect.FADE_OUT in effects else NO_ANIMATION,
            ))

        for element in scene.emphases:
            linked = _first_linking_window(scene, windows, element.id)
            if linked is not None:
                start, segment_duration = linked
                annotation_end = start + segment_duration
            else:
                start = cursor + settings.enter_ms
                annotation_end = content_end
            emphasis_duration = content_end - start
            if emphasis_duration <= 0:
                continue
            clips.append(Clip(
                target=f"emphasis:{element.id}",
                start_ms=start,
                duration_ms=emphasis_duration,
                emphasis_anim=AnimationSpec("scale", EMPHASIS_SCALE_MS),
            ))
            annotation_duration = annotation_end - start
            if annotation_duration > 0:
                clips.append(Clip(
                    target=f"annotation:{element.id}",
                    start_ms=start,
                    duration_ms=annotation_duration,
                    enter=AnimationSpec("fade_in", min(ANNOTATION_FADE_MS, annotation_duration // 2)),
                    exit=AnimationSpec("fade_out", min(ANNOTATION_FADE_MS, annotation_duration // 2)),
                ))

        scenes.append(TimelineScene(
            scene_id=scene.id,
            start_ms=cursor,
            duration_ms=scene_duration,
            clips=tuple(clips),
            segment_windows=tuple(windows),
            scene=scene,
        ))
        cursor = scene_end

    return Timeline(
        scenes=tuple(scenes),
        total_ms=cursor,
        fps=settings.fps,
        resolution=settings.resolution,
    )


def timeline_manifest(timeline: Timeline) -> dict:
    return {
        "total_ms": timeline.total_ms,
        "fps": timeline.fps,
        "resolution": list(timeline.resolution),
        "frame_count": frame_count(timeline.total_ms, timeline.fps),
        "scenes": [
            {
                "id": scene.scene_id,
                "start_ms": scene.start_ms,
                "duration_ms": scene.duration_ms,
                "segments": [
                    {"id": segment_id, "audio_start_ms": start, "duration_ms": duration}
                    for segment_id, start, duration in scene.segment_windows
                ],
                "clips": [
                    {
                        "target": clip.target,
                        "start_ms": clip.start_ms,
                        "duration_ms": clip.duration_ms,
                        "enter": {"kind": clip.enter.kind, "duration_ms": clip.enter.duration_ms},
                        "exit": {"kind": clip.exit.kind, "duration_ms": clip.exit.duration_ms},
                        "emphasis_anim": None if clip.emphasis_anim is None else {
                            "kind": clip.emphasis_anim.kind,
                            "duration_ms": clip.emphasis_anim.duration_ms,
                        },
                    }
                    for clip in scene.clips
                ],
            }
            for scene in timeline.scenes
        ],
    }
