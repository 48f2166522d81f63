"""Deterministic frame rasterizer and video assembly.

Frames are drawn with the bundled monospace font only, so identical
(timeline, t, assets) inputs produce identical pixels on any platform.
MP4 assembly pipes raw RGB24 frames into an external encoder; the
image-sequence mode writes numbered PNGs plus one WAV for encoder-free runs.
"""

from __future__ import annotations

import io
import json
import shutil
import subprocess
import wave
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Mapping

from PIL import Image, ImageDraw, ImageFont
from pygments import lex
from pygments.lexers import PythonLexer
from pygments.token import Comment, Keyword, Name, Number, Operator, String

from .errors import EncoderNonZeroExit, EncoderSpawnFailure, OutOfRange, UnknownScene
from .notebook import OutputAsset, OutputKind
from .script import DesignScript
from .timeline import Clip, Timeline, TimelineScene, compile_timeline, frame_count, timeline_manifest
from .tts import SAMPLE_RATE, SAMPLE_WIDTH, SAMPLES_PER_MS, AudioClip

FONT_PATH = Path(__file__).parent / "assets" / "DejaVuSansMono.ttf"

BACKGROUND = (15, 17, 22)
PANEL = (24, 27, 34)
PANEL_EDGE = (45, 50, 60)
TEXT_DEFAULT = (212, 216, 222)
CAPTION_BAND = (0, 0, 0)
ANNOTATION_COLOR = (255, 208, 112)
EMPHASIS_BOX = (38, 44, 58)

TOKEN_COLORS = {
    Keyword: (198, 120, 221),
    String: (152, 195, 121),
    Comment: (106, 115, 125),
    Number: (209, 154, 102),
    Operator: (86, 182, 194),
    Name.Function: (97, 175, 239),
    Name.Class: (229, 192, 123),
}


@dataclass(frozen=True)
class RenderArtifact:
    frame_count: int
    duration_ms: int
    frames_dir: str | None = None
    audio_path: str | None = None
    mp4_path: str | None = None
    manifest_path: str | None = None


@lru_cache(maxsize=16)
def _font(size: int) -> ImageFont.FreeTypeFont:
    return ImageFont.truetype(str(FONT_PATH), size)


def _token_color(token_type) -> tuple[int, int, int]:
    while token_type is not None:
        for known, color in TOKEN_COLORS.items():
            if token_type is known:
                return color
        token_type = token_type.parent
    return TEXT_DEFAULT


@lru_cache(maxsize=256)
def _tokenized_lines(source: str) -> tuple[tuple[tuple[str, tuple[int, int, int]], ...], ...]:
    """Per-line (text, color) runs for a source string."""
    lines: list[list[tuple[str, tuple[int, int, int]]]] = [[]]
    for token_type, value in lex(source, PythonLexer(stripnl=False, ensurenl=False)):
        color = _token_color(token_type)
        parts = value.split("\n")
        for i, part in enumerate(parts):
            if i > 0:
                lines.append([])
            if part:
                lines[-1].append((part, color))
    return tuple(tuple(line) for line in lines)


def anim_progress(spec, elapsed_ms: int) -> float:
    """Progress in [0, 1] through an animation, applying its curve."""
    if spec is None or spec.kind == "none" or spec.duration_ms <= 0:
        return 1.0
    p = min(1.0, max(0.0, elapsed_ms / spec.duration_ms))
    if spec.curve == "ease_in_out":
        p = p * p * (3 - 2 * p)  # smoothstep
    return p


def emphasis_scale_at(clip: Clip, t_ms: int, scale_factor: float) -> float:
    """Current scale of an emphasized span, reaching scale_factor exactly
    when the scale animation completes."""
    p = anim_progress(clip.emphasis_anim, t_ms - clip.start_ms)
    return 1.0 + (scale_factor - 1.0) * p


def _scene_at(timeline: Timeline, t_ms: int) -> TimelineScene:
    if not (0 <= t_ms < timeline.total_ms):
        raise OutOfRange(f"t={t_ms} ms outside [0, {timeline.total_ms})")
    for scene in timeline.scenes:
        if scene.start_ms <= t_ms < scene.end_ms:
            return scene
    raise OutOfRange(f"t={t_ms} ms matched no scene")  # unreachable on valid timelines


def _active(clip: Clip, t_ms: int) -> bool:
    return clip.start_ms <= t_ms < clip.end_ms


def _clip_opacity(clip: Clip, t_ms: int) -> float:
    alpha = 1.0
    if clip.enter.kind == "fade_in" and clip.enter.duration_ms > 0:
        alpha = min(alpha, anim_progress(clip.enter, t_ms - clip.start_ms))
    if clip.exit.kind == "fade_out" and clip.exit.duration_ms > 0:
        into_exit = t_ms - (clip.end_ms - clip.exit.duration_ms)
        if into_exit > 0:
            alpha = min(alpha, 1.0 - anim_progress(clip.exit, into_exit))
    return alpha


def _span_lines(source: str, span: tuple[int, int]) -> tuple[int, int, int]:
    """(first line index, column of span start, span length on that line)."""
    start, end = span
    line_index = source.count("\n", 0, start)
    line_start = source.rfind("\n", 0, start) + 1
    column = start - line_start
    line_end = source.find("\n", start)
    if line_end == -1:
        line_end = len(source)
    return line_index, column, min(end, line_end) - start


def _wrap(text: str, width_chars: int) -> list[str]:
    if width_chars <= 0:
        return [text]
    words = text.split()
    lines, current = [], ""
    for word in words:
        candidate = f"{current} {word}".strip()
        if len(candidate) <= width_chars or not current:
            current = candidate
        else:
            lines.append(current)
            current = word
    if current:
        lines.append(current)
    return lines


def render_frame(timeline: Timeline, t_ms: int,
                 assets: Mapping[int, list[OutputAsset]] | None = None,
                 captions: bool = True) -> Image.Image:
    """Rasterize one RGB frame at absolute time t_ms. Pure function."""
    scene_entry = _scene_at(timeline, t_ms)
    scene = scene_entry.scene
    width, height = timeline.resolution
    background = Image.new("RGBA", (width, height), BACKGROUND + (255,))
    content = Image.new("RGBA", (width, height), (0, 0, 0, 0))
    draw = ImageDraw.Draw(content)

    font_size = max(10, height * 20 // 1080)
    font = _font(font_size)
    char_w = font.getlength("M")
    line_h = font_size * 13 // 10

    margin = width * 3 // 100
    code_x = margin
    code_y = height * 8 // 100
    code_w = width * 60 // 100
    code_h = height * 82 // 100
    note_x = code_x + code_w + margin
    note_w = width - note_x - margin

    draw.rounded_rectangle([code_x, code_y, code_x + code_w, code_y + code_h],
                           radius=8, fill=PANEL + (255,), outline=PANEL_EDGE + (255,))

    pad = font_size
    text_x = code_x + pad
    text_y = code_y + pad
    lines = _tokenized_lines(scene.source)
    for row, runs in enumerate(lines):
        x = text_x
        y = text_y + row * line_h
        if y + line_h > code_y + code_h - pad:
            break
        for text, color in runs:
            draw.text((x, y), text, font=font, fill=color + (255,))
            x += char_w * len(text)

    backdrop = scene_entry.clips[0]
    emphasis_by_id = {element.id: element for element in scene.emphases}

    for clip in scene_entry.clips:
        if not _active(clip, t_ms):
            continue
        kind, _, ident = clip.target.partition(":")

        if kind == "emphasis":
            element = emphasis_by_id.get(ident)
            if element is None:
                continue
            line_index, column, length = _span_lines(scene.source, element.span)
            scale = emphasis_scale_at(clip, t_ms, element.scale_factor)
            progress = anim_progress(clip.emphasis_anim, t_ms - clip.start_ms)
            span_text = scene.source[element.span[0]:element.span[0] + length] or " "
            sx = text_x + char_w * column
            sy = text_y + line_index * line_h
            scaled_font = _font(max(10, round(font_size * scale)))
            scaled_w = scaled_font.getlength(span_text)
            shadow_offset = round(3 + 3 * progress)
            box = [sx - 4, sy - 4, sx + scaled_w + 4, sy + round(line_h * scale) + 2]
            draw.rectangle([c + shadow_offset for c in box],
                           fill=(0, 0, 0, round(140 * progress)))
            draw.rectangle(box, fill=EMPHASIS_BOX + (255,), outline=PANEL_EDGE + (255,))
            draw.text((sx, sy), span_text, font=scaled_font, fill=(255, 255, 255, 255))

        elif kind == "annotation":
            element = emphasis_by_id.get(ident)
            if element is None:
                continue
            alpha = _clip_opacity(clip, t_ms)
            line_index, _, _ = _span_lines(scene.source, element.span)
            y = text_y + line_index * line_h
            bullet_lines = _wrap(element.annotation, max(8, int(note_w // char_w) - 2))
            fill = ANNOTATION_COLOR + (round(255 * alpha),)
            draw.text((note_x, y), "•", font=font, fill=fill)
            for i, bullet_line in enumerate(bullet_lines):
                draw.text((note_x + char_w * 2, y + i * line_h), bullet_line, font=font, fill=fill)

        elif kind == "caption" and captions:
            segment = next((s for s in scene.segments if s.id == ident), None)
            if segment is None:
                continue
            alpha = _clip_opacity(clip, t_ms)
            band_h = height * 8 // 100
            band = Image.new("RGBA", (width, band_h), CAPTION_BAND + (round(170 * alpha),))
            content.alpha_composite(band, (0, height - band_h))
            caption_font = _font(max(10, font_size * 9 // 10))
            caption_text = segment.text
            max_chars = int((width - 2 * margin) // caption_font.getlength("M"))
            if len(caption_text) > max_chars > 3:
                caption_text = caption_text[:max_chars - 3] + "..."
            text_w = caption_font.getlength(caption_text)
            draw = ImageDraw.Draw(content)
            draw.text(((width - text_w) // 2, height - band_h + (band_h - font_size) // 2),
                      caption_text, font=caption_font, fill=(255, 255, 255, round(255 * alpha)))

    if scene.include_outputs and assets:
        cell_assets = assets.get(scene.cell_index, [])
        out_y = code_y + code_h * 70 // 100
        for asset in cell_assets[:1]:
            if asset.kind is OutputKind.IMAGE_PNG and isinstance(asset.payload, bytes):
                image = Image.open(io.BytesIO(asset.payload)).convert("RGBA")
                max_w = code_w - 2 * pad
                max_h = code_y + code_h - out_y - pad
                if max_w > 0 and max_h > 0:
                    ratio = min(max_w / image.width, max_h / image.height, 1.0)
                    size = (max(1, int(image.width * ratio)), max(1, int(image.height * ratio)))
                    content.alpha_composite(image.resize(size, Image.NEAREST), (text_x, out_y))
            else:
                payload = asset.payload if isinstance(asset.payload, str) else ""
                for i, out_line in enumerate(payload.splitlines()[:6]):
                    draw.text((text_x, out_y + i * line_h), out_line[:int(code_w // char_w)],
                              font=font, fill=(160, 220, 160, 255))

    # scene-level enter/exit: fade applies as a global blend, the
    # move-to-next enter slides the content layer in from the right
    alpha = 1.0
    offset_x = 0
    elapsed = t_ms - scene_entry.start_ms
    if backdrop.enter.kind == "fade_in" and elapsed < backdrop.enter.duration_ms:
        alpha = anim_progress(backdrop.enter, elapsed)
    elif backdrop.enter.kind == "move_to_next" and elapsed < backdrop.enter.duration_ms:
        offset_x = round((1.0 - anim_progress(backdrop.enter, elapsed)) * width)
    into_exit = t_ms - (scene_entry.end_ms - backdrop.exit.duration_ms)
    if backdrop.exit.kind == "fade_out" and into_exit > 0:
        alpha = min(alpha, 1.0 - anim_progress(backdrop.exit, into_exit))

    composed = background.copy()
    composed.alpha_composite(content, (offset_x, 0))
    if alpha < 1.0:
        composed = Image.blend(background, composed, alpha)
    return composed.convert("RGB")


def assemble_audio(timeline: Timeline, clips: Mapping[str, AudioClip]) -> bytes:
    """Each clip placed at its segment's timeline start over silence."""
    total_samples = round(timeline.total_ms * SAMPLES_PER_MS)
    track = bytearray(total_samples * SAMPLE_WIDTH)
    for scene in timeline.scenes:
        for segment_id, start_ms, _duration in scene.segment_windows:
            clip = clips.get(segment_id)
            if clip is None:
                continue
            offset = round(start_ms * SAMPLES_PER_MS) * SAMPLE_WIDTH
            end = min(offset + len(clip.samples), len(track))
            if offset < end:
                track[offset:end] = clip.samples[:end - offset]
    return bytes(track)


def write_wav(path: str | Path, samples: bytes) -> None:
    with wave.open(str(path), "wb") as writer:
        writer.setnchannels(1)
        writer.setsampwidth(SAMPLE_WIDTH)
        writer.setframerate(SAMPLE_RATE)
        writer.writeframes(samples)


def _frame_times(timeline: Timeline) -> list[int]:
    return [i * 1000 // timeline.fps for i in range(frame_count(timeline.total_ms, timeline.fps))]


def render_video(timeline: Timeline, clips: Mapping[str, AudioClip],
                 out_path: str | Path | None = None,
                 frames_dir: str | Path | None = None,
                 assets: Mapping[int, list[OutputAsset]] | None = None,
                 encoder: str | None = None) -> RenderArtifact:
    """Render the full timeline.

    With frames_dir set, writes frame_%06d.png + audio.wav + manifest.json
    and no encoder is needed. Otherwise pipes raw RGB24 frames into the
    encoder command (default ffmpeg) and muxes the audio track into out_path.
    """
    total_frames = frame_count(timeline.total_ms, timeline.fps)
    audio_track = assemble_audio(timeline, clips)

    if frames_dir is not None:
        frames_path = Path(frames_dir)
        frames_path.mkdir(parents=True, exist_ok=True)
        for i, t_ms in enumerate(_frame_times(timeline)):
            frame = render_frame(timeline, t_ms, assets=assets)
            frame.save(frames_path / f"frame_{i:06d}.png", format="PNG")
        audio_path = frames_path / "audio.wav"
        write_wav(audio_path, audio_track)
        manifest_path = frames_path / "manifest.json"
        manifest_path.write_text(json.dumps(timeline_manifest(timeline), indent=2, sort_keys=True),
                                 encoding="utf-8")
        return RenderArtifact(
            frame_count=total_frames,
            duration_ms=timeline.total_ms,
            frames_dir=str(frames_path),
            audio_path=str(audio_path),
            manifest_path=str(manifest_path),
        )

    if out_path is None:
        raise ValueError("need out_path for encoder mode or frames_dir for image-sequence mode")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    audio_path = out_path.with_suffix(".wav")
    write_wav(audio_path, audio_track)
    width, height = timeline.resolution
    command = [
        encoder or "ffmpeg", "-y",
        "-f", "rawvideo", "-pix_fmt", "rgb24",
        "-s", f"{width}x{height}", "-r", str(timeline.fps),
        "-i", "pipe:0",
        "-i", str(audio_path),
        "-c:v", "libx264", "-pix_fmt", "yuv420p",
        "-c:a", "aac",
        str(out_path),
    ]
    try:
        process = subprocess.Popen(command, stdin=subprocess.PIPE,
                                   stdout=subprocess.DEVNULL, stderr=subprocess.PIPE)
    except OSError as exc:
        raise EncoderSpawnFailure(f"cannot spawn encoder {command[0]!r}: {exc}") from exc
    try:
        assert process.stdin is not None
        for t_ms in _frame_times(timeline):
            frame = render_frame(timeline, t_ms, assets=assets)
            process.stdin.write(frame.tobytes())
        process.stdin.close()
    except BrokenPipeError:
        pass
    stderr = process.stderr.read() if process.stderr else b""
    returncode = process.wait()
    if returncode != 0:
        raise EncoderNonZeroExit(
            f"encoder exited with {returncode}: {stderr[-500:].decode('utf-8', 'replace')}")
    return RenderArtifact(
        frame_count=total_frames,
        duration_ms=timeline.total_ms,
        audio_path=str(audio_path),
        mp4_path=str(out_path),
    )


def preview_scene(script: DesignScript, scene_id: str, clips: Mapping[str, AudioClip],
                  out_path: str | Path | None = None,
                  frames_dir: str | Path | None = None,
                  assets: Mapping[int, list[OutputAsset]] | None = None,
                  encoder: str | None = None) -> RenderArtifact:
    """Render a timeline containing only the named scene."""
    matches = [scene for scene in script.scenes if scene.id == scene_id]
    if not matches:
        raise UnknownScene(f"no scene {scene_id!r}")
    from dataclasses import replace as _replace
    sliced = _replace(script, scenes=(matches[0],))
    timeline = compile_timeline(sliced, {
        segment.id: clips[segment.id].duration_ms
        for segment in matches[0].segments if segment.id in clips
    })
    return render_video(timeline, clips, out_path=out_path, frames_dir=frames_dir,
                        assets=assets, encoder=encoder)


def encoder_available(encoder: str | None = None) -> bool:
    return shutil.which(encoder or "ffmpeg") is not None
