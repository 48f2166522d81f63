"""Headless command surface: inspect the logic flow, fill narration, and
build videos end to end without the web UI.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import dataflow, narration, render, tts
from .errors import CellcastError
from .llm import LlmBridge, bridge_from_env
from .notebook import extract_output_assets, parse_notebook
from .script import DesignScript, deserialize, script_from_flow, serialize
from .timeline import compile_timeline


def _load_notebook(path: str):
    data = Path(path).read_bytes()
    return parse_notebook(data, source_path=path)


def _bridge(args) -> LlmBridge:
    return bridge_from_env(stub=args.stub_llm, fixtures_dir=getattr(args, "fixtures", None))


def _fill_narration(notebook, script: DesignScript, bridge: LlmBridge) -> DesignScript:
    emphases = narration.scene_emphases(script)
    cell_indices = [scene.cell_index for scene in script.scenes]
    results = bridge.generate_narrations(notebook, emphases, cell_indices)
    return narration.apply_narration(script, results)


def cmd_flow(args) -> int:
    notebook = _load_notebook(args.notebook)
    flow = dataflow.build_logic_flow(notebook)
    if args.llm or args.stub_llm:
        entries = _bridge(args).generate_logic_descriptions(notebook)
        flow = dataflow.apply_flow_descriptions(flow, entries)
    print(json.dumps(dataflow.flow_to_json(flow), indent=2, ensure_ascii=False))
    return 0


def cmd_narrate(args) -> int:
    notebook = _load_notebook(args.notebook)
    script_path = Path(args.script)
    if script_path.exists():
        script = deserialize(script_path.read_bytes())
    else:
        script = script_from_flow(notebook, dataflow.build_logic_flow(notebook))
    script = _fill_narration(notebook, script, _bridge(args))
    script_path.write_bytes(serialize(script))
    print(f"wrote {script_path}")
    return 0


def cmd_build(args) -> int:
    notebook = _load_notebook(args.notebook)
    script_path = Path(args.script)
    if not script_path.exists():
        raise CellcastError(f"script not found: {script_path}")
    script = deserialize(script_path.read_bytes())

    if any(not scene.segments for scene in script.scenes):
        script = _fill_narration(notebook, script, _bridge(args))
        script_path.write_bytes(serialize(script))

    if args.fps:
        from dataclasses import replace
        script = replace(script, settings=replace(script.settings, fps=args.fps))

    voice = tts.VoiceSpec(provider="silence_fallback") if args.stub_tts else tts.voice_from_env()
    engine = tts.TtsEngine()
    clips = {
        segment.id: engine.synthesize(segment, voice)
        for scene in script.scenes for segment in scene.segments
    }
    timeline = compile_timeline(script, {cid: clip.duration_ms for cid, clip in clips.items()})
    assets = {
        cell.index: extract_output_assets(cell)
        for cell in notebook.cells
        if cell.index in {scene.cell_index for scene in script.scenes} and cell.outputs
    }
    artifact = render.render_video(
        timeline, clips,
        out_path=args.out if not args.frames_dir else None,
        frames_dir=args.frames_dir,
        assets=assets,
        encoder=args.encoder,
    )
    target = artifact.mp4_path or artifact.frames_dir
    print(f"rendered {artifact.frame_count} frames, {artifact.duration_ms} ms -> {target}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    config = ServiceConfig.from_env()
    if args.data_dir:
        config.data_dir = Path(args.data_dir)
    if args.stub_llm:
        config.stub_llm = True
    if args.stub_tts:
        config.stub_tts = True
    if args.ui_dir:
        config.ui_dir = Path(args.ui_dir)
    uvicorn.run(create_app(config), host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cellcast",
                                     description="Turn notebooks into narrated tutorial videos")
    sub = parser.add_subparsers(dest="command", required=True)

    p_flow = sub.add_parser("flow", help="print the logic-flow JSON for a notebook")
    p_flow.add_argument("notebook")
    p_flow.add_argument("--llm", action="store_true", help="generate descriptions via the configured LLM")
    p_flow.add_argument("--stub-llm", action="store_true", help="use the deterministic stub LLM")
    p_flow.add_argument("--fixtures", help="replay fixtures directory")
    p_flow.set_defaults(fn=cmd_flow)

    p_narrate = sub.add_parser("narrate", help="fill narration into a design script")
    p_narrate.add_argument("notebook")
    p_narrate.add_argument("--script", required=True, help="design script path (created if missing)")
    p_narrate.add_argument("--stub-llm", action="store_true")
    p_narrate.add_argument("--fixtures", help="replay fixtures directory")
    p_narrate.set_defaults(fn=cmd_narrate)

    p_build = sub.add_parser("build", help="render a notebook + design script to video")
    p_build.add_argument("notebook")
    p_build.add_argument("--script", required=True)
    p_build.add_argument("--out", default="out.mp4", help="output MP4 path (encoder mode)")
    p_build.add_argument("--frames-dir", help="write PNG frames + WAV instead of MP4")
    p_build.add_argument("--fps", type=int)
    p_build.add_argument("--stub-llm", action="store_true")
    p_build.add_argument("--stub-tts", action="store_true")
    p_build.add_argument("--fixtures", help="replay fixtures directory")
    p_build.add_argument("--encoder", help="encoder executable (default ffmpeg)")
    p_build.set_defaults(fn=cmd_build)

    p_serve = sub.add_parser("serve", help="run the authoring service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8765)
    p_serve.add_argument("--data-dir")
    p_serve.add_argument("--ui-dir")
    p_serve.add_argument("--stub-llm", action="store_true")
    p_serve.add_argument("--stub-tts", action="store_true")
    p_serve.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CellcastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
