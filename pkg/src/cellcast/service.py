"""HTTP facade for the authoring UI: per-document sessions with optimistic
concurrency, background render jobs (one FIFO worker per session), and
file-backed persistence of notebooks, design scripts and artifacts.
"""

from __future__ import annotations

import io
import json
import os
import queue
import threading
import uuid
import zipfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from fastapi import FastAPI, Request, Response
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles

from . import dataflow, narration, render, script as script_mod, tts
from .errors import (
    CellcastError,
    UnknownCell,
    UnknownId,
    UnknownNode,
    UnknownScene,
    VersionConflict,
)
from .llm import LlmBridge, bridge_from_env
from .notebook import Notebook, extract_output_assets, parse_notebook
from .script import DesignScript, Scene, deserialize, script_from_flow, serialize
from .timeline import compile_timeline

NOT_FOUND_ERRORS = (UnknownId, UnknownNode, UnknownScene, UnknownCell)


@dataclass
class ServiceConfig:
    data_dir: Path
    stub_llm: bool = False
    stub_tts: bool = False
    fixtures_dir: str | None = None
    encoder: str | None = None
    ui_dir: Path | None = None

    @classmethod
    def from_env(cls) -> "ServiceConfig":
        ui_dir = os.environ.get("CELLCAST_UI_DIR")
        return cls(
            data_dir=Path(os.environ.get("CELLCAST_DATA_DIR", "./cellcast-data")),
            stub_llm=os.environ.get("CELLCAST_STUB_LLM") == "1",
            stub_tts=os.environ.get("CELLCAST_STUB_TTS") == "1",
            fixtures_dir=os.environ.get("CELLCAST_LLM_FIXTURES"),
            encoder=os.environ.get("CELLCAST_ENCODER"),
            ui_dir=Path(ui_dir) if ui_dir else None,
        )


@dataclass
class RenderJob:
    id: str
    session_id: str
    scope: str  # "full" or a scene id
    state: str = "queued"  # queued -> running -> done | failed
    error: str | None = None
    artifact: render.RenderArtifact | None = None


@dataclass
class Session:
    id: str
    notebook: Notebook
    flow: dataflow.LogicFlow
    script: DesignScript
    version: int = 1
    lock: threading.Lock = field(default_factory=threading.Lock)
    shelved: dict[int, Scene] = field(default_factory=dict)  # scenes of hidden nodes


class Engine:
    """Owns sessions, jobs and the per-session render workers."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.sessions: dict[str, Session] = {}
        self.jobs: dict[str, RenderJob] = {}
        self._queues: dict[str, queue.Queue] = {}
        self._registry_lock = threading.Lock()
        config.data_dir.mkdir(parents=True, exist_ok=True)

    # --- bridges -----------------------------------------------------------

    def bridge(self) -> LlmBridge:
        return bridge_from_env(stub=self.config.stub_llm, fixtures_dir=self.config.fixtures_dir)

    def voice(self) -> tts.VoiceSpec:
        return tts.voice_from_env(stub=self.config.stub_tts)

    # --- persistence -------------------------------------------------------

    def session_dir(self, session_id: str) -> Path:
        return self.config.data_dir / "sessions" / session_id

    def _persist(self, session: Session) -> None:
        directory = self.session_dir(session.id)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "script.nps.json").write_bytes(serialize(session.script))
        (directory / "flow.json").write_text(
            json.dumps(dataflow.flow_to_json(session.flow), indent=2), encoding="utf-8")
        (directory / "meta.json").write_text(
            json.dumps({"version": session.version}), encoding="utf-8")

    # --- session lifecycle -------------------------------------------------

    def create_session(self, data: bytes, name: str = "notebook.ipynb") -> Session:
        notebook = parse_notebook(data, source_path=name)
        flow = dataflow.build_logic_flow(notebook)
        try:
            entries = self.bridge().generate_logic_descriptions(notebook)
            flow = dataflow.apply_flow_descriptions(flow, entries)
        except CellcastError:
            pass  # deterministic flow stands on its own
        session = Session(
            id=uuid.uuid4().hex[:12],
            notebook=notebook,
            flow=flow,
            script=script_from_flow(notebook, flow),
        )
        with self._registry_lock:
            self.sessions[session.id] = session
        directory = self.session_dir(session.id)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / name).write_bytes(data)
        self._persist(session)
        return session

    def session(self, session_id: str) -> Session:
        found = self.sessions.get(session_id)
        if found is None:
            raise UnknownId(f"no session {session_id!r}")
        return found

    def mutate(self, session_id: str, expected_version: int, fn) -> Session:
        """Run fn(session) under the session lock iff the version matches.

        The check and the mutation are atomic; stale writers get a 409
        without touching state.
        """
        session = self.session(session_id)
        with session.lock:
            if expected_version != session.version:
                raise VersionConflict(
                    f"version {expected_version} is stale, current is {session.version}")
            fn(session)
            session.version += 1
            self._persist(session)
        return session

    # --- script helpers ----------------------------------------------------

    def sync_scenes(self, session: Session) -> None:
        """Recreate the scene list to mirror visible flow order, shelving
        scenes of hidden cells so their authoring state survives a re-show."""
        existing = {scene.cell_index: scene for scene in session.script.scenes}
        existing.update(session.shelved)
        scenes = []
        visible = {node.id for node in session.flow.visible_nodes()}
        for node in session.flow.visible_nodes():
            if node.id in existing:
                scenes.append(existing[node.id])
            else:
                cell = session.notebook.cells[node.id]
                scenes.append(Scene(id=f"s{node.id}", cell_index=node.id, source=cell.source,
                                    include_outputs=bool(cell.outputs)))
        session.shelved = {idx: scene for idx, scene in existing.items() if idx not in visible}
        session.script = replace(session.script, scenes=tuple(scenes))

    def find_scene_of_segment(self, session: Session, segment_id: str) -> Scene:
        for scene in session.script.scenes:
            if any(segment.id == segment_id for segment in scene.segments):
                return scene
        raise UnknownId(f"no segment {segment_id!r}")

    def find_scene_of_emphasis(self, session: Session, emphasis_id: str) -> Scene:
        for scene in session.script.scenes:
            if any(element.id == emphasis_id for element in scene.emphases):
                return scene
        raise UnknownId(f"no emphasis {emphasis_id!r}")

    # --- render jobs -------------------------------------------------------

    def submit_job(self, session_id: str, scope: str) -> RenderJob:
        self.session(session_id)  # 404 on unknown
        job = RenderJob(id=uuid.uuid4().hex[:12], session_id=session_id, scope=scope)
        with self._registry_lock:
            self.jobs[job.id] = job
            if session_id not in self._queues:
                self._queues[session_id] = queue.Queue()
                worker = threading.Thread(target=self._worker, args=(session_id,), daemon=True)
                worker.start()
        self._queues[session_id].put(job)
        return job

    def _worker(self, session_id: str) -> None:
        jobs = self._queues[session_id]
        while True:
            job = jobs.get()
            try:
                self.run_job(job)
            finally:
                jobs.task_done()

    def run_job(self, job: RenderJob) -> RenderJob:
        job.state = "running"
        try:
            session = self.session(job.session_id)
            with session.lock:
                snapshot = session.script  # immutable value, safe outside the lock
                notebook = session.notebook
            if job.scope != "full":
                snapshot = replace(snapshot, scenes=(snapshot.scene(job.scope),))
            engine = tts.TtsEngine(cache_dir=self.session_dir(job.session_id) / "tts_cache")
            voice = self.voice()
            clips = {}
            for scene in snapshot.scenes:
                for segment in scene.segments:
                    try:
                        clips[segment.id] = engine.synthesize(segment, voice)
                    except CellcastError as exc:
                        raise CellcastError(f"segment {segment.id}: {exc}") from exc
            timeline = compile_timeline(snapshot, {cid: clip.duration_ms for cid, clip in clips.items()})
            assets = {
                cell.index: extract_output_assets(cell)
                for cell in notebook.cells
                if cell.index in {scene.cell_index for scene in snapshot.scenes} and cell.outputs
            }
            job_dir = self.session_dir(job.session_id) / "jobs" / job.id
            if render.encoder_available(self.config.encoder):
                artifact = render.render_video(timeline, clips, out_path=job_dir / "video.mp4",
                                               assets=assets, encoder=self.config.encoder)
            else:
                artifact = render.render_video(timeline, clips, frames_dir=job_dir / "frames",
                                               assets=assets)
            job.artifact = artifact
            job.state = "done"
        except Exception as exc:  # job failures must never crash the service
            job.error = str(exc)
            job.state = "failed"
        return job

    def job(self, job_id: str) -> RenderJob:
        found = self.jobs.get(job_id)
        if found is None:
            raise UnknownId(f"no job {job_id!r}")
        return found


def _job_payload(job: RenderJob) -> dict:
    payload: dict[str, Any] = {"id": job.id, "session": job.session_id,
                               "scope": job.scope, "state": job.state}
    if job.error:
        payload["error"] = job.error
    if job.artifact:
        payload["artifact"] = {
            "frame_count": job.artifact.frame_count,
            "duration_ms": job.artifact.duration_ms,
            "mode": "mp4" if job.artifact.mp4_path else "frames",
        }
    return payload


def _session_payload(session: Session) -> dict:
    return {
        "id": session.id,
        "version": session.version,
        "flow": dataflow.flow_to_json(session.flow),
        "script": json.loads(serialize(session.script)),
    }


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig.from_env()
    engine = Engine(config)
    app = FastAPI(title="cellcast", version="0.1.0")
    app.state.engine = engine

    @app.exception_handler(CellcastError)
    async def _handle_engine_error(_request: Request, exc: CellcastError):
        if isinstance(exc, VersionConflict):
            status = 409
        elif isinstance(exc, NOT_FOUND_ERRORS):
            status = 404
        else:
            status = 422
        return JSONResponse(status_code=status,
                            content={"detail": str(exc), "error": type(exc).__name__})

    @app.exception_handler(ValueError)
    async def _handle_value_error(_request: Request, exc: ValueError):
        return JSONResponse(status_code=422,
                            content={"detail": str(exc), "error": "ValueError"})

    @app.post("/sessions")
    async def create_session(request: Request, name: str = "notebook.ipynb"):
        data = await request.body()
        session = engine.create_session(data, name=name)
        return _session_payload(session)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return _session_payload(engine.session(session_id))

    @app.get("/sessions/{session_id}/flow")
    def get_flow(session_id: str):
        return dataflow.flow_to_json(engine.session(session_id).flow)

    @app.patch("/flow/nodes/{node_id}")
    async def patch_flow_node(node_id: int, request: Request):
        body = await request.json()
        session_id, version = body["session"], int(body["version"])

        def apply(session: Session) -> None:
            if "description" in body:
                session.flow.node(node_id)  # 404 on unknown
                session.flow = dataflow.LogicFlow(
                    nodes=tuple(replace(n, description=str(body["description"]))
                                if n.id == node_id else n for n in session.flow.nodes),
                    edges=session.flow.edges,
                )
            if "hidden" in body:
                session.flow = dataflow.set_hidden(session.flow, node_id, bool(body["hidden"]))
            if "split_lines" in body:
                source = session.notebook.cells[session.flow.node(node_id).id].source
                session.flow = dataflow.split_node(session.flow, node_id,
                                                   [int(x) for x in body["split_lines"]], source)
            engine.sync_scenes(session)

        session = engine.mutate(session_id, version, apply)
        return _session_payload(session)

    @app.post("/scenes/{scene_id}/emphasis")
    async def post_emphasis(scene_id: str, request: Request):
        body = await request.json()
        session_id, version = body["session"], int(body["version"])
        created: list = []

        def apply(session: Session) -> None:
            scene = session.script.scene(scene_id)
            updated, element = script_mod.add_emphasis(
                scene, (int(body["span"][0]), int(body["span"][1])), str(body["annotation"]))
            session.script = session.script.replace_scene(updated)
            created.append(element)

        session = engine.mutate(session_id, version, apply)
        element = created[0]
        return {"version": session.version,
                "emphasis": {"id": element.id, "cell_index": element.cell_index,
                             "span": list(element.span), "annotation": element.annotation,
                             "scale_factor": element.scale_factor}}

    @app.delete("/emphasis/{emphasis_id}")
    def delete_emphasis(emphasis_id: str, session: str, version: int):
        def apply(state: Session) -> None:
            scene = engine.find_scene_of_emphasis(state, emphasis_id)
            state.script = state.script.replace_scene(
                script_mod.remove_emphasis(scene, emphasis_id))

        updated = engine.mutate(session, version, apply)
        return {"version": updated.version}

    @app.post("/sessions/{session_id}/narrate")
    async def narrate(session_id: str, request: Request):
        body = await request.json()
        version = int(body["version"])
        bridge = engine.bridge()

        def apply(session: Session) -> None:
            emphases = narration.scene_emphases(session.script)
            cell_indices = [scene.cell_index for scene in session.script.scenes]
            results = bridge.generate_narrations(session.notebook, emphases, cell_indices)
            session.script = narration.apply_narration(session.script, results)

        session = engine.mutate(session_id, version, apply)
        return _session_payload(session)

    @app.post("/segments/{segment_id}/question")
    async def question(segment_id: str, request: Request):
        body = await request.json()
        session_id, version = body["session"], int(body["version"])
        bridge = engine.bridge()

        def apply(session: Session) -> None:
            scene = engine.find_scene_of_segment(session, segment_id)
            session.script = narration.make_interactive(
                session.script, scene.id, segment_id, bridge.transform_to_question)

        session = engine.mutate(session_id, version, apply)
        return _session_payload(session)

    @app.post("/segments/{segment_id}/links")
    async def links(segment_id: str, request: Request):
        body = await request.json()
        session_id, version = body["session"], int(body["version"])

        def apply(session: Session) -> None:
            scene = engine.find_scene_of_segment(session, segment_id)
            session.script = session.script.replace_scene(
                script_mod.link_segment(scene, segment_id, [str(x) for x in body["emphasis_ids"]]))

        session = engine.mutate(session_id, version, apply)
        return _session_payload(session)

    @app.post("/render")
    async def submit_render(request: Request):
        body = await request.json()
        scope = body.get("scope", "full")
        job = engine.submit_job(body["session"], scope if isinstance(scope, str) else scope["scene"])
        return {"job": job.id, "state": job.state}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        return _job_payload(engine.job(job_id))

    @app.get("/artifacts/{job_id}/video")
    def get_artifact_video(job_id: str):
        job = engine.job(job_id)
        if job.state != "done" or job.artifact is None:
            raise UnknownId(f"job {job_id} has no finished artifact")
        if job.artifact.mp4_path:
            return FileResponse(job.artifact.mp4_path, media_type="video/mp4",
                                filename="cellcast.mp4")
        # encoder-free artifact: ship the frame sequence + audio as one file
        buffer = io.BytesIO()
        frames_dir = Path(job.artifact.frames_dir or "")
        with zipfile.ZipFile(buffer, "w", zipfile.ZIP_STORED) as bundle:
            for path in sorted(frames_dir.iterdir()):
                bundle.write(path, arcname=path.name)
        return Response(content=buffer.getvalue(), media_type="application/zip",
                        headers={"Content-Disposition": 'attachment; filename="cellcast-frames.zip"'})

    @app.get("/artifacts/{job_id}/manifest")
    def get_artifact_manifest(job_id: str):
        job = engine.job(job_id)
        if job.state != "done" or job.artifact is None or not job.artifact.manifest_path:
            raise UnknownId(f"job {job_id} has no manifest")
        return json.loads(Path(job.artifact.manifest_path).read_text(encoding="utf-8"))

    @app.get("/artifacts/{job_id}/files/{name}")
    def get_artifact_file(job_id: str, name: str):
        job = engine.job(job_id)
        if job.state != "done" or job.artifact is None or not job.artifact.frames_dir:
            raise UnknownId(f"job {job_id} has no frame files")
        path = (Path(job.artifact.frames_dir) / name).resolve()
        if path.parent != Path(job.artifact.frames_dir).resolve() or not path.exists():
            raise UnknownId(f"no artifact file {name!r}")
        media = "image/png" if name.endswith(".png") else (
            "audio/wav" if name.endswith(".wav") else "application/json")
        return FileResponse(str(path), media_type=media)

    @app.get("/sessions/{session_id}/script")
    def get_script(session_id: str):
        session = engine.session(session_id)
        return Response(content=serialize(session.script),
                        media_type="application/json",
                        headers={"X-Version": str(session.version)})

    @app.put("/sessions/{session_id}/script")
    async def put_script(session_id: str, version: int, request: Request):
        data = await request.body()
        incoming = deserialize(data)

        def apply(session: Session) -> None:
            visible = [f"s{node.id}" for node in session.flow.visible_nodes()]
            if [scene.id for scene in incoming.scenes] != visible:
                raise ValueError("script scenes must match visible flow order")
            session.script = incoming

        session = engine.mutate(session_id, version, apply)
        return {"version": session.version}

    if config.ui_dir and config.ui_dir.exists():
        app.mount("/", StaticFiles(directory=str(config.ui_dir), html=True), name="ui")

    return app
