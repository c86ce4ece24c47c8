"""Streaming HTTP service over the inpainting engine.

One request, one generation session.  ``POST /v1/inpaint`` answers with a
server-sent event stream: a ``note`` event per generated note the moment its
tokens complete, then one terminal ``done`` event carrying the full output
performance and timing metadata.  The service keeps no per-request state
beyond the loaded checkpoint; concurrent sessions above the limit are
rejected with 429.
"""

from __future__ import annotations

import json
import secrets
import threading
from typing import Literal

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, Field

from .inference import (
    InpaintEngine,
    InpaintRequest,
    InpaintRequestError,
    build_constraints,
)
from .midi import NoteEvent, Performance

TIME_PRECISION = 3  # seconds serialized at 1 ms resolution


class ApiNote(BaseModel):
    pitch: int = Field(ge=21, le=108)
    velocity: int = Field(ge=0, le=127)
    onset_s: float = Field(ge=0)
    duration_s: float = Field(gt=0)


class ApiSelection(BaseModel):
    start_s: float = Field(ge=0)
    end_s: float


class ApiInpaintRequest(BaseModel):
    notes: list[ApiNote] = []
    selection: ApiSelection | None = None
    mode: Literal["contiguous", "unconditional", "velocify", "pitchify",
                  "variation"] = "contiguous"
    density: float | None = Field(default=None, ge=0)
    note_count: int | None = Field(default=None, ge=0)
    top_p: float = Field(default=0.95, gt=0, le=1)
    seed: int | None = None
    fit: Literal["rescale", "truncate", "free"] = "rescale"
    velocity_only: bool = False


def note_payload(n: NoteEvent) -> dict:
    return {"pitch": n.pitch, "velocity": n.velocity,
            "onset_s": round(n.onset_s, TIME_PRECISION),
            "duration_s": round(n.duration_s, TIME_PRECISION)}


def _sse(event: str, data: dict) -> str:
    return f"event: {event}\ndata: {json.dumps(data)}\n\n"


def to_engine_request(api: ApiInpaintRequest) -> InpaintRequest:
    notes = [NoteEvent(n.pitch, n.velocity, n.onset_s, n.duration_s)
             for n in api.notes]
    region = None
    if api.selection is not None:
        region = (api.selection.start_s, api.selection.end_s)
    seed = api.seed if api.seed is not None else secrets.randbits(32)
    return InpaintRequest(
        context=Performance.from_notes(notes), mode=api.mode, region=region,
        note_count=api.note_count, density=api.density, top_p=api.top_p,
        seed=seed, fit=api.fit, velocity_only=api.velocity_only)


def create_app(engine: InpaintEngine | None, *, checkpoint_sha256: str | None = None,
               max_sessions: int = 4, cors_origins: tuple[str, ...] = ("*",)) -> FastAPI:
    app = FastAPI(title="pianofill", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=list(cors_origins), allow_methods=["*"],
        allow_headers=["*"])
    sessions = threading.Semaphore(max_sessions)

    @app.exception_handler(RequestValidationError)
    async def validation_to_400(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.get("/v1/health")
    def health():
        if engine is None:
            return JSONResponse(status_code=503, content={"status": "no model loaded"})
        cfg = engine.config
        return {
            "status": "ok",
            "model": "pianofill",
            "checkpoint_sha256": checkpoint_sha256,
            "config": {
                "model_dim": cfg.model_dim,
                "n_heads": cfg.n_heads,
                "encoder_layers": cfg.encoder_layers,
                "decoder_layers": cfg.decoder_layers,
                "top_p_default": cfg.top_p_default,
            },
        }

    @app.post("/v1/inpaint")
    def inpaint(api_request: ApiInpaintRequest):
        if engine is None:
            return JSONResponse(status_code=503, content={"detail": "no model loaded"})
        try:
            request = to_engine_request(api_request)
            build_constraints(request)  # surface plan errors as 400, pre-stream
        except InpaintRequestError as e:
            return JSONResponse(status_code=400, content={"detail": str(e)})
        if not sessions.acquire(blocking=False):
            return JSONResponse(status_code=429,
                                content={"detail": "too many concurrent sessions"})

        def stream():
            try:
                for kind, payload in engine.iter_stream(request):
                    if kind == "note":
                        yield _sse("note", note_payload(payload))
                    else:
                        timing = payload.timing
                        yield _sse("done", {
                            "notes": [note_payload(n)
                                      for n in payload.performance.notes],
                            "generated": [note_payload(n)
                                          for n in payload.generated_notes],
                            "seed": request.seed,
                            "timing": {
                                "time_to_first_note_s": timing["first_note_s"],
                                "phase1_s": timing["phase1_s"],
                                "sampling_s": timing["sampling_s"],
                                "total_s": timing["total_s"],
                                "steps": timing["steps"],
                            },
                        })
            except InpaintRequestError as e:
                yield _sse("error", {"detail": str(e)})
            except Exception as e:  # diagnostics for generation aborts
                yield _sse("error", {"detail": f"generation aborted: {e!r}"})
            finally:
                sessions.release()

        return StreamingResponse(stream(), media_type="text/event-stream",
                                 headers={"Cache-Control": "no-cache",
                                          "X-Accel-Buffering": "no"})

    return app
