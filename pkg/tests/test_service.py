from __future__ import annotations

import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from pianofill.inference import InpaintEngine, InpaintRequest
from pianofill.midi import NoteEvent, Performance
from pianofill.model.config import ModelConfig
from pianofill.model.network import init_params
from pianofill.service import create_app, note_payload


@pytest.fixture(scope="module")
def engine():
    cfg = ModelConfig.toy()
    return InpaintEngine(init_params(cfg, np.random.Generator(np.random.Philox(2))), cfg)


@pytest.fixture(scope="module")
def client(engine):
    return TestClient(create_app(engine, checkpoint_sha256="abc123"))


def clip_notes(n=12, gap=0.25):
    return [{"pitch": 60 + i % 8, "velocity": 70, "onset_s": round(i * gap, 3),
             "duration_s": 0.2} for i in range(n)]


def parse_sse(text: str):
    events = []
    for block in text.strip().split("\n\n"):
        lines = block.splitlines()
        event = next(l[7:] for l in lines if l.startswith("event: "))
        data = json.loads(next(l[6:] for l in lines if l.startswith("data: ")))
        events.append((event, data))
    return events


class TestHealth:
    def test_loaded(self, client):
        r = client.get("/v1/health")
        assert r.status_code == 200
        body = r.json()
        assert body["status"] == "ok"
        assert body["checkpoint_sha256"] == "abc123"
        assert body["config"]["model_dim"] == ModelConfig.toy().model_dim

    def test_unloaded_503(self):
        bare = TestClient(create_app(None))
        assert bare.get("/v1/health").status_code == 503
        r = bare.post("/v1/inpaint", json={"notes": []})
        assert r.status_code == 503


class TestInpaintStream:
    def test_zero_note_count_echoes_input(self, client):
        notes = clip_notes()
        r = client.post("/v1/inpaint", json={
            "notes": notes, "selection": {"start_s": 1.0, "end_s": 2.0},
            "note_count": 0, "seed": 1})
        assert r.status_code == 200
        events = parse_sse(r.text)
        kinds = [k for k, _ in events]
        assert kinds == ["done"]
        assert events[-1][1]["notes"] == notes

    def test_note_events_stream_then_done(self, client):
        r = client.post("/v1/inpaint", json={
            "notes": clip_notes(), "selection": {"start_s": 1.0, "end_s": 2.0},
            "note_count": 5, "seed": 7})
        events = parse_sse(r.text)
        notes = [d for k, d in events if k == "note"]
        assert len(notes) == 5
        assert events[-1][0] == "done"
        onsets = [n["onset_s"] for n in notes]
        assert onsets == sorted(onsets)
        for n in notes:
            assert 1.0 <= n["onset_s"], "generated notes start inside the selection"
        done = events[-1][1]
        assert done["timing"]["steps"] == 20
        assert done["timing"]["time_to_first_note_s"] > 0

    def test_streamed_notes_match_engine_batch(self, client, engine):
        # with fit=free the streamed payloads equal the batch engine output
        notes = clip_notes()
        body = {"notes": notes, "selection": {"start_s": 1.0, "end_s": 2.0},
                "note_count": 4, "seed": 99, "fit": "free"}
        events = parse_sse(client.post("/v1/inpaint", json=body).text)
        streamed = [d for k, d in events if k == "note"]
        done = events[-1][1]

        request = InpaintRequest(
            context=Performance.from_notes(
                NoteEvent(n["pitch"], n["velocity"], n["onset_s"], n["duration_s"])
                for n in notes),
            mode="contiguous", region=(1.0, 2.0), note_count=4, seed=99, fit="free")
        result = engine.inpaint(request)
        assert [note_payload(n) for n in result.streamed_notes] == streamed
        assert [note_payload(n) for n in result.performance.notes] == done["notes"]
        # streamed notes + preserved context reproduce the batch output
        kept = [note_payload(n) for n in result.performance.notes
                if not 1.0 <= n.onset_s < 2.0]
        merged = sorted(kept + streamed, key=lambda n: (n["onset_s"], n["pitch"]))
        assert merged == done["notes"]

    def test_same_seed_identical_streams(self, client):
        body = {"notes": clip_notes(), "selection": {"start_s": 0.5, "end_s": 1.5},
                "note_count": 3, "seed": 5}
        a = parse_sse(client.post("/v1/inpaint", json=body).text)
        b = parse_sse(client.post("/v1/inpaint", json=body).text)

        def strip_timing(events):
            return [(k, {x: v for x, v in d.items() if x != "timing"})
                    for k, d in events]

        assert strip_timing(a) == strip_timing(b)

    def test_validation_errors_are_400(self, client):
        r = client.post("/v1/inpaint", json={"notes": [{"pitch": 300}]})
        assert r.status_code == 400
        r = client.post("/v1/inpaint", json={
            "notes": clip_notes(), "selection": {"start_s": 5.0, "end_s": 2.0},
            "note_count": 3})
        assert r.status_code == 400
        r = client.post("/v1/inpaint", json={
            "notes": clip_notes(), "selection": {"start_s": 1.0, "end_s": 2.0}})
        assert r.status_code == 400  # neither note_count nor density

    def test_unconditional_without_notes(self, client):
        r = client.post("/v1/inpaint", json={
            "mode": "unconditional", "note_count": 4,
            "selection": {"start_s": 0.0, "end_s": 2.0}, "seed": 3})
        events = parse_sse(r.text)
        assert len([1 for k, _ in events if k == "note"]) == 4

    def test_session_limit_429(self, engine):
        app = create_app(engine, max_sessions=0)
        limited = TestClient(app)
        r = limited.post("/v1/inpaint", json={
            "notes": clip_notes(), "selection": {"start_s": 1.0, "end_s": 2.0},
            "note_count": 2})
        assert r.status_code == 429

    def test_sessions_released_after_stream(self, engine):
        app = create_app(engine, max_sessions=1)
        limited = TestClient(app)
        body = {"notes": clip_notes(), "selection": {"start_s": 1.0, "end_s": 2.0},
                "note_count": 2, "seed": 0}
        for _ in range(3):  # sequential requests reuse the single slot
            assert limited.post("/v1/inpaint", json=body).status_code == 200
