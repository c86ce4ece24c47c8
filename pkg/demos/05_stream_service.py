#!/usr/bin/env python3
"""Start the HTTP service in-process and consume a streamed inpaint request.

Notes arrive as server-sent events the moment their four tokens are sampled;
the terminal `done` event carries the complete clip plus timing, including
the time-to-first-note figure that makes the tool feel live.
"""

import json
import socket
import threading
import time

import httpx
import numpy as np
import uvicorn

from pianofill.inference import InpaintEngine
from pianofill.model.config import ModelConfig
from pianofill.model.network import init_params
from pianofill.service import create_app

cfg = ModelConfig.desk()
engine = InpaintEngine(init_params(cfg, np.random.Generator(np.random.Philox(1))), cfg)

sock = socket.socket()
sock.bind(("127.0.0.1", 0))
port = sock.getsockname()[1]
sock.close()
server = uvicorn.Server(uvicorn.Config(create_app(engine), host="127.0.0.1",
                                       port=port, log_level="error"))
threading.Thread(target=server.run, daemon=True).start()
while not server.started:
    time.sleep(0.02)
base = f"http://127.0.0.1:{port}"

print("health:", httpx.get(f"{base}/v1/health").json())

clip = [{"pitch": 48 + i % 24, "velocity": 70, "onset_s": i * 0.125,
         "duration_s": 0.1} for i in range(96)]
body = {"notes": clip, "selection": {"start_s": 4.0, "end_s": 6.0},
        "density": 5.0, "seed": 11}

print(f"\nPOST /v1/inpaint (region 4..6 s, density 5 notes/s):")
t0 = time.perf_counter()
with httpx.Client(timeout=30.0) as client:
    with client.stream("POST", f"{base}/v1/inpaint", json=body) as r:
        event = None
        for line in r.iter_lines():
            if line.startswith("event: "):
                event = line[7:]
            elif line.startswith("data: "):
                data = json.loads(line[6:])
                dt = time.perf_counter() - t0
                if event == "note":
                    print(f"  +{dt * 1e3:6.1f} ms  note pitch={data['pitch']:3d} "
                          f"vel={data['velocity']:3d} onset={data['onset_s']:.3f}s")
                elif event == "done":
                    timing = data["timing"]
                    print(f"  +{dt * 1e3:6.1f} ms  done: {len(data['notes'])} notes, "
                          f"time-to-first-note "
                          f"{timing['time_to_first_note_s'] * 1e3:.0f} ms")

server.should_exit = True
