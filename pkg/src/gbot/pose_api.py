"""HTTP pose publishing: single writer, many polling readers.

The tracker thread calls ``publish`` with each TrackReport; handlers serve
the most recent snapshot. Snapshots are serialized to bytes inside
``publish`` and swapped in with a single attribute assignment, so readers
can never observe a torn snapshot and the writer never blocks on readers.
"""

from __future__ import annotations

import json
import threading
import time
from collections import deque
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .geom import pose_to_tq
from .tracker import TrackReport

EVENTS_TAIL_LENGTH = 16


class PoseServer:
    """Publishes PoseSnapshot JSON at GET /poses and state at GET /state."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self._sequence = 0
        self._poses_payload: bytes | None = None
        self._state_payload: bytes | None = None
        self._events = deque(maxlen=EVENTS_TAIL_LENGTH)
        server = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, *args):  # keep handlers silent
                pass

            def _serve(self, payload: bytes | None, head: bool = False):
                if payload is None:
                    body = b'{"error": "no snapshot published yet"}'
                    self.send_response(503)
                else:
                    body = payload
                    self.send_response(200)
                self.send_header("Content-Type", "application/json; charset=utf-8")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                if not head:
                    self.wfile.write(body)

            def do_GET(self):
                if self.path == "/poses":
                    self._serve(server._poses_payload)
                elif self.path == "/state":
                    self._serve(server._state_payload)
                else:
                    body = b'{"error": "not found"}'
                    self.send_response(404)
                    self.send_header("Content-Type", "application/json; charset=utf-8")
                    self.send_header("Content-Length", str(len(body)))
                    self.end_headers()
                    self.wfile.write(body)

            def do_HEAD(self):
                if self.path == "/poses":
                    self._serve(server._poses_payload, head=True)
                elif self.path == "/state":
                    self._serve(server._state_payload, head=True)
                else:
                    self.send_response(404)
                    self.send_header("Content-Length", "0")
                    self.end_headers()

        self._httpd = ThreadingHTTPServer((host, port), Handler)
        self._httpd.daemon_threads = True
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    @property
    def address(self) -> tuple[str, int]:
        return self._httpd.server_address[:2]

    def start(self):
        self._thread.start()

    def stop(self):
        self._httpd.shutdown()
        self._httpd.server_close()

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.stop()

    def publish(self, report: TrackReport, roster=None):
        """Atomically replace the current snapshot with this report's poses.

        ``roster`` optionally lists all object ids; roster objects without a
        tracked pose appear with tracked=false and an identity pose.
        """
        self._sequence += 1
        ids = list(roster) if roster is not None else list(report.poses)
        poses = []
        for oid in ids:
            pose = report.poses.get(oid)
            if pose is None:
                poses.append(
                    {"object_id": oid, "t": [0.0, 0.0, 0.0], "q": [1.0, 0.0, 0.0, 0.0], "tracked": False}
                )
            else:
                t, q = pose_to_tq(pose)
                poses.append({"object_id": oid, "t": t, "q": q, "tracked": True})
        snapshot = {
            "sequence_number": self._sequence,
            "timestamp_ms": int(time.time() * 1000),
            "state_index": report.state_index,
            "poses": poses,
        }
        for ev in report.events:
            self._events.append(
                {
                    "frame": report.frame_index,
                    "kind": ev.kind,
                    "object_id": ev.object_id,
                }
            )
        state = {
            "state_index": report.state_index,
            "events_tail": list(self._events),
        }
        # Build both payloads fully, then swap: single reference assignments
        # are atomic, so concurrent readers see either the old or the new
        # snapshot, never a mix.
        poses_payload = json.dumps(snapshot).encode("utf-8")
        state_payload = json.dumps(state).encode("utf-8")
        self._poses_payload = poses_payload
        self._state_payload = state_payload
