"""A local chat-completions endpoint for offline tests and demos.

Start it with ``python -m exactlen.stub_server --port 8765`` or from code via
:func:`serve`. In ``comply`` mode it reads the target length out of the
prompt and answers with a well-formed countdown (or plain text for baseline
prompts). ``echo`` mode returns the last user message unchanged.
"""

from __future__ import annotations

import argparse
import json
import random
import re
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

__all__ = ["StubState", "StubServer", "serve", "main"]

_WORDS = ("river", "stone", "light", "quiet", "morning", "garden", "window", "paper", "music", "travel")
_HANZI = "天地人日月山水风云花草树木春夏秋冬"

_COUNTDOWN = re.compile(r"from (\d+) down to 1|从 (\d+) 递减到 1")
_EXACT = re.compile(r"exactly (\d+) (?:words?|characters?)|恰好 (\d+) 个字")


@dataclass
class StubState:
    mode: str = "comply"
    delay_s: float = 0.0
    # Status codes returned, in order, before normal replies resume.
    failures: list[int] = field(default_factory=list)
    requests: list[dict] = field(default_factory=list)
    in_flight: int = 0
    peak_in_flight: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


def _reply_text(state: StubState, body: dict, index: int) -> str:
    messages = body.get("messages") or []
    prompt = next((m.get("content", "") for m in reversed(messages) if m.get("role") == "user"), "")
    if state.mode == "echo":
        return prompt
    zh = "个字" in prompt or "递减" in prompt
    rng = random.Random(index)
    pool = _HANZI if zh else _WORDS
    m = _COUNTDOWN.search(prompt)
    if m:
        n = int(m.group(1) or m.group(2))
        return "".join(f"<{n - i}>{rng.choice(pool)}" for i in range(n)) + "<0>"
    m = _EXACT.search(prompt)
    if m:
        n = int(m.group(1) or m.group(2))
        return ("" if zh else " ").join(rng.choice(pool) for _ in range(n))
    return "ok"


def _handler(state: StubState):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def _send(self, status: int, payload: dict, headers: dict | None = None):
            data = json.dumps(payload, ensure_ascii=False).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            for k, v in (headers or {}).items():
                self.send_header(k, v)
            self.end_headers()
            self.wfile.write(data)

        def do_POST(self):
            length = int(self.headers.get("Content-Length") or 0)
            try:
                body = json.loads(self.rfile.read(length) or b"{}")
            except ValueError:
                self._send(400, {"error": {"message": "invalid JSON"}})
                return
            with state.lock:
                index = len(state.requests)
                state.requests.append({"body": body, "auth": self.headers.get("Authorization")})
                failure = state.failures.pop(0) if state.failures else None
                state.in_flight += 1
                state.peak_in_flight = max(state.peak_in_flight, state.in_flight)
            try:
                if state.delay_s:
                    time.sleep(state.delay_s)
                if failure is not None:
                    self._send(failure, {"error": {"message": f"scripted {failure}"}},
                               {"Retry-After": "0"} if failure == 429 else None)
                    return
                text = _reply_text(state, body, index)
                self._send(200, {
                    "id": f"stub-{index}",
                    "object": "chat.completion",
                    "model": body.get("model", "stub"),
                    "choices": [{"index": 0, "message": {"role": "assistant", "content": text},
                                 "finish_reason": "stop"}],
                    "usage": {"prompt_tokens": 0, "completion_tokens": len(text.split())},
                })
            finally:
                with state.lock:
                    state.in_flight -= 1

    return Handler


class StubServer:
    """Context manager running the stub on a background thread."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0, **state_kwargs):
        self.state = StubState(**state_kwargs)
        self._server = ThreadingHTTPServer((host, port), _handler(self.state))
        self._server.daemon_threads = True
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/v1/chat/completions"

    def start(self) -> "StubServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self) -> "StubServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def serve(host: str = "127.0.0.1", port: int = 0, **state_kwargs) -> StubServer:
    return StubServer(host, port, **state_kwargs).start()


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="exactlen-stub", description=__doc__.splitlines()[0])
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=8765)
    ap.add_argument("--mode", choices=("comply", "echo"), default="comply")
    args = ap.parse_args(argv)
    server = StubServer(args.host, args.port, mode=args.mode)
    print(server.url, flush=True)
    try:
        server._server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
