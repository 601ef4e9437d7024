"""Client for the external compute worker.

The worker is a separate process speaking line-delimited JSON over stdio: it
announces a protocol version on startup, then answers one request per line.
The client owns process lifecycle: handshake verification, one automatic
respawn after a crash, and a hard read deadline so a wedged worker cannot
hang the agent.
"""

from __future__ import annotations

import json
import logging
import queue
import subprocess
import threading
from dataclasses import dataclass

from .errors import ComputeError

log = logging.getLogger(__name__)

PROTOCOL_VERSION = "1"
DEFAULT_TIMEOUT = 30.0
READ_GRACE = 10.0


@dataclass(frozen=True)
class ComputeResponse:
    status: str               # ok | error | timeout
    result: object = None
    stdout: str = ""
    diagnostics: str = ""


class ComputeClient:
    def __init__(self, worker_cmd: list[str], spawn_timeout: float = 15.0):
        if not worker_cmd:
            raise ComputeError("compute worker command is empty")
        self.worker_cmd = list(worker_cmd)
        self.spawn_timeout = spawn_timeout
        self._proc: subprocess.Popen | None = None
        self._lock = threading.Lock()

    # -- lifecycle ----------------------------------------------------------

    def _spawn(self) -> None:
        try:
            self._proc = subprocess.Popen(
                self.worker_cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL, text=True, bufsize=1)
        except OSError as exc:
            self._proc = None
            raise ComputeError(
                f"cannot start compute worker {self.worker_cmd!r}: {exc}") from exc
        line = self._read_line(self.spawn_timeout)
        try:
            handshake = json.loads(line)
            version = handshake["protocol"]
        except (json.JSONDecodeError, TypeError, KeyError) as exc:
            self._kill()
            raise ComputeError(f"bad compute handshake {line!r}") from exc
        if version != PROTOCOL_VERSION:
            self._kill()
            raise ComputeError(
                f"compute worker speaks protocol {version!r}, "
                f"need {PROTOCOL_VERSION!r}")

    def _kill(self) -> None:
        if self._proc is not None:
            self._proc.kill()
            self._proc.wait()
            self._proc = None

    def close(self) -> None:
        with self._lock:
            if self._proc is not None and self._proc.poll() is None:
                try:
                    self._proc.stdin.close()
                    self._proc.wait(timeout=2.0)
                except (OSError, subprocess.TimeoutExpired):
                    pass
            self._kill()

    def __enter__(self) -> "ComputeClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- protocol -----------------------------------------------------------

    def _read_line(self, deadline: float) -> str:
        proc = self._proc
        if proc is None or proc.stdout is None:
            raise ComputeError("compute worker is not running")
        box: queue.Queue[str | None] = queue.Queue(maxsize=1)

        def pull():
            box.put(proc.stdout.readline())

        reader = threading.Thread(target=pull, daemon=True)
        reader.start()
        try:
            line = box.get(timeout=deadline)
        except queue.Empty:
            self._kill()
            raise ComputeError(
                f"compute worker gave no response within {deadline:g}s; killed")
        if not line:
            self._kill()
            raise ComputeError("compute worker closed its output stream")
        return line

    def _roundtrip(self, request: dict, deadline: float) -> ComputeResponse:
        with self._lock:
            if self._proc is None or self._proc.poll() is not None:
                self._kill()
                self._spawn()
            try:
                self._proc.stdin.write(json.dumps(request, sort_keys=True) + "\n")
                self._proc.stdin.flush()
            except (OSError, ValueError):
                # One respawn after a crashed worker, then the write must stick.
                self._kill()
                self._spawn()
                self._proc.stdin.write(json.dumps(request, sort_keys=True) + "\n")
                self._proc.stdin.flush()
            line = self._read_line(deadline)
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ComputeError(f"malformed compute response {line!r}") from exc
        status = doc.get("status")
        if status not in ("ok", "error", "timeout"):
            raise ComputeError(f"compute response has unknown status {status!r}")
        return ComputeResponse(status=status, result=doc.get("result"),
                               stdout=doc.get("stdout", ""),
                               diagnostics=doc.get("diagnostics", ""))

    # -- request kinds ------------------------------------------------------

    def eval_snippet(self, code: str,
                     timeout: float = DEFAULT_TIMEOUT) -> ComputeResponse:
        request = {"kind": "snippet", "code": code, "timeout": timeout}
        return self._roundtrip(request, timeout + READ_GRACE)

    def call_atomic(self, name: str, args: dict,
                    timeout: float = DEFAULT_TIMEOUT) -> ComputeResponse:
        request = {"kind": "atomic_call", "atomic_name": name, "args": args,
                   "timeout": timeout}
        return self._roundtrip(request, timeout + READ_GRACE)

    def list_atomics(self) -> list[dict]:
        response = self._roundtrip({"kind": "list_atomics"}, READ_GRACE)
        if response.status != "ok" or not isinstance(response.result, list):
            raise ComputeError(
                f"list_atomics failed: {response.diagnostics or response.status}")
        return response.result
