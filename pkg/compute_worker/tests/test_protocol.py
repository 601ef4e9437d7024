"""End-to-end worker behavior over real pipes, as an orchestrator sees it."""

import json
import queue
import random
import subprocess
import sys
import threading
import time
from pathlib import Path

import pytest

SRC = Path(__file__).resolve().parent.parent / "src"

BOOT = (f"import sys; sys.path.insert(0, {str(SRC)!r}); "
        "from compute_worker.__main__ import main; sys.exit(main())")


class Worker:
    """Minimal orchestrator: spawn, handshake, one request per call."""

    def __init__(self, *extra_args: str) -> None:
        self.proc = subprocess.Popen(
            [sys.executable, "-c", BOOT, *extra_args],
            stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            stderr=subprocess.PIPE, text=True, bufsize=1)
        self._lines: queue.Queue = queue.Queue()
        threading.Thread(target=self._pump, daemon=True).start()

    def _pump(self) -> None:
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def read_json(self, timeout: float = 10.0) -> dict:
        line = self._lines.get(timeout=timeout)
        if line is None:
            raise AssertionError("worker closed its output stream")
        return json.loads(line)

    def send_raw(self, text: str) -> None:
        self.proc.stdin.write(text + "\n")
        self.proc.stdin.flush()

    def request(self, payload: dict, timeout: float = 10.0) -> dict:
        self.send_raw(json.dumps(payload))
        return self.read_json(timeout)

    def close(self) -> None:
        if self.proc.poll() is None:
            self.proc.stdin.close()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
        if self.proc.stderr is not None:
            self.proc.stderr.close()


@pytest.fixture
def worker():
    w = Worker()
    assert w.read_json() == {"protocol": "1"}
    yield w
    w.close()


def snippet(code: str, timeout: float = 30) -> dict:
    return {"kind": "snippet", "code": code, "timeout": timeout}


def atomic_call(name: str, args: dict, timeout: float = 30) -> dict:
    return {"kind": "atomic_call", "atomic_name": name, "args": args,
            "timeout": timeout}


class TestHandshake:
    def test_handshake_is_the_first_line(self):
        w = Worker()
        try:
            assert w.read_json() == {"protocol": "1"}
        finally:
            w.close()

    def test_clean_exit_on_stdin_eof(self, worker):
        worker.proc.stdin.close()
        assert worker.proc.wait(timeout=5) == 0


class TestSnippets:
    def test_one_plus_one(self, worker):
        response = worker.request(snippet("1+1"))
        assert response["status"] == "ok"
        assert response["result"] == 2

    def test_result_assignment(self, worker):
        response = worker.request(snippet("result = 1000*0.01*2"))
        assert response["status"] == "ok"
        assert response["result"] == 20.0

    def test_stdout_is_captured_and_returned(self, worker):
        response = worker.request(snippet("print('trace me')\n7"))
        assert response["result"] == 7
        assert response["stdout"] == "trace me\n"

    def test_stdout_cap_at_ten_thousand(self, worker):
        response = worker.request(snippet("print('x' * 20000)\n0"))
        assert len(response["stdout"]) == 10_000

    def test_file_open_is_denied(self, worker):
        response = worker.request(snippet("open('/etc/hostname')"))
        assert response["status"] == "error"
        assert "not available" in response["diagnostics"] \
            or "not allowed" in response["diagnostics"]

    def test_import_is_denied(self, worker):
        response = worker.request(snippet("import socket"))
        assert response["status"] == "error"

    def test_infinite_loop_answers_timeout_within_two_seconds(self, worker):
        start = time.monotonic()
        response = worker.request(snippet("while True: pass", timeout=1),
                                  timeout=10.0)
        elapsed = time.monotonic() - start
        assert response["status"] == "timeout"
        assert elapsed < 2.0

    def test_worker_survives_a_timeout(self, worker):
        worker.request(snippet("while True: pass", timeout=0.3))
        assert worker.request(snippet("2+2"))["result"] == 4


class TestAtomicCalls:
    def test_mass_flow_rate(self, worker):
        response = worker.request(atomic_call(
            "mass_flow_rate", {"density": 1000, "area": 0.01, "velocity": 2}))
        assert response["status"] == "ok"
        assert response["result"] == pytest.approx(20.0)

    def test_unknown_atomic_is_an_error_naming_it(self, worker):
        response = worker.request(atomic_call("warp_drive_output", {}))
        assert response["status"] == "error"
        assert "warp_drive_output" in response["diagnostics"]

    def test_missing_argument_is_a_validation_error(self, worker):
        response = worker.request(atomic_call(
            "mass_flow_rate", {"density": 1000, "velocity": 2}))
        assert response["status"] == "error"
        assert "area" in response["diagnostics"]

    def test_runtime_exception_reports_a_summary(self, worker):
        response = worker.request(atomic_call(
            "density", {"mass": 1.0, "volume": 0.0}))
        assert response["status"] == "error"
        assert "ZeroDivisionError" in response["diagnostics"]


class TestListAtomics:
    def test_seed_listing_contains_signatures(self, worker):
        response = worker.request({"kind": "list_atomics", "timeout": 5})
        assert response["status"] == "ok"
        by_name = {a["name"]: a["signature"] for a in response["result"]}
        assert "mass_flow_rate(density: real, area: real, velocity: real)" \
            " -> real" == by_name["mass_flow_rate"]

    def test_listing_twice_is_identical(self, worker):
        first = worker.request({"kind": "list_atomics", "timeout": 5})
        second = worker.request({"kind": "list_atomics", "timeout": 5})
        assert first == second

    def test_bundle_atomics_appear_in_the_listing(self, tmp_path):
        bundle = tmp_path / "bundle.json"
        bundle.write_text(json.dumps({"atomics": [{
            "name": "cube_volume",
            "params": [{"name": "edge", "type": "real"}],
            "returns": "real",
            "code": "def cube_volume(edge):\n    return edge ** 3\n",
        }]}), encoding="utf-8")
        w = Worker("--bundle", str(bundle))
        try:
            assert w.read_json() == {"protocol": "1"}
            listing = w.request({"kind": "list_atomics", "timeout": 5})
            names = [a["name"] for a in listing["result"]]
            assert "cube_volume" in names
            assert "mass_flow_rate" in names
            response = w.request(atomic_call("cube_volume", {"edge": 3}))
            assert response["result"] == 27.0
        finally:
            w.close()

    def test_bad_bundle_refuses_to_start(self, tmp_path):
        missing = tmp_path / "nowhere.json"
        proc = subprocess.run(
            [sys.executable, "-c", BOOT, "--bundle", str(missing)],
            capture_output=True, text=True, timeout=30)
        assert proc.returncode == 1
        assert "cannot read bundle" in proc.stderr
        assert proc.stdout == ""     # no handshake from a broken worker


class TestTotality:
    def test_malformed_line_yields_an_error_response(self, worker):
        worker.send_raw("this is not json")
        response = worker.read_json()
        assert response["status"] == "error"
        assert "malformed request" in response["diagnostics"]

    def test_loop_survives_malformed_input(self, worker):
        worker.send_raw("{broken")
        assert worker.read_json()["status"] == "error"
        assert worker.request(snippet("40+2"))["result"] == 42

    def test_non_object_request_is_an_error(self, worker):
        worker.send_raw("[1, 2, 3]")
        response = worker.read_json()
        assert response["status"] == "error"
        assert "JSON object" in response["diagnostics"]

    def test_unknown_kind_is_an_error(self, worker):
        response = worker.request({"kind": "teleport", "timeout": 5})
        assert response["status"] == "error"
        assert "teleport" in response["diagnostics"]

    def test_missing_code_field_is_an_error(self, worker):
        response = worker.request({"kind": "snippet", "timeout": 5})
        assert response["status"] == "error"
        assert "code" in response["diagnostics"]

    def test_bad_timeout_is_an_error(self, worker):
        response = worker.request(snippet("1+1", timeout=-3))
        assert response["status"] == "error"
        assert "timeout" in response["diagnostics"]

    def test_every_response_carries_the_full_shape(self, worker):
        for payload in (snippet("1+1"), {"kind": "nope"},
                        atomic_call("missing", {})):
            response = worker.request(payload)
            assert set(response) == {"status", "result", "stdout",
                                     "diagnostics"}

    def test_hundred_mixed_requests_in_sequence(self, worker):
        rng = random.Random(20240822)
        for i in range(100):
            roll = rng.randrange(3)
            if roll == 0:
                a, b = rng.randrange(1000), rng.randrange(1000)
                response = worker.request(snippet(f"{a} + {b}"))
                assert response["status"] == "ok"
                assert response["result"] == a + b
            elif roll == 1:
                d, v = rng.uniform(1, 2000), rng.uniform(0.1, 10)
                response = worker.request(atomic_call(
                    "mass_flow_rate",
                    {"density": d, "area": 0.01, "velocity": v}))
                assert response["status"] == "ok"
                assert response["result"] == pytest.approx(d * 0.01 * v)
            else:
                response = worker.request({"kind": "list_atomics",
                                           "timeout": 5})
                assert response["status"] == "ok"
                assert any(a["name"] == "mass_flow_rate"
                           for a in response["result"])
        assert worker.proc.poll() is None
