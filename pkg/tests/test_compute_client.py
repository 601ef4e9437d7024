"""Compute client: handshake, round trips, crash recovery, deadlines.

Each test drives the client against a tiny inline worker started with
python3 -c, so no real worker package is needed here.
"""

from __future__ import annotations

import sys
import time

import pytest

from honeycomb.compute_client import ComputeClient, ComputeResponse
from honeycomb.errors import ComputeError

PY = sys.executable or "python3"


def worker_cmd(body: str) -> list[str]:
    """An inline stdio worker: prints a handshake, then runs body per line."""
    script = (
        "import json, sys\n"
        'print(json.dumps({"protocol": "1"}), flush=True)\n'
        "for line in sys.stdin:\n"
        "    request = json.loads(line)\n"
        + "".join("    " + stmt + "\n" for stmt in body.splitlines())
    )
    return [PY, "-u", "-c", script]


ECHO_OK = 'print(json.dumps({"status": "ok", "result": request["kind"]}), flush=True)'


class TestHandshake:
    def test_good_handshake_round_trip(self):
        with ComputeClient(worker_cmd(ECHO_OK)) as client:
            response = client.eval_snippet("result = 1", timeout=5)
        assert response == ComputeResponse(status="ok", result="snippet")

    def test_wrong_protocol_version_is_rejected(self):
        cmd = [PY, "-u", "-c",
               'import json; print(json.dumps({"protocol": "99"}), flush=True); '
               "import time; time.sleep(5)"]
        client = ComputeClient(cmd)
        with pytest.raises(ComputeError, match="protocol '99'"):
            client.eval_snippet("result = 1", timeout=5)
        assert client._proc is None  # worker was killed, not leaked

    def test_garbage_handshake_is_rejected(self):
        cmd = [PY, "-u", "-c", "print('hello'); import time; time.sleep(5)"]
        client = ComputeClient(cmd)
        with pytest.raises(ComputeError, match="bad compute handshake"):
            client.eval_snippet("result = 1", timeout=5)

    def test_missing_command_refused(self):
        with pytest.raises(ComputeError, match="empty"):
            ComputeClient([])

    def test_unstartable_command(self):
        client = ComputeClient(["/no/such/binary-xyz"])
        with pytest.raises(ComputeError, match="cannot start"):
            client.eval_snippet("result = 1", timeout=5)


class TestRoundTrips:
    def test_snippet_request_shape(self):
        body = ('print(json.dumps({"status": "ok", '
                '"result": [request["kind"], request["code"], '
                'request["timeout"]]}), flush=True)')
        with ComputeClient(worker_cmd(body)) as client:
            response = client.eval_snippet("result = 2 + 2", timeout=7)
        assert response.result == ["snippet", "result = 2 + 2", 7]

    def test_atomic_call_request_shape(self):
        body = ('print(json.dumps({"status": "ok", '
                '"result": [request["atomic_name"], request["args"]]}), '
                "flush=True)")
        with ComputeClient(worker_cmd(body)) as client:
            response = client.call_atomic(
                "mass_flow_rate",
                {"density": 1000.0, "area": 0.01, "velocity": 2.0}, timeout=5)
        assert response.result == [
            "mass_flow_rate",
            {"density": 1000.0, "area": 0.01, "velocity": 2.0}]

    def test_error_and_timeout_statuses_pass_through(self):
        body = ('print(json.dumps({"status": "error", '
                '"diagnostics": "NameError: x"}), flush=True)')
        with ComputeClient(worker_cmd(body)) as client:
            response = client.eval_snippet("x", timeout=5)
        assert response.status == "error"
        assert response.diagnostics == "NameError: x"

    def test_unknown_status_is_a_protocol_error(self):
        body = 'print(json.dumps({"status": "weird"}), flush=True)'
        with ComputeClient(worker_cmd(body)) as client:
            with pytest.raises(ComputeError, match="unknown status"):
                client.eval_snippet("result = 1", timeout=5)

    def test_malformed_response_line(self):
        body = "print('not json', flush=True)"
        with ComputeClient(worker_cmd(body)) as client:
            with pytest.raises(ComputeError, match="malformed"):
                client.eval_snippet("result = 1", timeout=5)

    def test_list_atomics_requires_a_list(self):
        body = ('print(json.dumps({"status": "ok", '
                '"result": [{"name": "mass_flow_rate"}]}), flush=True)')
        with ComputeClient(worker_cmd(body)) as client:
            atoms = client.list_atomics()
        assert atoms == [{"name": "mass_flow_rate"}]

        body = 'print(json.dumps({"status": "ok", "result": 3}), flush=True)'
        with ComputeClient(worker_cmd(body)) as client:
            with pytest.raises(ComputeError, match="list_atomics failed"):
                client.list_atomics()


class TestLifecycle:
    def test_worker_is_reused_across_requests(self):
        body = ("counter = globals().get('counter', 0) + 1\n"
                'print(json.dumps({"status": "ok", "result": counter}), '
                "flush=True)")
        with ComputeClient(worker_cmd(body)) as client:
            first = client.eval_snippet("result = 1", timeout=5)
            second = client.eval_snippet("result = 1", timeout=5)
        assert (first.result, second.result) == (1, 2)

    def test_crashed_worker_is_respawned(self):
        # Worker exits after answering once; the next request must succeed
        # against a fresh process.
        body = (ECHO_OK + "\n"
                "sys.exit(0)")
        with ComputeClient(worker_cmd(body)) as client:
            first = client.eval_snippet("result = 1", timeout=5)
            time.sleep(0.2)  # let the old process die
            second = client.eval_snippet("result = 1", timeout=5)
        assert first.status == "ok"
        assert second.status == "ok"

    def test_silent_worker_is_killed_at_the_deadline(self, monkeypatch):
        # Shrink the read grace so the deadline trips quickly.
        monkeypatch.setattr("honeycomb.compute_client.READ_GRACE", 0.5)
        body = "pass  # never answers"
        client = ComputeClient(worker_cmd(body))
        started = time.monotonic()
        with pytest.raises(ComputeError, match="no response within"):
            client.eval_snippet("result = 1", timeout=0.2)
        elapsed = time.monotonic() - started
        assert elapsed < 5.0
        assert client._proc is None

    def test_worker_dying_before_answering_is_an_eof_error(self):
        body = "sys.exit(0)"
        client = ComputeClient(worker_cmd(body))
        with pytest.raises(ComputeError, match="closed its output"):
            client.eval_snippet("result = 1", timeout=5)

    def test_close_is_idempotent(self):
        client = ComputeClient(worker_cmd(ECHO_OK))
        client.eval_snippet("result = 1", timeout=5)
        client.close()
        client.close()
        assert client._proc is None


class TestResponseInvariants:
    def test_defaults(self):
        response = ComputeResponse(status="ok", result=4)
        assert response.stdout == ""
        assert response.diagnostics == ""
