from __future__ import annotations

import sys
from pathlib import Path

import pytest
from hypothesis import settings

DATA = Path(__file__).parent / "data"
sys.path.insert(0, str(Path(__file__).parent))

# numba compiles on first call and the box has one core; timing is not under test
settings.register_profile("default", deadline=None)
settings.load_profile("default")


def read_data(name: str) -> str:
    return (DATA / name).read_text()


@pytest.fixture
def counts_text() -> str:
    # Hour1-Hour5 are the published sample values; Hour6-Hour24 are filler
    return read_data("sample_counts.csv")


@pytest.fixture
def factors_text() -> str:
    return read_data("sample_factors.csv")


@pytest.fixture
def params_text() -> str:
    return read_data("sample_params.csv")


@pytest.fixture
def output_text() -> str:
    return read_data("sample_output.csv")


class AtrServer:
    """Local HTTP fixture serving /atr/<county>/<station>/<year>.csv.

    Stations in ``missing`` get 404; stations in ``flaky`` fail with 500 on
    their first request and succeed afterwards.
    """

    def __init__(self):
        import threading
        from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

        self.missing = set()
        self.flaky = set()
        self.hits = {}
        self.lock = threading.Lock()
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):
                parts = self.path.strip("/").split("/")
                if len(parts) != 4 or parts[0] != "atr":
                    self.send_error(400)
                    return
                county, station, year = int(parts[1]), int(parts[2]), parts[3].removesuffix(".csv")
                with server.lock:
                    n = server.hits.get(station, 0)
                    server.hits[station] = n + 1
                if station in server.missing:
                    self.send_error(404)
                    return
                if station in server.flaky and n == 0:
                    self.send_error(500)
                    return
                body = server.body(county, station, year).encode()
                self.send_response(200)
                self.send_header("Content-Type", "text/csv")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    @staticmethod
    def body(county, station, year) -> str:
        hours = ",".join(str(station + h) for h in range(24))
        head = "Date," + ",".join(f"Hour{h}" for h in range(1, 25))
        return f"{head}\n1/2/{year},{hours}\n"

    @property
    def template(self) -> str:
        host, port = self.httpd.server_address
        return f"http://{host}:{port}/atr/{{county}}/{{station}}/{{year}}.csv"

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def atr_server():
    server = AtrServer()
    yield server
    server.close()


# --------------------------------------------------------------------------
# acceptance result lines

ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(request):
    """Call ``criterion(ok, detail)`` once; records and prints a PASS/FAIL line, then asserts."""
    name = request.node.function.__doc__.strip().splitlines()[0] if request.node.function.__doc__ else request.node.name

    def record(ok: bool, detail: str = "") -> None:
        line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
