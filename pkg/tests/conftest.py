import os

os.environ.setdefault("TF_CPP_MIN_LOG_LEVEL", "3")

import csv

import pytest

from layertune.ingest import CLASSES
from reference_values import CLASS_COUNTS


ACCEPTANCE_LINES: list[str] = []


def write_catalog(path, counts=CLASS_COUNTS, extra_rows=()):
    """Catalog CSV whose labels are interleaved galaxy/qso/star in a fixed pattern."""
    labels = [c for c in CLASSES for _ in range(counts.get(c, 0))]
    labels = labels[0::2] + labels[1::2]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["objid", "ra", "dec", "class"])
        for i, label in enumerate(labels):
            w.writerow([f"obj{i:04d}", f"{(i * 0.37) % 360:.5f}", f"{((i * 0.11) % 180) - 90:.5f}", label])
        for row in extra_rows:
            w.writerow(row)
    return path


@pytest.fixture
def sdss_catalog(tmp_path):
    return write_catalog(tmp_path / "catalog.csv")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


class _CutoutServer:
    """Local stand-in for the SkyServer ImgCutout route; counts requests."""

    def __init__(self):
        import threading
        from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
        from urllib.parse import parse_qs, urlparse

        import numpy as np

        from layertune.images import encode_jpeg

        server = self
        self.requests = 0
        self.fail = False

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):
                server.requests += 1
                if server.fail:
                    self.send_response(503)
                    self.end_headers()
                    return
                q = {k: v[0] for k, v in parse_qs(urlparse(self.path).query).items()}
                w, h = int(q["width"]), int(q["height"])
                shade = int(float(q["ra"]) * 10) % 200 + 20
                body = encode_jpeg(np.full((h, w, 3), shade, dtype=np.uint8))
                self.send_response(200)
                self.send_header("Content-Type", "image/jpeg")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.httpd.server_address[1]}/SkyServerWS/ImgCutout/getjpeg"
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def cutout_server():
    server = _CutoutServer()
    yield server
    server.close()


@pytest.fixture(scope="session")
def builtin_irs():
    """Realized IRs of the seven built-in backbones (random weights, 224 px input)."""
    from layertune.registry import list_architectures, load_backbone

    return {d.name: load_backbone(d.name, "random", input_size=224)[1] for d in list_architectures()}


@pytest.fixture(scope="session")
def tiny_split():
    """Small synthetic sky split (16 px) for fast sweep tests."""
    from layertune.ingest import stratified_split
    from layertune.synthetic import generate_sky_shapes

    return stratified_split(generate_sky_shapes(40, 16, seed=1), 0.7, seed=3)


def tiny_loader(name, size=16):
    from layertune.registry import load_backbone

    return load_backbone(name, "random", input_size=size, seed=7)
