"""Append-only JSON-Lines results store and sweep manifests."""

from __future__ import annotations

import json
import logging
import os
import platform
import sys
import tempfile
import threading
from datetime import datetime, timezone
from pathlib import Path

from .errors import StoreMissing
from .sweep import RunResult

log = logging.getLogger(__name__)


class ResultsStore:
    def __init__(self, root: str | Path, create: bool = True):
        self.root = Path(root)
        if create:
            self.root.mkdir(parents=True, exist_ok=True)
        elif not self.runs_path.exists():
            raise StoreMissing(f"no results store at {self.runs_path}")
        self._lock = threading.Lock()
        self.corrupt_lines = 0

    @property
    def runs_path(self) -> Path:
        return self.root / "runs.jsonl"

    def append(self, result: RunResult) -> None:
        line = json.dumps(result.to_dict(), sort_keys=True)
        with self._lock, open(self.runs_path, "a") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def load(self) -> list[RunResult]:
        """Every stored record in write order; unreadable lines are skipped with a warning."""
        self.corrupt_lines = 0
        if not self.runs_path.exists():
            return []
        out = []
        with open(self.runs_path) as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    out.append(RunResult.from_dict(json.loads(line)))
                except (json.JSONDecodeError, TypeError, KeyError, ValueError) as exc:
                    self.corrupt_lines += 1
                    log.warning("skipping corrupt line %d of %s: %s", lineno, self.runs_path, exc)
        return out

    def latest(self) -> list[RunResult]:
        """The last record for each (arch, depth, config hash), in first-seen order."""
        latest: dict[tuple, RunResult] = {}
        for r in self.load():
            latest[r.key] = r
        return list(latest.values())

    def completed(self, arch: str, run_hash: str) -> dict[int, RunResult]:
        return {
            r.depth: r
            for r in self.latest()
            if r.arch == arch and r.config_hash == run_hash and r.ok
        }

    def write_manifest(self, manifest: dict) -> Path:
        path = self.root / "manifests" / f"{manifest['id']}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".part")
        with os.fdopen(fd, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        os.replace(tmp, path)
        return path

    def manifests(self) -> list[dict]:
        return [json.loads(p.read_text()) for p in sorted((self.root / "manifests").glob("*.json"))]


def environment_fingerprint() -> dict:
    import numpy

    env = {
        "python": sys.version.split()[0],
        "platform": platform.platform(),
        "numpy": numpy.__version__,
    }
    try:
        import keras

        env["keras"] = keras.__version__
        env["keras_backend"] = keras.backend.backend()
    except ImportError:
        pass
    return env


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")
