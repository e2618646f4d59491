"""Run manifests: reproducibility records written at the end of each command.

A manifest snapshots the effective configuration, the tool version, per-stage
wall times and a SHA-256 checksum of every file the command produced. It is
written atomically (temp file + rename) so a crashed run never leaves a
half-written manifest behind.
"""

from __future__ import annotations

import hashlib
import json
import os
import time

__all__ = ["sha256_file", "StageTimer", "write_manifest"]


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class StageTimer:
    """Collects named wall-time measurements.

    >>> timer = StageTimer()
    >>> with timer.stage("solve"):
    ...     pass
    """

    def __init__(self):
        self.timings: dict[str, float] = {}

    def stage(self, name: str):
        timer = self

        class _Ctx:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                timer.timings[name] = timer.timings.get(name, 0.0) + time.perf_counter() - self.t0
                return False

        return _Ctx()


def write_manifest(path, command: str, config_snapshot: dict, timings: dict, output_paths) -> dict:
    """Checksum outputs and atomically write the manifest JSON; returns it."""
    from . import __version__

    manifest = {
        "command": command,
        "tool_version": __version__,
        "config": config_snapshot,
        "timings_s": {k: round(v, 6) for k, v in timings.items()},
        "outputs": {
            os.path.basename(os.fspath(p)): sha256_file(p) for p in sorted(map(os.fspath, output_paths))
        },
    }
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    return manifest
