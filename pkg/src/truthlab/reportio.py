"""Structured report output: canonical JSON, flat CSV, and run manifests.

JSON is written with sorted keys and a trailing newline so reruns with an
identical manifest produce byte-identical reports regardless of worker
count.  The manifest itself carries the wall clock and is the one output
allowed to differ between reruns.
"""

import csv
import hashlib
import json
import time
from pathlib import Path

VERSION = "0.1.0"


def dumps_canonical(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_json(doc, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_canonical(doc))
    return path


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def config_digest(config_doc) -> str:
    return hashlib.sha256(dumps_canonical(config_doc).encode()).hexdigest()[:16]


def write_manifest(out_dir, command: str, config_doc: dict, seed, outputs,
                   started: float) -> Path:
    doc = {
        "command": command,
        "config": config_doc,
        "config_digest": config_digest(config_doc),
        "seed": seed,
        "version": VERSION,
        "outputs": sorted(str(o) for o in outputs),
        "wall_clock_s": round(time.time() - started, 3),
    }
    return write_json(doc, Path(out_dir) / "manifest.json")


def manifest_reference(config_doc: dict) -> dict:
    """Deterministic manifest pointer embedded in every report."""
    return {"manifest": "manifest.json", "config_digest": config_digest(config_doc)}
