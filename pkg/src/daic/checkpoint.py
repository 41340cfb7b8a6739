"""Snapshot directories for crash recovery.

Layout of one snapshot::

    snapshot-000003/
        meta.txt            key=value lines: config, kernel, sequence number, file digests
        worker_0.state      vid<TAB>v<TAB>dv
        worker_0.pending    dest_vid<TAB>value   (buffered, not yet delivered)

A snapshot is written under a temporary name and renamed into place once
complete, so a directory named ``snapshot-*`` is never partial.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np


class SnapshotError(RuntimeError):
    pass


def format_value(x) -> str:
    if isinstance(x, np.ndarray):
        return ",".join(format_value(c) for c in x.ravel())
    if isinstance(x, Fraction):
        return str(x)
    return repr(float(x))


def parse_value(text: str, value_shape: tuple, exact: bool):
    parts = text.split(",")
    conv = Fraction if exact else float
    if value_shape:
        out = np.empty(value_shape, dtype=object if exact else float)
        out.ravel()[:] = [conv(p) for p in parts]
        return out
    if len(parts) != 1:
        raise SnapshotError(f"expected a scalar value, got {text!r}")
    return conv(parts[0])


@dataclass
class Snapshot:
    path: Path
    meta: dict
    # per worker: (vids, v rows, dv rows) and pending (dest vids, values)
    states: list
    pending: list

    @property
    def sequence(self) -> int:
        return int(self.meta["sequence"])


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_snapshot(root, sequence: int, meta: dict, states, pending) -> Path:
    """Write a complete snapshot under ``root``; returns its directory."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    final = root / f"snapshot-{sequence:06d}"
    tmp = root / f".tmp-snapshot-{sequence:06d}"
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir()
    try:
        digests = {}
        for i, (vids, v, dv) in enumerate(states):
            p = tmp / f"worker_{i}.state"
            with open(p, "w", encoding="utf-8") as fh:
                for vid, a, b in zip(vids, v, dv):
                    fh.write(f"{int(vid)}\t{format_value(a)}\t{format_value(b)}\n")
            digests[p.name] = _digest(p)
        for i, (dests, values) in enumerate(pending):
            p = tmp / f"worker_{i}.pending"
            with open(p, "w", encoding="utf-8") as fh:
                for dest, val in zip(dests, values):
                    fh.write(f"{int(dest)}\t{format_value(val)}\n")
            digests[p.name] = _digest(p)
        full = {**meta, "sequence": sequence, "workers": len(states), "files": json.dumps(digests)}
        with open(tmp / "meta.txt", "w", encoding="utf-8") as fh:
            for k, v in full.items():
                fh.write(f"{k}={v}\n")
            fh.flush()
            os.fsync(fh.fileno())
        if final.exists():
            shutil.rmtree(final)
        os.replace(tmp, final)
    except OSError:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return final


def latest_snapshot(path) -> Path:
    path = Path(path)
    if (path / "meta.txt").exists():
        return path
    candidates = sorted(p for p in path.glob("snapshot-*") if p.is_dir())
    if not candidates:
        raise SnapshotError(f"no snapshot found under {path}")
    return candidates[-1]


def read_meta(path) -> dict:
    meta = {}
    with open(Path(path) / "meta.txt", encoding="utf-8") as fh:
        for line in fh:
            if "=" in line:
                k, _, v = line.rstrip("\n").partition("=")
                meta[k] = v
    return meta


def read_snapshot(path, value_shape: tuple = (), exact: bool = False) -> Snapshot:
    path = latest_snapshot(path)
    try:
        meta = read_meta(path)
        digests = json.loads(meta["files"])
        workers = int(meta["workers"])
    except (OSError, KeyError, ValueError) as exc:
        raise SnapshotError(f"{path}: unreadable meta.txt ({exc})") from exc
    states, pending = [], []
    for i in range(workers):
        for suffix in ("state", "pending"):
            name = f"worker_{i}.{suffix}"
            p = path / name
            if not p.exists() or digests.get(name) != _digest(p):
                raise SnapshotError(f"{path}: {name} is missing or corrupt")
        vids, vs, dvs = [], [], []
        try:
            for line in (path / f"worker_{i}.state").read_text(encoding="utf-8").splitlines():
                vid, a, b = line.split("\t")
                vids.append(int(vid))
                vs.append(parse_value(a, value_shape, exact))
                dvs.append(parse_value(b, value_shape, exact))
            states.append((vids, vs, dvs))
            dests, vals = [], []
            for line in (path / f"worker_{i}.pending").read_text(encoding="utf-8").splitlines():
                dest, val = line.split("\t")
                dests.append(int(dest))
                vals.append(parse_value(val, value_shape, exact))
            pending.append((dests, vals))
        except ValueError as exc:
            raise SnapshotError(f"{path}: malformed worker {i} dump ({exc})") from exc
    return Snapshot(path, meta, states, pending)
