"""Flat binary archive: one file of little-endian doubles plus a text manifest.

Layout for an archive with stem ``x``:

``x.bin``
    All arrays concatenated, row-major, each value a little-endian IEEE-754
    double. No header bytes.

``x.manifest``
    UTF-8 text. First line ``aoscl-flat 1``. Then one record per line:

    ``meta <key> <json>``
        free metadata (counters, configs).
    ``array <name> <offset> <shape> [tag=value ...]``
        ``offset`` counts doubles (not bytes) from the start of ``x.bin``;
        ``shape`` is ``d0xd1x...`` (``scalar`` for 0-d); tags are free
        ``key=value`` pairs without spaces.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = "aoscl-flat 1"
_DTYPE = np.dtype("<f8")


@dataclass
class FlatArchive:
    arrays: dict = field(default_factory=dict)  # name -> ndarray
    tags: dict = field(default_factory=dict)  # name -> {key: str}
    meta: dict = field(default_factory=dict)

    def add(self, name, value, **tags):
        if " " in name:
            raise ValueError(f"array name may not contain spaces: {name!r}")
        self.arrays[name] = np.asarray(value, dtype=np.float64)
        self.tags[name] = {k: str(v) for k, v in tags.items()}


def add_params(archive: FlatArchive, prefix: str, params) -> None:
    """Store a ParamSet, tagging each array with its group and norm flag."""
    for k in params:
        archive.add(f"{prefix}{k}", params[k], group=params.group(k), norm=int(params.is_norm(k)))


def get_params(archive: FlatArchive, prefix: str):
    from aoscl.numcore import ParamSet

    values, groups, norm = {}, {}, {}
    for name, arr in archive.arrays.items():
        if name.startswith(prefix):
            k = name[len(prefix):]
            values[k] = arr
            groups[k] = archive.tags[name]["group"]
            norm[k] = archive.tags[name].get("norm", "0") == "1"
    return ParamSet(values, groups, norm)


def _paths(stem):
    stem = Path(stem)
    return stem.with_name(stem.name + ".bin"), stem.with_name(stem.name + ".manifest")


def write(stem, archive: FlatArchive) -> tuple[Path, Path]:
    bin_path, man_path = _paths(stem)
    bin_path.parent.mkdir(parents=True, exist_ok=True)
    lines = [MAGIC]
    for key in sorted(archive.meta):
        lines.append(f"meta {key} {json.dumps(archive.meta[key], sort_keys=True)}")
    offset = 0
    chunks = []
    for name, value in archive.arrays.items():
        shape = "x".join(str(s) for s in value.shape) if value.ndim else "scalar"
        tags = " ".join(f"{k}={v}" for k, v in archive.tags.get(name, {}).items())
        lines.append(f"array {name} {offset} {shape}" + (f" {tags}" if tags else ""))
        chunks.append(value.astype(_DTYPE).ravel())
        offset += value.size
    data = np.concatenate(chunks) if chunks else np.zeros(0, dtype=_DTYPE)
    bin_path.write_bytes(data.astype(_DTYPE).tobytes())
    man_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return bin_path, man_path


def read(stem) -> FlatArchive:
    bin_path, man_path = _paths(stem)
    lines = man_path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise ValueError(f"{man_path} is not an aoscl flat manifest")
    data = np.frombuffer(bin_path.read_bytes(), dtype=_DTYPE)
    out = FlatArchive()
    for line in lines[1:]:
        if not line.strip():
            continue
        kind, rest = line.split(" ", 1)
        if kind == "meta":
            key, value = rest.split(" ", 1)
            out.meta[key] = json.loads(value)
        elif kind == "array":
            name, offset, shape, *tags = rest.split(" ")
            dims = () if shape == "scalar" else tuple(int(s) for s in shape.split("x"))
            n = int(np.prod(dims)) if dims else 1
            start = int(offset)
            if start + n > data.size:
                raise ValueError(f"array {name!r} runs past the end of {bin_path}")
            out.arrays[name] = data[start:start + n].reshape(dims).astype(np.float64)
            out.tags[name] = dict(t.split("=", 1) for t in tags)
        else:
            raise ValueError(f"unknown manifest record {kind!r}")
    return out
