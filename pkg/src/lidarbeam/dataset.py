"""Paired dataset records, the on-disk record stream and its manifest.

File layout (little-endian): 8-byte magic, uint32 format version, then
records. Each record is a uint32 header length, a UTF-8 JSON header and
the raw bytes of the arrays it lists (name, dtype, shape) in order.
The manifest is a JSON sidecar named ``<dataset>.manifest.json``.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, List, Optional

import numpy as np

from .features import HistogramGrid
from .mmwave import best_pair, make_label
from .raytrace import LinkState, MpcList, link_state

MAGIC = b"LBDSET\x00\x00"
VERSION = 1
_DTYPES = {"cloud": "<f4", "mpcs": "<f8", "y": "<f8", "label": "<f8", "grid": "<i8"}


class DatasetError(ValueError):
    pass


@dataclass
class DatasetRecord:
    episode: int
    scene: dict  # seed, ego pose, BS pose, vehicle count
    cloud: np.ndarray  # (D, 3) world coordinates
    mpcs: np.ndarray  # (P, 8) rows, see MpcList.to_array
    y: np.ndarray  # (|Ct|, |Cr|)
    los: bool
    state: str
    label: Optional[np.ndarray]  # None for outage
    best: Optional[tuple]
    ego_estimate: np.ndarray
    tags: dict = field(default_factory=dict)
    grid: Optional[np.ndarray] = None  # sparse (n, 4) quads
    bs_bin: Optional[tuple] = None
    dhat: Optional[float] = None

    @property
    def outage(self) -> bool:
        return self.state == LinkState.OUTAGE.value

    def histogram(self, shape) -> HistogramGrid:
        if self.grid is None:
            raise DatasetError(f"record {self.episode} is not featurized")
        return HistogramGrid.from_sparse(self.grid, shape, self.bs_bin)

    def validate(self) -> None:
        """Re-derive the LOS flag and label from the stored channel data."""
        state = link_state(MpcList.from_array(self.mpcs)).value
        if state != self.state or self.los != (state == LinkState.LOS.value):
            raise DatasetError(f"record {self.episode}: LOS flag inconsistent with its paths")
        if self.outage:
            if self.label is not None or np.any(self.y > 0):
                raise DatasetError(f"record {self.episode}: outage record carries a label")
            return
        if self.label is None or not np.array_equal(self.label, make_label(self.y)):
            raise DatasetError(f"record {self.episode}: label differs from make_label(y)")
        if tuple(self.best) != tuple(best_pair(self.y)):
            raise DatasetError(f"record {self.episode}: best pair differs from best_pair(y)")

    def with_features(self, quads, bs_bin, dhat) -> "DatasetRecord":
        return replace(self, grid=np.asarray(quads, dtype=np.int64).reshape(-1, 4),
                       bs_bin=tuple(int(v) for v in bs_bin), dhat=float(dhat))


def _encode(rec: DatasetRecord) -> bytes:
    arrays = {"cloud": rec.cloud, "mpcs": rec.mpcs, "y": rec.y}
    if rec.label is not None:
        arrays["label"] = rec.label
    if rec.grid is not None:
        arrays["grid"] = rec.grid
    blobs, desc = [], []
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype=_DTYPES[name])
        desc.append([name, list(a.shape)])
        blobs.append(a.tobytes())
    header = {
        "episode": rec.episode, "scene": rec.scene, "los": bool(rec.los), "state": rec.state,
        "best": None if rec.best is None else [int(v) for v in rec.best],
        "ego_estimate": [float(v) for v in rec.ego_estimate], "tags": rec.tags,
        "bs_bin": None if rec.bs_bin is None else list(rec.bs_bin),
        "dhat": rec.dhat, "arrays": desc,
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return struct.pack("<I", len(hb)) + hb + b"".join(blobs)


def _decode(fh) -> Optional[DatasetRecord]:
    raw = fh.read(4)
    if not raw:
        return None
    if len(raw) < 4:
        raise DatasetError("truncated record header")
    (n,) = struct.unpack("<I", raw)
    header = json.loads(fh.read(n).decode())
    arrays = {}
    for name, shape in header["arrays"]:
        dt = np.dtype(_DTYPES[name])
        count = int(np.prod(shape))
        buf = fh.read(dt.itemsize * count)
        if len(buf) != dt.itemsize * count:
            raise DatasetError(f"truncated array {name!r} in record {header['episode']}")
        arrays[name] = np.frombuffer(buf, dtype=dt).reshape(shape).astype(dt.newbyteorder("="))
    return DatasetRecord(
        episode=header["episode"], scene=header["scene"], cloud=arrays["cloud"],
        mpcs=arrays["mpcs"], y=arrays["y"], los=header["los"], state=header["state"],
        label=arrays.get("label"), best=None if header["best"] is None else tuple(header["best"]),
        ego_estimate=np.asarray(header["ego_estimate"]), tags=header["tags"],
        grid=arrays.get("grid"),
        bs_bin=None if header["bs_bin"] is None else tuple(header["bs_bin"]),
        dhat=header["dhat"])


class DatasetWriter:
    """Streams records to ``path``; use as a context manager."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "wb")
        self._fh.write(MAGIC + struct.pack("<I", VERSION))
        self.count = 0

    def write(self, rec: DatasetRecord) -> None:
        self._fh.write(_encode(rec))
        self.count += 1

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def iter_records(path, validate: bool = True) -> Iterator[DatasetRecord]:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise DatasetError(f"{path}: not a dataset file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise DatasetError(f"{path}: unsupported dataset version {version}")
        while (rec := _decode(fh)) is not None:
            if validate:
                rec.validate()
            yield rec


def read_dataset(path, validate: bool = True) -> List[DatasetRecord]:
    return list(iter_records(path, validate))


def manifest_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".manifest.json")


def write_manifest(path, manifest: dict) -> None:
    with open(manifest_path(path), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> dict:
    with open(manifest_path(path)) as fh:
        return json.load(fh)


def state_counts(records) -> dict:
    counts = {s.value: 0 for s in LinkState}
    for r in records:
        counts[r.state] += 1
    return counts


def split(records, fraction: float = 0.8, seed: int = 0):
    """Seeded train/test split of record indices, stratified by LOS flag.

    Outage records are left out. Each stratum contributes round(fraction * n)
    records to training (largest remainder, so the total is exact).
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("split fraction must lie in (0, 1)")
    los = np.array([r.los for r in records], dtype=bool)
    usable = np.array([not r.outage for r in records], dtype=bool)
    strata = [np.nonzero(usable & los)[0], np.nonzero(usable & ~los)[0]]
    strata = [s for s in strata if len(s)]
    if not strata or any(len(s) < 2 for s in strata):
        raise ValueError("dataset too small to split every LOS/NLOS stratum")
    total = sum(len(s) for s in strata)
    target = int(round(fraction * total))
    exact = [fraction * len(s) for s in strata]
    n_train = [int(np.floor(e)) for e in exact]
    for i in np.argsort([-(e - np.floor(e)) for e in exact], kind="stable"):
        if sum(n_train) >= target:
            break
        n_train[i] += 1
    rng = np.random.default_rng(seed)
    train, test = [], []
    for s, n in zip(strata, n_train):
        perm = rng.permutation(s)
        train.extend(perm[:n].tolist())
        test.extend(perm[n:].tolist())
    return sorted(train), sorted(test)
