"""Binary cube files and CSV tables.

Cube file layout (all little-endian)::

    b"MMWC"
    u32 version (=1), N, M, L, frame_count
    f64 f_c, mu, T_s, T_r, T_frame
    frame_count * L * M * N pairs of f32 (real, imag); n varies fastest,
    then m, then l, then frame

Every writer goes through a temporary file in the target directory and an
atomic rename, so a failed run never leaves a partial file behind.
"""

from __future__ import annotations

import contextlib
import csv
import io
import os
import struct
import tempfile
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from ..detector import Measurement
from ..signal import BasebandCube, RadarParams
from ..tracker import TrackSnapshot

MAGIC = b"MMWC"
VERSION = 1
_HEAD = struct.Struct("<4s5I5d")
# refuse payloads beyond 2**40 bytes; header fields this large are corrupt
MAX_PAYLOAD = 1 << 40

TRUTH_HEADER = ["frame", "label", "px", "py", "vx", "vy"]
MEAS_HEADER = ["frame", "px", "py", "vr", "r", "theta", "R00", "R01", "R11", "var_v", "snr_db"]
TRACK_HEADER = ["frame", "track_id", "status", "px", "py", "vx", "vy", "var_px", "var_py", "cov_pxpy"]
REPORT_HEADER = ["frame", "ospa", "n_truth", "n_tracks"]


class CubeFormatError(ValueError):
    """Malformed cube file; ``code`` names the failure."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class TableFormatError(ValueError):
    pass


@contextlib.contextmanager
def atomic_open(path: str | Path, mode: str = "w") -> Iterator:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    kwargs = {"newline": ""} if "b" not in mode else {}
    try:
        with os.fdopen(fd, mode, **kwargs) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def fmt(x: float) -> str:
    # adding 0.0 folds -0.0 into 0.0
    return format(float(x) + 0.0, ".12g")


# ---------------------------------------------------------------- cubes


def encode_cubes(cubes: Sequence[BasebandCube], params: RadarParams) -> bytes:
    N, M, L = params.shape
    head = _HEAD.pack(
        MAGIC, VERSION, N, M, L, len(cubes),
        params.f_c, params.mu, params.T_s, params.T_r, params.T_frame,
    )
    buf = io.BytesIO()
    buf.write(head)
    for cube in cubes:
        if cube.shape != (N, M, L):
            raise ValueError(f"cube shape {cube.shape} does not match radar {(N, M, L)}")
        arr = np.transpose(np.asarray(cube.data), (2, 1, 0))  # (L, M, N), n fastest
        pairs = np.empty(arr.shape + (2,), dtype="<f4")
        pairs[..., 0] = arr.real
        pairs[..., 1] = arr.imag
        buf.write(pairs.tobytes())
    return buf.getvalue()


def write_cube_file(path: str | Path, cubes: Sequence[BasebandCube], params: RadarParams) -> None:
    blob = encode_cubes(cubes, params)
    with atomic_open(path, "wb") as fh:
        fh.write(blob)


def decode_cubes(blob: bytes) -> tuple[RadarParams, list[BasebandCube]]:
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise CubeFormatError("bad_magic", "file does not start with MMWC")
    if len(blob) < _HEAD.size:
        raise CubeFormatError("truncated", "header is incomplete")
    _, version, N, M, L, F, f_c, mu, T_s, T_r, T_frame = _HEAD.unpack_from(blob)
    if version != VERSION:
        raise CubeFormatError("bad_version", f"unsupported version {version}")
    if min(N, M, L) == 0:
        raise CubeFormatError("dimension_overflow", f"zero dimension in {(N, M, L)}")
    size = 8 * N * M * L * F
    if size > MAX_PAYLOAD:
        raise CubeFormatError("dimension_overflow", f"payload of {size} bytes is implausible")
    body = len(blob) - _HEAD.size
    if body < size:
        raise CubeFormatError("truncated", f"payload has {body} of {size} bytes")
    if body > size:
        raise CubeFormatError("trailing_data", f"{body - size} bytes after the last frame")
    try:
        params = RadarParams(f_c=f_c, mu=mu, T_s=T_s, T_r=T_r, N=N, M=M, L=L, T_frame=T_frame)
    except ValueError as exc:
        raise CubeFormatError("bad_header", str(exc)) from exc
    raw = np.frombuffer(blob, dtype="<f4", offset=_HEAD.size).reshape(F, L, M, N, 2)
    cubes = []
    for f in range(F):
        data = (raw[f, ..., 0].astype(np.float64) + 1j * raw[f, ..., 1]).transpose(2, 1, 0)
        cubes.append(BasebandCube(data=np.ascontiguousarray(data), params=params))
    return params, cubes


def read_cube_file(path: str | Path) -> tuple[RadarParams, list[BasebandCube]]:
    return decode_cubes(Path(path).read_bytes())


# ---------------------------------------------------------------- CSV


def write_table(path: str | Path, header: list[str], rows: Iterable[list]) -> None:
    with atomic_open(path, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def _read_rows(path: str | Path, header: list[str]) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != header:
            raise TableFormatError(f"{path}: expected header {','.join(header)}")
        return list(reader)


def write_truth(path, frames: Sequence[Sequence]) -> None:
    """``frames[t]`` is a list of objects with ``label`` and state ``x``."""
    rows = []
    for t, targets in enumerate(frames):
        for tgt in sorted(targets, key=lambda g: g.label):
            px, vx, py, vy = tgt.x
            rows.append([t, tgt.label, fmt(px), fmt(py), fmt(vx), fmt(vy)])
    write_table(path, TRUTH_HEADER, rows)


def read_truth(path) -> dict[int, list[tuple[int, np.ndarray]]]:
    out: dict[int, list] = {}
    for row in _read_rows(path, TRUTH_HEADER):
        x = np.array([float(row["px"]), float(row["vx"]), float(row["py"]), float(row["vy"])])
        out.setdefault(int(row["frame"]), []).append((int(row["label"]), x))
    return out


def write_measurements(path, frames: Sequence[Sequence[Measurement]]) -> None:
    rows = []
    for t, meas in enumerate(frames):
        for m in meas:
            rows.append(
                [t, *map(fmt, (m.z[0], m.z[1], m.v_r, m.r, m.theta,
                                m.R[0, 0], m.R[0, 1], m.R[1, 1], m.var_v, m.snr_db))]
            )
    write_table(path, MEAS_HEADER, rows)


def read_measurements(path) -> list[list[Measurement]]:
    frames: dict[int, list[Measurement]] = {}
    for row in _read_rows(path, MEAS_HEADER):
        f = {k: float(v) for k, v in row.items() if k != "frame"}
        t = int(row["frame"])
        frames.setdefault(t, []).append(
            Measurement(
                z=[f["px"], f["py"]],
                R=[[f["R00"], f["R01"]], [f["R01"], f["R11"]]],
                v_r=f["vr"], var_v=f["var_v"], theta=f["theta"], r=f["r"],
                frame=t, snr_db=f["snr_db"],
            )
        )
    n = max(frames) + 1 if frames else 0
    return [frames.get(t, []) for t in range(n)]


def write_tracks(path, snapshots: Iterable[TrackSnapshot]) -> None:
    rows = []
    for s in sorted(snapshots, key=lambda s: (s.frame, s.label)):
        px, vx, py, vy = s.x
        P = s.sigma
        rows.append(
            [s.frame, s.label, s.status,
             *map(fmt, (px, py, vx, vy, P[0, 0], P[2, 2], P[0, 2]))]
        )
    write_table(path, TRACK_HEADER, rows)


def read_tracks(path) -> list[dict]:
    out = []
    for row in _read_rows(path, TRACK_HEADER):
        rec = {k: float(v) for k, v in row.items() if k not in ("frame", "track_id", "status")}
        rec.update(frame=int(row["frame"]), track_id=int(row["track_id"]), status=row["status"])
        out.append(rec)
    return out


def write_report(path, rows: Iterable[tuple[int, float, int, int]]) -> None:
    write_table(path, REPORT_HEADER, [[t, fmt(o), nt, nk] for t, o, nt, nk in rows])
