"""CSV logs for replay and results.

All logs are UTF-8 with a header row. Floats are written with 17 significant
digits so a write/read cycle reproduces every value exactly.

=====  ===========================================================
kind   columns
=====  ===========================================================
imu    t, gx, gy, gz, ax, ay, az  (s, rad/s, m/s^2)
gps    t, lat_deg, lon_deg, h_m, vn, ve, vd
odo    t, v_body_mps
ref    t, lat_deg, lon_deg, h_m, vn, ve, vd, roll_deg, pitch_deg, yaw_deg
=====  ===========================================================
"""
from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from ..errors import LogFormatError
from ..simulator import GpsLog, ImuLog, OdoLog, RefLog

SCHEMAS: dict[str, tuple[str, ...]] = {
    "imu": ("t", "gx", "gy", "gz", "ax", "ay", "az"),
    "gps": ("t", "lat_deg", "lon_deg", "h_m", "vn", "ve", "vd"),
    "odo": ("t", "v_body_mps"),
    "ref": ("t", "lat_deg", "lon_deg", "h_m", "vn", "ve", "vd", "roll_deg", "pitch_deg", "yaw_deg"),
}

FLOAT_FMT = "%.17g"


def format_table(header: tuple[str, ...] | list[str], rows: NDArray) -> str:
    """Render a header and a float matrix as CSV text."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if rows.size and rows.shape[1] != len(header):
        raise ValueError(f"{rows.shape[1]} columns for a {len(header)}-column header")
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    if rows.size:
        np.savetxt(buf, rows, fmt=FLOAT_FMT, delimiter=",")
    return buf.getvalue()


def write_table(path: str | Path, header: tuple[str, ...] | list[str], rows: NDArray) -> None:
    Path(path).write_text(format_table(header, rows), encoding="utf-8", newline="\n")


def read_table(path: str | Path, header: tuple[str, ...]) -> NDArray[np.float64]:
    """Read a CSV and check it against ``header``.

    Raises
    ------
    LogFormatError
        On a missing file, header mismatch, ragged or non-numeric rows.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise LogFormatError(f"{path}: file not found") from None
    except UnicodeDecodeError as exc:
        raise LogFormatError(f"{path}: not UTF-8 ({exc})") from None
    lines = text.splitlines()
    if not lines:
        raise LogFormatError(f"{path}: empty file, header {','.join(header)} expected")
    got = tuple(h.strip() for h in lines[0].split(","))
    if got != tuple(header):
        raise LogFormatError(f"{path}: header {','.join(got)} does not match {','.join(header)}")
    out = np.empty((len(lines) - 1, len(header)))
    n = 0
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise LogFormatError(f"{path}:{i}: {len(parts)} fields, {len(header)} expected")
        try:
            out[n] = [float(p) for p in parts]
        except ValueError:
            raise LogFormatError(f"{path}:{i}: non-numeric field") from None
        n += 1
    out = out[:n]
    if n == 0:
        raise LogFormatError(f"{path}: no data rows")
    if not np.all(np.isfinite(out)):
        raise LogFormatError(f"{path}: non-finite values")
    return out


def check_timestamps(t: NDArray, path: str, max_gap: float | None = None) -> None:
    """Require strictly increasing time stamps and, optionally, bounded gaps."""
    d = np.diff(t)
    if np.any(d <= 0):
        k = int(np.argmax(d <= 0)) + 1
        raise LogFormatError(f"{path}: time stamps not strictly increasing at row {k + 1}")
    if max_gap is not None and d.size and d.max() > max_gap:
        k = int(np.argmax(d)) + 1
        raise LogFormatError(f"{path}: gap of {d.max():.6g} s before row {k + 1} exceeds {max_gap:g} s")


# --------------------------------------------------------------------------
# typed logs
# --------------------------------------------------------------------------
def write_imu(path: str | Path, log: ImuLog) -> None:
    write_table(path, SCHEMAS["imu"], np.column_stack([log.t, log.gyro, log.accel]))


def write_gps(path: str | Path, log: GpsLog) -> None:
    write_table(path, SCHEMAS["gps"], np.column_stack([log.t, log.lat_deg, log.lon_deg, log.h, log.vel_ned]))


def write_odo(path: str | Path, log: OdoLog) -> None:
    write_table(path, SCHEMAS["odo"], np.column_stack([log.t, log.speed]))


def write_ref(path: str | Path, log: RefLog) -> None:
    write_table(
        path,
        SCHEMAS["ref"],
        np.column_stack(
            [log.t, log.lat_deg, log.lon_deg, log.h, log.vel_ned, log.roll_deg, log.pitch_deg, log.yaw_deg]
        ),
    )


def read_imu(path: str | Path, max_gap: float | None = None) -> ImuLog:
    a = read_table(path, SCHEMAS["imu"])
    check_timestamps(a[:, 0], str(path), max_gap)
    return ImuLog(a[:, 0].copy(), a[:, 1:4].copy(), a[:, 4:7].copy())


def read_gps(path: str | Path, max_gap: float | None = None) -> GpsLog:
    a = read_table(path, SCHEMAS["gps"])
    check_timestamps(a[:, 0], str(path), max_gap)
    if np.any(np.abs(a[:, 1]) > 90):
        raise LogFormatError(f"{path}: latitude outside [-90, 90] deg")
    return GpsLog(a[:, 0].copy(), a[:, 1].copy(), a[:, 2].copy(), a[:, 3].copy(), a[:, 4:7].copy())


def read_odo(path: str | Path, max_gap: float | None = None) -> OdoLog:
    a = read_table(path, SCHEMAS["odo"])
    check_timestamps(a[:, 0], str(path), max_gap)
    return OdoLog(a[:, 0].copy(), a[:, 1].copy())


def read_ref(path: str | Path, max_gap: float | None = None) -> RefLog:
    a = read_table(path, SCHEMAS["ref"])
    check_timestamps(a[:, 0], str(path), max_gap)
    if np.any(np.abs(a[:, 1]) > 90):
        raise LogFormatError(f"{path}: latitude outside [-90, 90] deg")
    return RefLog(
        a[:, 0].copy(), a[:, 1].copy(), a[:, 2].copy(), a[:, 3].copy(), a[:, 4:7].copy(),
        a[:, 7].copy(), a[:, 8].copy(), a[:, 9].copy(),
    )


def read_aiding(path: str | Path, aiding: str, max_gap: float | None = None) -> GpsLog | OdoLog:
    """Read a GPS or odometer log according to ``aiding``."""
    if aiding == "gps":
        return read_gps(path, max_gap)
    if aiding == "odometer":
        return read_odo(path, max_gap)
    raise ValueError(f"unknown aiding {aiding!r}")
