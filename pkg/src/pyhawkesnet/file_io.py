import csv
import json
import logging
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import FormatError
from .graph import InteractionGraph
from .simulator import EventLog
from .utils import jsonable

logger = logging.getLogger("pyhawkesnet.file_io")

EVENTS_HEADER = ("individual", "time")
QQ_HEADER = ("theoretical_quantile", "empirical_quantile")
TIME_FORMAT = "{:.9f}"


@contextmanager
def _atomic(path: str | Path, mode: str = "w"):
    """Write to a temp file next to ``path`` and move it into place on success."""
    path = str(path)
    directory = os.path.dirname(path) or "."
    with tempfile.NamedTemporaryFile(
        mode,
        delete=False,
        dir=directory,
        prefix=os.path.basename(path) + ".",
        suffix=".tmp",
        encoding="utf-8",
        newline="",
    ) as tmp:
        tmp_path = tmp.name
        try:
            yield tmp
        except BaseException:
            tmp.close()
            os.unlink(tmp_path)
            raise
    os.replace(tmp_path, path)
    logger.info("Wrote %s", path)


def meta_path(events_path: str | Path) -> Path:
    """Sidecar of ``ev.csv`` is ``ev.meta.json``."""
    events_path = Path(events_path)
    return events_path.with_name(events_path.stem + ".meta.json")


# ------------------ JSON ------------------


def write_json(path: str | Path, data: dict) -> None:
    with _atomic(path) as f:
        json.dump(jsonable(data), f, indent=2, sort_keys=False, allow_nan=False)
        f.write("\n")


def read_json(path: str | Path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path} is not valid JSON: {e}") from None


# ------------------ graphs ------------------


def write_graph(path: str | Path, g: InteractionGraph) -> None:
    """Header ``N p seed`` then one hex-encoded packed bit row per individual."""
    seed = "-" if g.seed is None else str(g.seed)
    with _atomic(path) as f:
        f.write(f"{g.n} {g.p!r} {seed}\n")
        for row in g.theta:
            f.write(np.packbits(row).tobytes().hex())
            f.write("\n")


def read_graph(path: str | Path) -> InteractionGraph:
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise FormatError(f"Graph file {path} is empty.")

    header = lines[0].split()
    if len(header) != 3:
        raise FormatError(f"Graph header must be 'N p seed', got {lines[0]!r}.")
    try:
        n = int(header[0])
        p = float(header[1])
        seed = None if header[2] == "-" else int(header[2])
    except ValueError:
        raise FormatError(f"Malformed graph header {lines[0]!r}.") from None

    rows = lines[1:]
    if len(rows) != n:
        raise FormatError(f"Graph {path} declares N={n} but has {len(rows)} rows.")
    width = (n + 7) // 8
    theta = np.zeros((n, n), dtype=bool)
    for i, line in enumerate(rows):
        try:
            packed = np.frombuffer(bytes.fromhex(line.strip()), dtype=np.uint8)
        except ValueError:
            raise FormatError(f"Row {i} of {path} is not hex.") from None
        if packed.size != width:
            raise FormatError(f"Row {i} of {path} has {packed.size} bytes, expected {width}.")
        theta[i] = np.unpackbits(packed, count=n).astype(bool)
    return InteractionGraph(n, p, theta, seed)


# ------------------ event logs ------------------


def write_events(path: str | Path, log: EventLog, meta: Optional[dict] = None) -> Path:
    """CSV ``individual,time`` sorted by (individual, time) plus the meta sidecar."""
    with _atomic(path) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(EVENTS_HEADER)
        for i, times in enumerate(log.events):
            for s in times:
                writer.writerow((i, TIME_FORMAT.format(s)))

    sidecar = meta_path(path)
    record = {**log.meta, **(meta or {}), "n": log.n, "horizon": log.horizon}
    write_json(sidecar, record)
    return sidecar


def read_events(
    path: str | Path, n: Optional[int] = None, horizon: Optional[float] = None
) -> EventLog:
    """Load an event CSV; N and horizon come from the sidecar unless given."""
    meta = {}
    sidecar = meta_path(path)
    if sidecar.exists():
        meta = read_json(sidecar)
    n = n if n is not None else meta.get("n")
    horizon = horizon if horizon is not None else meta.get("horizon")
    if n is None or horizon is None:
        raise FormatError(f"No N/horizon for {path}: missing {sidecar.name} and no overrides.")

    buckets: list[list[float]] = [[] for _ in range(int(n))]
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != EVENTS_HEADER:
            raise FormatError(f"{path} must start with header 'individual,time'.")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise FormatError(f"{path}:{line_no}: expected 2 columns, got {len(row)}.")
            try:
                i, s = int(row[0]), float(row[1])
            except ValueError:
                raise FormatError(f"{path}:{line_no}: malformed row {row!r}.") from None
            if not 0 <= i < n:
                raise FormatError(f"{path}:{line_no}: individual {i} outside [0, {n}).")
            buckets[i].append(s)

    try:
        return EventLog(int(n), float(horizon), tuple(np.array(b) for b in buckets), meta)
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from None


# ------------------ reports ------------------


def write_qq_csv(path: str | Path, rows: Iterable[tuple[float, float]]) -> None:
    with _atomic(path) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(QQ_HEADER)
        for theoretical, empirical in rows:
            writer.writerow((repr(float(theoretical)), repr(float(empirical))))


def write_flat_csv(path: str | Path, data: dict) -> None:
    """Two-column ``key,value`` CSV of the scalar leaves of a nested dict."""
    with _atomic(path) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(("key", "value"))
        for key, value in _flatten(jsonable(data)):
            writer.writerow((key, "" if value is None else value))


def _flatten(data, prefix: str = ""):
    if isinstance(data, dict):
        for key, value in data.items():
            yield from _flatten(value, f"{prefix}{key}.")
    elif isinstance(data, list):
        for index, value in enumerate(data):
            yield from _flatten(value, f"{prefix}{index}.")
    else:
        yield prefix[:-1], data
