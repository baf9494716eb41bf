"""Reading and writing event sequences, graphs and reports.

Event files are two-column CSV (time, mark) with 17 significant digits, which
round-trips float64 exactly. The observation window and mark count live in a
JSON sidecar next to the data file (``<path>.json``) so a data file is
self-describing; explicit arguments override the sidecar. All writes go
through a temp file in the target directory followed by an atomic rename.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile

import numpy as np

from locindep.core import DirectedGraph, EventDataError, MarkedEventSequence, validate_events


def atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(obj, path: str) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def sidecar_path(data_path: str) -> str:
    return data_path + ".json"


def write_events(seq: MarkedEventSequence, path: str) -> None:
    lines = ["time,mark"]
    lines.extend(f"{t:.17g},{m}" for t, m in zip(seq.times, seq.marks))
    atomic_write_text(path, "\n".join(lines) + "\n")
    t0, t1 = seq.window
    write_json({"t_start": t0, "t_end": t1, "d": seq.d}, sidecar_path(path))


def read_events(
    path: str,
    *,
    window: tuple[float, float] | None = None,
    d: int | None = None,
    jitter: float = 0.0,
    jitter_seed: int = 0,
) -> MarkedEventSequence:
    """Load an event CSV, taking window and mark count from the sidecar unless
    given explicitly.

    jitter > 0 adds uniform noise on [0, jitter) to every timestamp (seeded),
    which is the supported way to load data with tied times.
    """
    if not os.path.exists(path):
        raise EventDataError(f"{path}: no such file")
    meta = {}
    side = sidecar_path(path)
    if os.path.exists(side):
        with open(side) as handle:
            meta = json.load(handle)
    if window is None:
        if "t_start" not in meta or "t_end" not in meta:
            raise EventDataError(
                f"no observation window: pass one explicitly or provide {side}"
            )
        window = (float(meta["t_start"]), float(meta["t_end"]))
    if d is None:
        if "d" not in meta:
            raise EventDataError(
                f"number of marks unknown: pass d explicitly or provide {side}"
            )
        d = int(meta["d"])

    times: list[float] = []
    marks: list[int] = []
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["time", "mark"]:
            raise EventDataError(f"{path}: expected a 'time,mark' header")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                times.append(float(row[0]))
                marks.append(int(row[1]))
            except (IndexError, ValueError) as exc:
                raise EventDataError(f"{path}:{lineno}: malformed row {row!r}") from exc

    times_arr = np.asarray(times, dtype=float)
    if jitter > 0.0 and times_arr.size:
        rng = np.random.default_rng(jitter_seed)
        times_arr = times_arr + rng.uniform(0.0, jitter, times_arr.size)
        order = np.argsort(times_arr, kind="stable")
        times_arr = times_arr[order]
        marks_arr = np.asarray(marks, dtype=int)[order]
        times_arr = np.clip(times_arr, window[0], np.nextafter(window[1], -np.inf))
        return validate_events(times_arr, marks_arr, window=window, d=d)
    return validate_events(times_arr, np.asarray(marks, dtype=int), window=window, d=d)


def write_graph(graph: DirectedGraph, path: str) -> None:
    write_json({"d": graph.d, "edges": [list(e) for e in graph.edge_list()]}, path)


def read_graph(path: str) -> DirectedGraph:
    with open(path) as handle:
        obj = json.load(handle)
    try:
        return DirectedGraph.from_edges(int(obj["d"]), obj["edges"])
    except (KeyError, TypeError, ValueError) as exc:
        raise EventDataError(f"{path}: not a graph file ({exc})") from exc


def graph_to_dot(graph: DirectedGraph, node_names: tuple[str, ...] | None = None) -> str:
    if node_names is None:
        node_names = tuple(str(v) for v in range(graph.d))
    lines = ["digraph G {", "  rankdir=LR;"]
    for v in range(graph.d):
        lines.append(f'  {v} [label="{node_names[v]}"];')
    for j, k in graph.edge_list():
        lines.append(f"  {j} -> {k};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_dot(graph: DirectedGraph, path: str, node_names: tuple[str, ...] | None = None) -> None:
    atomic_write_text(path, graph_to_dot(graph, node_names))
