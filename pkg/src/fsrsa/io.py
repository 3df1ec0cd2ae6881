"""File formats and the external limit-state protocol."""

import csv
import json
import math
import subprocess
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import EvaluatorError


# ----------------------------------------------------------------------
# JSON with stable key order and round-trip exact floats
# ----------------------------------------------------------------------


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def format_float(x):
    """17 significant digits; ``null`` for NaN and infinities."""
    if not math.isfinite(x):
        return "null"
    s = f"{x:.17g}"
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(obj[k], indent, level + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, float):
        return format_float(obj)
    if obj is None:
        return "null"
    if isinstance(obj, int):
        return str(obj)
    return json.dumps(obj, ensure_ascii=False)


def dumps_json(obj, indent=2):
    return _encode(_plain(obj), indent, 0) + "\n"


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_json(obj))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# ----------------------------------------------------------------------
# CSV
# ----------------------------------------------------------------------


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return "" if not math.isfinite(v) else f"{float(v):.17g}"
    if v is None:
        return ""
    return str(v)


def write_samples_csv(path, x):
    """Samples with header ``x1..xd``, one row per sample."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{k + 1}" for k in range(x.shape[1])])
        for row in x:
            w.writerow([f"{v:.17g}" for v in row])


def read_samples_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    d = len(header)
    x = np.empty((len(body), d))
    for r, row in enumerate(body):
        if len(row) != d:
            raise ValueError(f"{path}: row {r + 1} has {len(row)} fields, header has {d}")
        x[r] = [float(v) for v in row]
    return x


def write_rows_csv(path, rows):
    if not rows:
        open(path, "w").close()
        return
    keys = list(rows[0])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for row in rows:
            w.writerow([_cell(row.get(k)) for k in keys])


# ----------------------------------------------------------------------
# External limit state
# ----------------------------------------------------------------------


class ExternalLimitState:
    """Evaluate ``g`` by piping CSV rows of ``x`` into a command.

    The command reads comma-separated rows (no header) on standard input
    and writes one value of ``g`` per line on standard output.  Batches of
    ``batch_size`` rows are dispatched to up to ``workers`` concurrent
    processes.
    """

    def __init__(self, command, workers=1, batch_size=10_000, timeout=None):
        if isinstance(command, str):
            command = [command]
        if not command:
            raise ValueError("empty command")
        self.command = list(command)
        self.workers = int(workers)
        self.batch_size = int(batch_size)
        self.timeout = timeout
        self.__name__ = "external:" + " ".join(self.command)

    def _run(self, x, offset):
        payload = "".join(",".join(f"{v:.17g}" for v in row) + "\n" for row in x)
        try:
            proc = subprocess.run(self.command, input=payload, capture_output=True, text=True,
                                  timeout=self.timeout, check=False)
        except OSError as exc:
            raise EvaluatorError(f"cannot start limit-state command {self.command}: {exc}") from None
        if proc.returncode != 0:
            tail = proc.stderr.strip().splitlines()[-5:]
            raise EvaluatorError(
                f"limit-state command exited with status {proc.returncode}: {' | '.join(tail)}")
        lines = [ln for ln in proc.stdout.splitlines() if ln.strip()]
        if len(lines) != x.shape[0]:
            raise EvaluatorError(
                f"limit-state command returned {len(lines)} values for {x.shape[0]} rows")
        g = np.empty(len(lines))
        for k, ln in enumerate(lines):
            try:
                g[k] = float(ln)
            except ValueError:
                raise EvaluatorError(f"malformed output for row {offset + k}: {ln!r}",
                                     row=offset + k) from None
            if not math.isfinite(g[k]):
                raise EvaluatorError(f"non-finite value {ln.strip()!r} for row {offset + k}",
                                     row=offset + k)
        return g

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = x.shape[0]
        if n == 0:
            return np.empty(0)
        starts = list(range(0, n, self.batch_size))
        chunks = [(x[s:s + self.batch_size], s) for s in starts]
        if self.workers == 1 or len(chunks) == 1:
            parts = [self._run(c, s) for c, s in chunks]
        else:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                parts = list(pool.map(lambda cs: self._run(*cs), chunks))
        return np.concatenate(parts)
