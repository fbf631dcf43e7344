"""Count files: parsing, canonical serialization and behavior estimation.

The CSV format has the header ``a0,a1,y,b,count``; each row adds ``count``
observations of outcome ``b`` for preparation ``z = (a0, a1)`` and setting
``y``.  Lines starting with ``#`` and blank lines are ignored, duplicate rows
are summed.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from typing import Optional

import numpy as np

from .scenario import Scenario, eval_T, make_qrac_scenario

HEADER = ("a0", "a1", "y", "b", "count")


class CountsError(ValueError):
    """Malformed or incomplete count data; ``line`` is 1-based when known."""

    def __init__(self, msg: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


@dataclasses.dataclass(frozen=True, eq=False)
class CountsTable:
    """``counts[z, y, b]`` for a d-level QRAC, ``z = a0 + d * a1``."""

    dim: int
    counts: np.ndarray

    def __post_init__(self):
        c = np.array(self.counts, dtype=np.int64)
        d = self.dim
        if c.shape != (d * d, 2, d):
            raise CountsError(f"counts must have shape {(d * d, 2, d)}, got {c.shape}")
        if (c < 0).any():
            raise CountsError("counts must be non-negative")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def scenario(self) -> Scenario:
        return make_qrac_scenario(self.dim)

    def totals(self) -> np.ndarray:
        """Sample size per flattened input ``x = 2 z + y``."""
        return self.counts.sum(axis=2).reshape(-1)

    def check_complete(self) -> None:
        tot = self.counts.sum(axis=2)
        for z, y in zip(*np.nonzero(tot == 0)):
            a0, a1 = z % self.dim, z // self.dim
            raise CountsError(f"no counts for input (a0={a0}, a1={a1}, y={y})")


def parse_counts(text: str, dim: Optional[int] = None) -> CountsTable:
    """Parse and validate a counts CSV.

    ``dim`` defaults to one more than the largest symbol that appears.
    """
    rows = []
    reader = csv.reader(io.StringIO(text))
    header_seen = False
    for lineno, rec in enumerate(reader, start=1):
        if not rec or not "".join(rec).strip() or rec[0].lstrip().startswith("#"):
            continue
        rec = [f.strip() for f in rec]
        if not header_seen:
            if tuple(rec) != HEADER:
                raise CountsError(f"expected header {','.join(HEADER)}, got {','.join(rec)}", lineno)
            header_seen = True
            continue
        if len(rec) != 5:
            raise CountsError(f"expected 5 fields, got {len(rec)}", lineno)
        try:
            vals = [int(f) for f in rec]
        except ValueError:
            raise CountsError(f"non-integer field in {','.join(rec)!r}", lineno) from None
        if vals[4] < 0:
            raise CountsError(f"negative count {vals[4]}", lineno)
        if min(vals[:4]) < 0:
            raise CountsError("symbols must be non-negative", lineno)
        if vals[2] > 1:
            raise CountsError(f"setting y={vals[2]} outside {{0, 1}}", lineno)
        rows.append((lineno, vals))
    if not header_seen:
        raise CountsError("empty file: missing header")
    if dim is None:
        dim = 1 + max((max(v[0], v[1], v[3]) for _, v in rows), default=1)
        dim = max(dim, 2)
    counts = np.zeros((dim * dim, 2, dim), dtype=np.int64)
    for lineno, (a0, a1, y, b, n) in rows:
        if max(a0, a1, b) >= dim:
            raise CountsError(f"symbol out of range for d={dim}", lineno)
        counts[a0 + dim * a1, y, b] += n
    table = CountsTable(dim, counts)
    table.check_complete()
    return table


def serialize_counts(table: CountsTable) -> str:
    """Canonical form: every row, ordered by ``(z, y, b)``, LF line endings."""
    d = table.dim
    out = [",".join(HEADER)]
    for z in range(d * d):
        for y in range(2):
            for b in range(d):
                out.append(f"{z % d},{z // d},{y},{b},{table.counts[z, y, b]}")
    return "\n".join(out) + "\n"


def read_counts(path, dim: Optional[int] = None) -> CountsTable:
    with open(path, encoding="utf-8") as fh:
        return parse_counts(fh.read(), dim)


def write_counts(path, table: CountsTable) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_counts(table))


def estimate_behavior(table: CountsTable) -> tuple[np.ndarray, np.ndarray]:
    """Relative frequencies ``(p_hat[b, x], n[x])``."""
    tot = table.totals()
    if (tot == 0).any():
        table.check_complete()
    freq = table.counts.reshape(-1, table.dim) / tot[:, None]
    return freq.T.copy(), tot


def estimate_T(table: CountsTable, s: Optional[Scenario] = None) -> tuple[float, float]:
    """Point estimate of ``T`` and its standard error.

    Inputs are independent multinomials, so the variance is the sum over
    ``x`` of ``(sum_b c^2 p - (sum_b c p)^2) / n_x``.
    """
    s = table.scenario if s is None else s
    p, n = estimate_behavior(table)
    t_hat = eval_T(s, p)
    c = s.payoff
    var = ((c**2 * p).sum(axis=0) - (c * p).sum(axis=0) ** 2) / n
    return t_hat, math.sqrt(max(0.0, float(var.sum())))
