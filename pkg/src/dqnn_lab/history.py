"""Per-epoch loss records and their CSV form."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np


@dataclass
class LossHistory:
    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)

    def append(self, epoch: int, **values: float) -> None:
        if self.rows and epoch <= self.rows[-1][0]:
            raise ValueError("epochs must be strictly increasing")
        missing = set(self.columns) - set(values)
        if missing:
            raise KeyError(f"missing loss values: {sorted(missing)}")
        self.rows.append((epoch,) + tuple(float(values[c]) for c in self.columns))

    def column(self, name: str) -> list[float]:
        i = 1 + self.columns.index(name)
        return [r[i] for r in self.rows]

    @property
    def epochs(self) -> list[int]:
        return [r[0] for r in self.rows]

    def last(self, name: str) -> float:
        return self.column(name)[-1]

    def first_epoch_reaching(self, name: str, threshold: float) -> int | None:
        for epoch, value in zip(self.epochs, self.column(name)):
            if value >= threshold:
                return epoch
        return None

    def to_csv(self) -> str:
        return rows_to_csv(("epoch",) + self.columns, self.rows)


def format_value(v) -> str:
    # numpy scalars repr as np.float64(...), so go through the builtin types
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def rows_to_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()
