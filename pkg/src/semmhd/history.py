"""Centre-point probe histories."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ProbeHistory:
    times: np.ndarray
    u_center: np.ndarray
    b_center: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.u_center = np.asarray(self.u_center, dtype=float)
        self.b_center = np.asarray(self.b_center, dtype=float)
        if not (len(self.times) == len(self.u_center) == len(self.b_center)):
            raise ValueError("history columns must have equal lengths")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("history times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    @classmethod
    def from_records(cls, records, metadata=None) -> "ProbeHistory":
        recs = list(records)
        return cls([r.t for r in recs], [r.u_center for r in recs], [r.b_center for r in recs],
                   dict(metadata or {}))

    def window(self, t_start: float) -> "ProbeHistory":
        m = self.times >= t_start
        return ProbeHistory(self.times[m], self.u_center[m], self.b_center[m], dict(self.metadata))


def fmt(x: float) -> str:
    """17 significant digits: enough to round-trip any double."""
    return f"{x:.17g}"


def write_history_csv(history: ProbeHistory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "u_center", "b_center"])
        for t, u, b in zip(history.times, history.u_center, history.b_center):
            w.writerow([fmt(t), fmt(u), fmt(b)])


def read_history_csv(path, metadata=None) -> ProbeHistory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["t", "u_center", "b_center"]:
        raise ValueError(f"{path}: not a history CSV")
    data = np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, 3)
    return ProbeHistory(data[:, 0], data[:, 1], data[:, 2], dict(metadata or {}))
