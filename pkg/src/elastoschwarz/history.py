"""Per-iteration convergence records."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

STATUSES = ("running", "converged", "max_iters", "diverged", "stagnated")


@dataclass
class ConvergenceHistory:
    """Relative error / residual per iteration plus a final status.

    Row 0 is the initial state.  ``rel_error`` is NaN when no reference
    solution is available.
    """

    label: str = ""
    rel_error: list = field(default_factory=list)
    rel_residual: list = field(default_factory=list)
    status: str = "running"
    metadata: dict = field(default_factory=dict)

    def append(self, rel_error, rel_residual):
        self.rel_error.append(float("nan") if rel_error is None else float(rel_error))
        self.rel_residual.append(float("nan") if rel_residual is None else float(rel_residual))

    @property
    def iterations(self):
        """Number of completed iterations (rows after the initial one)."""
        return max(len(self.rel_residual) - 1, 0)

    @property
    def converged(self):
        return self.status == "converged"

    @property
    def diverged(self):
        return self.status == "diverged"

    def monitored(self):
        """Error when tracked, otherwise residual."""
        if self.rel_error and not all(math.isnan(e) for e in self.rel_error):
            return list(self.rel_error)
        return list(self.rel_residual)

    def final(self):
        values = self.monitored()
        return values[-1] if values else float("nan")

    def to_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "rel_error", "rel_residual", "flag"])
            n = len(self.rel_residual)
            for i in range(n):
                flag = self.status if i == n - 1 else ""
                w.writerow([i, f"{self.rel_error[i]:.17g}", f"{self.rel_residual[i]:.17g}", flag])
        return path

    @classmethod
    def from_csv(cls, path, label=""):
        h = cls(label=label)
        with Path(path).open(newline="") as fh:
            for row in csv.DictReader(fh):
                h.append(float(row["rel_error"]), float(row["rel_residual"]))
                if row["flag"]:
                    h.status = row["flag"]
        return h
