"""Reproducibility manifests and deterministic CSV output.

Every experiment writes its manifest before computing (status "incomplete")
and finalizes it afterwards; interrupted runs are therefore visible.  CSV
cells are rendered with shortest round-trip float formatting so identical
(config, seed) runs are byte-identical; wall-clock time lives only in the
manifest.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__

__all__ = ["Manifest", "write_csv", "read_csv", "emit_plot_data",
           "PLOT_COLUMNS"]


def _cell(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(float(x))
    import numpy as np
    if isinstance(x, (np.floating,)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def write_csv(path: str | Path, header: list[str], rows) -> dict:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    count = 0
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row width {len(row)} != header width "
                             f"{len(header)} in {path.name}")
        lines.append(",".join(_cell(x) for x in row))
        count += 1
    path.write_text("\n".join(lines) + "\n")
    return {"path": path.name, "header": header, "rows": count}


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty CSV")
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:] if ln]


@dataclass
class Manifest:
    outdir: Path
    config: dict
    experiment: str
    status: str = "incomplete"
    outputs: list = field(default_factory=list)
    wallclock_s: float = 0.0
    aborted_replicas: int = 0
    exit_code: int | None = None
    notes: list = field(default_factory=list)
    _t0: float = field(default_factory=time.monotonic, repr=False)

    def path(self) -> Path:
        return Path(self.outdir) / "manifest.json"

    def _payload(self) -> dict:
        return {
            "experiment": self.experiment,
            "version": __version__,
            "status": self.status,
            "config": self.config,
            "outputs": self.outputs,
            "wallclock_s": self.wallclock_s,
            "aborted_replicas": self.aborted_replicas,
            "exit_code": self.exit_code,
            "notes": self.notes,
            "written_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
        }

    def write(self):
        Path(self.outdir).mkdir(parents=True, exist_ok=True)
        self.path().write_text(json.dumps(self._payload(), indent=2) + "\n")

    def add_output(self, info: dict):
        self.outputs.append(info)

    def finalize(self, exit_code: int):
        self.status = "complete"
        self.exit_code = exit_code
        self.wallclock_s = time.monotonic() - self._t0
        self.write()


PLOT_COLUMNS = ["experiment", "series", "x", "y", "yerr"]


def emit_plot_data(csv_path: str | Path, out_path: str | Path | None = None,
                   experiment: str = "", series_col: str | None = None,
                   x_col: str | None = None, y_col: str | None = None,
                   yerr_col: str | None = None) -> Path:
    """Reshape an experiment CSV into the long plot-ready schema.

    Output columns are fixed (PLOT_COLUMNS); data row count is preserved.
    Already-long input is passed through unchanged (idempotent).
    """
    csv_path = Path(csv_path)
    header, rows = read_csv(csv_path)
    out_path = (csv_path.with_name(csv_path.stem + "_plot.csv")
                if out_path is None else Path(out_path))
    if header == PLOT_COLUMNS:
        out_path.write_text(csv_path.read_text())
        return out_path
    def pick(name, fallbacks):
        if name is not None:
            if name not in header:
                raise ValueError(f"{csv_path}: no column {name!r}")
            return header.index(name)
        for fb in fallbacks:
            if fb in header:
                return header.index(fb)
        return None
    xi = pick(x_col, ["T", "t", "x", "epoch", "resolution"])
    yi = pick(y_col, ["mean", "value", "y", "var_emp"])
    if xi is None or yi is None:
        raise ValueError(f"{csv_path}: cannot infer x/y columns from {header}")
    ei = pick(yerr_col, ["stderr", "se", "yerr"])
    si = pick(series_col, ["series", "test", "check", "mode"])
    out_rows = []
    for row in rows:
        series = row[si] if si is not None else csv_path.stem
        err = row[ei] if ei is not None else ""
        out_rows.append([experiment or csv_path.stem, series, row[xi],
                         row[yi], err])
    lines = [",".join(PLOT_COLUMNS)]
    lines += [",".join(str(c) for c in r) for r in out_rows]
    out_path.write_text("\n".join(lines) + "\n")
    return out_path
