"""Result tables with CSV output and a JSON metadata sidecar."""
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from .. import __version__
from ..errors import InvalidArgumentError


def _format(value):
    if isinstance(value, str):
        if any(c in value for c in ',"\n'):
            raise InvalidArgumentError(f"cell {value!r} needs quoting")
        return value
    if isinstance(value, bool):
        return "1" if value else "0"
    return format(float(value), ".17g")


@dataclass
class ResultTable:
    columns: list
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.columns = list(self.columns)
        for row in self.rows:
            self._check(row)

    def _check(self, row):
        if len(row) != len(self.columns):
            raise InvalidArgumentError(
                f"row has {len(row)} cells, table has {len(self.columns)} columns")

    def append(self, row):
        row = list(row)
        self._check(row)
        self.rows.append(row)

    def column(self, name):
        idx = self.columns.index(name)
        return [row[idx] for row in self.rows]

    def to_csv(self):
        buf = io.StringIO(newline="")
        buf.write(",".join(self.columns) + "\n")
        for row in self.rows:
            buf.write(",".join(_format(v) for v in row) + "\n")
        return buf.getvalue()

    def write(self, path):
        """Write ``path`` (CSV) and ``path`` with suffix ``.json`` (metadata)."""
        path = Path(path)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv())
        with open(metadata_path(path), "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.metadata, fh, indent=2, sort_keys=True)
            fh.write("\n")


def metadata_path(path):
    return Path(path).with_suffix(".json")


def read_csv(path):
    """Read a table written by :meth:`ResultTable.write`; numeric cells become floats."""
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    columns = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        if not line:
            continue
        cells = []
        for c in line.split(","):
            try:
                cells.append(float(c))
            except ValueError:
                cells.append(c)
        rows.append(cells)
    meta_file = metadata_path(path)
    metadata = json.loads(meta_file.read_text()) if meta_file.exists() else {}
    return ResultTable(columns, rows, metadata)


def make_metadata(cfg):
    return {"config": cfg.to_dict(), "version": __version__, "master_seed": cfg.master_seed}
