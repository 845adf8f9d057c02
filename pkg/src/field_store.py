"""
Field store: named grid fields persisted as gridtxt files with a manifest.txt sidecar.

gridtxt layout: a header line `nx ny x0 y0 dx dy`, then nx lines of ny values.
Values use 17 significant digits so a write/read cycle is bit-exact.
"""

from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from loguru import logger

from src.errors import GridFormatError
from src.models import GridFunction2D

MANIFEST = "manifest.txt"


def _format_value(v: float) -> str:
    return format(float(v), ".17g")


def write_gridtxt(path: Path, values: np.ndarray, origin: Tuple[float, float], spacing: Tuple[float, float],
                  integer: bool = False):
    nx, ny = values.shape
    lines = [" ".join([str(nx), str(ny)] + [_format_value(v) for v in (*origin, *spacing)])]
    fmt = (lambda v: str(int(v))) if integer else _format_value
    lines.extend(" ".join(fmt(v) for v in row) for row in values)
    Path(path).write_text("\n".join(lines) + "\n")


def read_gridtxt(path: Path) -> Tuple[np.ndarray, Tuple[float, float], Tuple[float, float]]:
    """
    Raises:
        GridFormatError: missing file, bad header, wrong row count or length, unparsable value
    """
    path = Path(path)
    if not path.exists():
        raise GridFormatError(f"grid file {path} does not exist")
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise GridFormatError(f"{path}: empty file")
    header = lines[0].split()
    if len(header) != 6:
        raise GridFormatError(f"{path}: header needs 'nx ny x0 y0 dx dy', got {lines[0]!r}")
    try:
        nx, ny = int(header[0]), int(header[1])
        x0, y0, dx, dy = (float(v) for v in header[2:])
    except ValueError as e:
        raise GridFormatError(f"{path}: bad header: {e}") from e
    if nx < 2 or ny < 2 or dx <= 0 or dy <= 0:
        raise GridFormatError(f"{path}: degenerate grid {nx}x{ny} with spacing ({dx}, {dy})")
    rows = lines[1:]
    if len(rows) != nx:
        raise GridFormatError(f"{path}: expected {nx} rows, found {len(rows)}")
    values = np.empty((nx, ny))
    for i, row in enumerate(rows):
        items = row.split()
        if len(items) != ny:
            raise GridFormatError(f"{path}: row {i} has {len(items)} values, expected {ny}")
        try:
            values[i] = [float(v) for v in items]
        except ValueError as e:
            raise GridFormatError(f"{path}: row {i}: {e}") from e
    return values, (x0, y0), (dx, dy)


def load_grid_function(path: str, mask_path: Optional[str] = None) -> GridFunction2D:
    """Read a gridtxt field and an optional 0/1 mask on the same grid"""
    values, origin, spacing = read_gridtxt(Path(path))
    mask = None
    if mask_path is not None:
        raw, m_origin, m_spacing = read_gridtxt(Path(mask_path))
        if raw.shape != values.shape or not np.allclose(m_origin, origin) or not np.allclose(m_spacing, spacing):
            raise GridFormatError(f"mask {mask_path} does not share the grid of {path}")
        if not np.all(np.isin(raw, (0.0, 1.0))):
            raise GridFormatError(f"mask {mask_path} must hold only 0 and 1")
        mask = raw.astype(bool)
    else:
        mask = np.isfinite(values)
    return GridFunction2D(np.where(mask, values, 0.0), origin, spacing, mask)


class FieldStore:
    """Directory of named gridtxt fields indexed by manifest.txt (`name = file` lines)"""

    def __init__(self, root: str):
        self.root = Path(root) / "fields"
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest: Dict[str, str] = self._read_manifest()

    def _read_manifest(self) -> Dict[str, str]:
        path = self.root / MANIFEST
        entries: Dict[str, str] = {}
        if path.exists():
            for line in path.read_text().splitlines():
                if "=" in line:
                    name, file = (part.strip() for part in line.split("=", 1))
                    entries[name] = file
        return entries

    def _write_manifest(self):
        lines = [f"{name} = {file}" for name, file in sorted(self.manifest.items())]
        (self.root / MANIFEST).write_text("\n".join(lines) + "\n")

    def save(self, name: str, field: GridFunction2D) -> Path:
        """Store values (NaN off the mask) plus a `<name>.mask` companion"""
        file = f"{name}.gridtxt"
        write_gridtxt(self.root / file, np.where(field.mask, field.values, np.nan), field.origin, field.spacing)
        write_gridtxt(self.root / f"{name}.mask", field.mask.astype(int), field.origin, field.spacing, integer=True)
        self.manifest[name] = file
        self._write_manifest()
        logger.debug(f"Stored field {name} -> {file}")
        return self.root / file

    def save_array(self, name: str, values: np.ndarray, like: GridFunction2D) -> Path:
        return self.save(name, like.with_values(values))

    def load(self, name: str) -> GridFunction2D:
        if name not in self.manifest:
            raise KeyError(f"field {name!r} not in {self.root / MANIFEST}")
        mask_file = self.root / f"{name}.mask"
        return load_grid_function(str(self.root / self.manifest[name]),
                                  str(mask_file) if mask_file.exists() else None)

    def names(self) -> List[str]:
        return sorted(self.manifest)
