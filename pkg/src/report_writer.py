"""
Report emission: CSV tables, key-value summaries and a gnuplot script over the tables.
Everything written here is a pure function of the results, so repeated runs are byte-identical.
"""

from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

import numpy as np
import pandas as pd
from loguru import logger

FLOAT_FORMAT = "%.12e"


class ReportWriter:
    """Writes tables and summaries below one output directory and remembers what it wrote"""

    def __init__(self, out_dir: str):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.written: List[str] = []

    def _path(self, name: str) -> Path:
        path = self.out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        self.written.append(name)
        return path

    def table(self, name: str, frame: pd.DataFrame) -> Path:
        path = self._path(name)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        logger.debug(f"Wrote table {name} ({len(frame)} rows)")
        return path

    def summary(self, name: str, values: Mapping[str, Any]) -> Path:
        """`key = value` lines in insertion order"""
        path = self._path(name)
        path.write_text("".join(f"{key} = {format_value(value)}\n" for key, value in values.items()))
        return path

    def plot_script(self, name: str = "plot.gp") -> Optional[Path]:
        """gnuplot commands for whichever known tables this run produced"""
        blocks = []
        for table in self.written:
            block = PLOTS.get(Path(table).name)
            if block is not None:
                blocks.append(block.format(table=table))
        if not blocks:
            return None
        header = "set datafile separator ','\nset key autotitle columnhead\nset terminal pngcairo size 900,600\n"
        path = self._path(name)
        path.write_text(header + "\n".join(blocks))
        return path


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % value
    if isinstance(value, (list, tuple)):
        return " ".join(format_value(v) for v in value)
    return str(value)


PLOTS: Dict[str, str] = {
    "section_bound.csv": (
        "set output 'section_bound.png'\nset logscale xy\nset xlabel 'h'\nset ylabel 'sup |u|'\n"
        "plot '{table}' using 1:2 with linespoints\nunset logscale\n"
    ),
    "holder.csv": (
        "set output 'holder.png'\nset logscale xy\nset xlabel 'h'\nset ylabel 'osc u'\n"
        "plot '{table}' using 1:2 with linespoints\nunset logscale\n"
    ),
    "level_profile.csv": (
        "set output 'level_profile.png'\nset xlabel 'k'\nset ylabel 'omega(k)'\n"
        "plot '{table}' using 1:2 with steps\n"
    ),
    "sobolev.csv": (
        "set output 'sobolev.png'\nset xlabel 'ratio'\nset ylabel 'count'\nbin(x) = 0.005 * floor(x / 0.005)\n"
        "plot '{table}' using (bin($2)):(1.0) smooth frequency with boxes\n"
    ),
}
