"""CSV and text emission for command results."""

from __future__ import annotations

import logging
import sys
from collections.abc import Iterable
from pathlib import Path

import pandas as pd

_LOGGER = logging.getLogger(__name__)


def write_table(frame: pd.DataFrame, out: str | Path | None) -> None:
    """Writes ``frame`` as CSV to ``out``, or to stdout when ``out`` is ``None``.

    Raises:
        OSError: If the destination cannot be written.
    """
    if out is None:
        frame.to_csv(sys.stdout, index=False, lineterminator="\n")
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    _LOGGER.debug("CSV written.", extra={"path": str(path), "rows": len(frame)})


def write_lines(lines: Iterable[str], out: str | Path | None) -> None:
    """Writes summary lines to ``out`` or prints them."""
    text = "\n".join(lines) + "\n"
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    _LOGGER.debug("Summary written.", extra={"path": str(path)})


def with_summary_rows(rows: pd.DataFrame) -> pd.DataFrame:
    """Appends ``mean`` and ``stderr`` rows to a per-round table.

    The ``round`` column of the appended rows holds the row label.
    """
    numeric = rows.drop(columns=["round"])
    summary = pd.DataFrame([numeric.mean(), numeric.sem(ddof=1)]).fillna(0.0)
    summary.insert(0, "round", ["mean", "stderr"])
    # Object columns keep the integer counts of the body rows as integers.
    return pd.concat([rows.astype(object), summary.astype(object)], ignore_index=True)
