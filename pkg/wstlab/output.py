"""Result tables with a provenance header."""
import json
import logging
import sys
from collections.abc import Mapping
from contextlib import contextmanager
from pathlib import Path
from typing import TextIO

import polars as pl

from wstlab import __version__

logger = logging.getLogger(__name__)

HEADER_PREFIX = "# wstlab"


def provenance(seed: int, config_hash: str | None = None, **extra: object) -> dict:
    """Header fields written on top of every result file."""
    header: dict[str, object] = {"version": __version__, "seed": seed}
    if config_hash is not None:
        header["config_hash"] = config_hash
    header.update(extra)
    return header


def header_line(header: Mapping[str, object]) -> str:
    """``# wstlab key=value ...`` comment line."""
    fields = " ".join(f"{key}={value}" for key, value in header.items())
    return f"{HEADER_PREFIX} {fields}\n"


@contextmanager
def _open_output(path: str | Path | None):
    if path is None or str(path) == "-":
        yield sys.stdout
        return
    with open(path, "w", newline="") as handle:
        yield handle


def write_table(
    frame: pl.DataFrame,
    path: str | Path | None,
    fmt: str = "csv",
    header: Mapping[str, object] | None = None,
) -> None:
    """Write a result table as CSV or JSON.

    CSV files start with a single ``#`` header line; JSON files are an object
    with ``header`` and ``rows`` keys.

    Args:
        frame (pl.DataFrame): The table.
        path (str | Path, optional): Destination; ``None`` or ``-`` is stdout.
        fmt (str): ``csv`` or ``json``.
        header (Mapping, optional): Provenance fields.
    """
    header = dict(header or {})
    with _open_output(path) as handle:
        if fmt == "csv":
            write_csv(frame, handle, header)
        elif fmt == "json":
            json.dump({"header": header, "rows": frame.to_dicts()}, handle, indent=2)
            handle.write("\n")
        else:
            raise ValueError(f"Unknown output format {fmt!r}.")
    if path not in (None, "-"):
        logger.info("Wrote %d rows to %s", frame.height, path)


def write_csv(
    frame: pl.DataFrame, handle: TextIO, header: Mapping[str, object]
) -> None:
    """CSV body preceded by the header comment."""
    handle.write(header_line(header))
    handle.write(frame.write_csv())


def read_table(path: str | Path) -> tuple[dict[str, str], pl.DataFrame]:
    """Read a CSV result file back into its header fields and table."""
    with open(path) as handle:
        first = handle.readline()
    header: dict[str, str] = {}
    if first.startswith(HEADER_PREFIX):
        for item in first[len(HEADER_PREFIX) :].split():
            key, _, value = item.partition("=")
            header[key] = value
    return header, pl.read_csv(path, comment_prefix="#")
