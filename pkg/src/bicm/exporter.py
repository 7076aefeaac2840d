"""CSV export of curves, Monte Carlo checks and allocations."""

import asyncio
import csv
import io
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import aiofiles
import click
import numpy as np
from rich.console import Console

console = Console(stderr=True)

SIGNIFICANT_DIGITS = 12


def format_value(value) -> str:
    """Render numbers with 12 significant digits; pass other values through."""
    if isinstance(value, bool):
        return "pass" if value else "fail"
    if isinstance(value, (int, float, np.integer, np.floating)):
        return f"{float(value):.{SIGNIFICANT_DIGITS}g}"
    return str(value)


def render_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """CSV text with a mandatory header row."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buffer.getvalue()


class CsvExporter:
    """Writes CSV tables to files, or to stdout when no path is given."""

    def __init__(self, verbose: bool = False):
        self.verbose = verbose

    def export(
        self, header: Sequence[str], rows: Iterable[Sequence], output: Optional[Path]
    ) -> None:
        """Write one table (synchronous wrapper)."""
        text = render_csv(header, rows)
        if output is None:
            click.echo(text, nl=False)
            return
        asyncio.run(self._write_async(Path(output), text))

    def export_many(self, tables: List[tuple[Sequence[str], List[Sequence], Optional[Path]]]) -> None:
        """Write several tables; files are written concurrently."""
        to_stdout = [(h, r) for h, r, path in tables if path is None]
        for header, rows in to_stdout:
            click.echo(render_csv(header, rows), nl=False)
        files = [(Path(path), render_csv(h, r)) for h, r, path in tables if path is not None]
        if files:
            asyncio.run(self._write_all_async(files))

    async def _write_all_async(self, files: List[tuple[Path, str]]) -> None:
        await asyncio.gather(*(self._write_async(path, text) for path, text in files))

    async def _write_async(self, path: Path, text: str) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        async with aiofiles.open(path, "w", encoding="utf-8") as f:
            await f.write(text)
        if self.verbose:
            console.print(f"[green]Wrote {path}[/green]")


def read_csv(text: str) -> tuple[List[str], List[List[str]]]:
    """Header and rows of a CSV produced by ``render_csv``."""
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows:
        return [], []
    return rows[0], rows[1:]
