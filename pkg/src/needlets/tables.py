"""Plain-text tables: a format-version line, a header, whitespace-separated rows."""

from __future__ import annotations

from pathlib import Path

FORMAT_VERSION = 1


def _cell(v) -> str:
    if hasattr(v, "item"):
        v = v.item()
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def write_table(path, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# format-version: {FORMAT_VERSION}\n")
        fh.write(" ".join(columns) + "\n")
        for row in rows:
            fh.write(" ".join(_cell(v) for v in row) + "\n")
    return path


def read_table(path) -> tuple[list[str], list[list[str]]]:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    body = [ln for ln in lines if not ln.startswith("#")]
    return body[0].split(), [ln.split() for ln in body[1:]]
