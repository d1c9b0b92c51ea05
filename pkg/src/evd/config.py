"""Plain-text key=value configuration files.

Format: one ``key=value`` per line, ``#`` starts a comment, blank lines are
ignored. Values stay strings; the CLI resolves types. Flag values always win
over file values, which win over defaults.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError


def load_config(path) -> dict[str, str]:
    values: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
        values[key.strip()] = value.strip()
    return values


def echo_config(out_path, values: dict) -> Path:
    """Write the resolved configuration next to a primary output file."""
    out_path = Path(out_path)
    echo_path = out_path.with_name(out_path.name + ".config.txt")
    lines = [f"{key}={values[key]}" for key in sorted(values)]
    echo_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return echo_path
