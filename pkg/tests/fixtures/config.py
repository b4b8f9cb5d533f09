#
# SPDX-FileCopyrightText: Copyright (c) provide.io llc. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#


from collections.abc import Callable
from pathlib import Path
from typing import Any

import pytest

ConfigWriter = Callable[..., Path]


def _toml_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str | Path):
        return f'"{value}"'
    if isinstance(value, list | tuple):
        return "[" + ", ".join(_toml_value(item) for item in value) + "]"
    return repr(value)


def render_toml(document: dict[str, dict[str, Any]]) -> str:
    """Small TOML writer for the flat two-level documents used in tests."""
    lines: list[str] = []
    for section, table in document.items():
        nested = {key: value for key, value in table.items() if isinstance(value, dict)}
        lines.append(f"[{section}]")
        lines.extend(f"{key} = {_toml_value(value)}" for key, value in table.items() if key not in nested)
        for name, inner in nested.items():
            lines.append(f"[{section}.{name}]")
            lines.extend(f"{key} = {_toml_value(value)}" for key, value in inner.items())
        lines.append("")
    return "\n".join(lines)


@pytest.fixture
def ground_document() -> dict[str, dict[str, Any]]:
    """Smallest useful run: D = 1 ground state, closed-form answer."""
    return {
        "model": {"L": 5.0, "c": 1.0, "mu": 1.0, "U0": 0.5, "eps": 0.1},
        "ansatz": {"D": 1, "seed": 3},
        "solver": {"max_iters": 200, "grad_tol": 1e-6},
        "experiment": {"name": "ground"},
    }


@pytest.fixture
def write_config(tmp_path: Path) -> ConfigWriter:
    """Writes a TOML document into ``tmp_path`` and returns its path."""

    def write(document: dict[str, dict[str, Any]], name: str = "run.toml") -> Path:
        path = tmp_path / name
        path.write_text(render_toml(document), encoding="utf-8")
        return path

    return write


# 🐝📁🔚
