"""Plain-text PGM (P2) and PPM (P3) writers."""

from __future__ import annotations

import numpy as np


def _rows_to_text(flat: np.ndarray, per_line: int = 16) -> str:
    parts = []
    for start in range(0, flat.size, per_line):
        parts.append(" ".join(str(int(v)) for v in flat[start : start + per_line]))
    return "\n".join(parts)


def write_pgm(path, gray: np.ndarray, comment: str = "") -> None:
    """Write a (H, W) uint8 array as an ASCII graymap."""
    gray = np.asarray(gray)
    if gray.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {gray.shape}")
    height, width = gray.shape
    lines = ["P2"]
    if comment:
        lines.append(f"# {comment}")
    lines.append(f"{width} {height}")
    lines.append("255")
    lines.append(_rows_to_text(gray.astype(np.uint8).ravel()))
    with open(path, "w") as handle:
        handle.write("\n".join(lines) + "\n")


def write_ppm(path, rgb: np.ndarray, comment: str = "") -> None:
    """Write a (H, W, 3) uint8 array as an ASCII pixmap."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected a (H, W, 3) array, got shape {rgb.shape}")
    height, width = rgb.shape[:2]
    lines = ["P3"]
    if comment:
        lines.append(f"# {comment}")
    lines.append(f"{width} {height}")
    lines.append("255")
    lines.append(_rows_to_text(rgb.astype(np.uint8).ravel(), per_line=12))
    with open(path, "w") as handle:
        handle.write("\n".join(lines) + "\n")
