"""Static PNG panel rendering for grid stacks.

One RGBA PNG, one panel per layer in row-major order (4 columns like the
stock time-series figures), values mapped linearly from zlim into a
256-entry terrain-like ramp, missing cells transparent, captions drawn
with a built-in 5x7 bitmap font.  Output is byte-stable for fixed inputs.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from satstack.errors import InvalidBoundsError
from satstack.grid import GridStack

PANEL_COLUMNS = 4
CAPTION_HEIGHT = 11
PANEL_PAD = 2

# green -> yellow -> brown -> white control points
_TERRAIN_STOPS = (
    (0.0, (34, 139, 34)),
    (1.0 / 3.0, (240, 230, 80)),
    (2.0 / 3.0, (139, 90, 43)),
    (1.0, (255, 255, 255)),
)


def terrain_ramp(n: int = 256) -> np.ndarray:
    """(n, 4) uint8 RGBA ramp interpolated between the terrain stops."""
    out = np.zeros((n, 4), dtype=np.uint8)
    out[:, 3] = 255
    xs = np.linspace(0.0, 1.0, n)
    stops = _TERRAIN_STOPS
    for i, x in enumerate(xs):
        for (x0, c0), (x1, c1) in zip(stops, stops[1:]):
            if x0 <= x <= x1:
                f = 0.0 if x1 == x0 else (x - x0) / (x1 - x0)
                out[i, :3] = [round(a + f * (b - a)) for a, b in zip(c0, c1)]
                break
    return out


# 5x7 glyphs, one hex row byte per scanline (low 5 bits used)
_FONT = {
    "0": (0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E),
    "1": (0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E),
    "2": (0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F),
    "3": (0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E),
    "4": (0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02),
    "5": (0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E),
    "6": (0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E),
    "7": (0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08),
    "8": (0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E),
    "9": (0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C),
    "A": (0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11),
    "B": (0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E),
    "C": (0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E),
    "D": (0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C),
    "E": (0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F),
    "F": (0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10),
    "G": (0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F),
    "H": (0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11),
    "I": (0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E),
    "J": (0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C),
    "K": (0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11),
    "L": (0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F),
    "M": (0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11),
    "N": (0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11),
    "O": (0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E),
    "P": (0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10),
    "Q": (0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D),
    "R": (0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11),
    "S": (0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E),
    "T": (0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04),
    "U": (0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E),
    "V": (0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04),
    "W": (0x11, 0x11, 0x11, 0x15, 0x15, 0x1B, 0x11),
    "X": (0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11),
    "Y": (0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04),
    "Z": (0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F),
    "_": (0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F),
    "-": (0x00, 0x00, 0x00, 0x0E, 0x00, 0x00, 0x00),
    ".": (0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C),
    " ": (0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00),
}


def _draw_text(canvas: np.ndarray, row: int, col: int, text: str):
    for ch in text.upper():
        glyph = _FONT.get(ch, _FONT[" "])
        for r, bits in enumerate(glyph):
            for c in range(5):
                if bits & (1 << (4 - c)):
                    rr, cc = row + r, col + c
                    if 0 <= rr < canvas.shape[0] and 0 <= cc < canvas.shape[1]:
                        canvas[rr, cc] = (0, 0, 0, 255)
        col += 6


def write_png(path: str, rgba: np.ndarray) -> None:
    """Write an (h, w, 4) uint8 array as an 8-bit RGBA PNG, no interlacing."""
    if rgba.ndim != 3 or rgba.shape[2] != 4 or rgba.dtype != np.uint8:
        raise InvalidBoundsError("write_png expects an (h, w, 4) uint8 array")
    h, w = rgba.shape[:2]
    raw = b"".join(b"\x00" + rgba[r].tobytes() for r in range(h))

    def chunk(tag: bytes, payload: bytes) -> bytes:
        return (
            struct.pack(">I", len(payload))
            + tag
            + payload
            + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
        )

    png = b"\x89PNG\r\n\x1a\n"
    png += chunk(b"IHDR", struct.pack(">IIBBBBB", w, h, 8, 6, 0, 0, 0))
    png += chunk(b"IDAT", zlib.compress(raw, 6))
    png += chunk(b"IEND", b"")
    with open(path, "wb") as fh:
        fh.write(png)


def render_panels(
    stack: GridStack,
    zlim: tuple[float, float],
    out: str,
    palette: np.ndarray | None = None,
) -> str:
    """Render one captioned panel per layer into a single RGBA PNG."""
    if len(stack) == 0:
        raise InvalidBoundsError("cannot render an empty stack")
    lo, hi = zlim
    if not lo < hi:
        raise InvalidBoundsError("zlim must have lo < hi")
    ramp = palette if palette is not None else terrain_ramp()

    n = len(stack)
    ncols = min(PANEL_COLUMNS, n)
    nrows = -(-n // ncols)
    ph = stack.georef.n_rows
    pw = stack.georef.n_cols
    cell_h = ph + CAPTION_HEIGHT + PANEL_PAD
    cell_w = max(pw, 6 * max(len(lbl) for lbl in stack.labels)) + PANEL_PAD
    canvas = np.zeros((nrows * cell_h + PANEL_PAD, ncols * cell_w + PANEL_PAD, 4), np.uint8)

    for i, (layer, _date, label) in enumerate(stack):
        top = PANEL_PAD + (i // ncols) * cell_h
        left = PANEL_PAD + (i % ncols) * cell_w
        _draw_text(canvas, top + 2, left, label)
        vals = layer.values
        finite = np.isfinite(vals)
        scaled = np.zeros(vals.shape, dtype=np.int64)
        span = hi - lo
        scaled[finite] = np.clip(
            ((vals[finite] - lo) / span * (len(ramp) - 1)).round().astype(np.int64),
            0,
            len(ramp) - 1,
        )
        tile = np.zeros((ph, pw, 4), dtype=np.uint8)
        tile[finite] = ramp[scaled[finite]]
        canvas[
            top + CAPTION_HEIGHT : top + CAPTION_HEIGHT + ph, left : left + pw
        ] = tile
    write_png(out, canvas)
    return out
