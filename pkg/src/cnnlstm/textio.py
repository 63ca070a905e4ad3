"""Line-oriented text serialization shared by checkpoints and dataset caches.

Floats are written with 17 significant digits, which round-trips binary64
exactly; arrays are whitespace-separated values wrapped for readability.
"""

import numpy as np

from .errors import CheckpointFormatError

VALUES_PER_LINE = 8


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def fmt_vector(values) -> str:
    return " ".join(fmt_float(v) for v in np.asarray(values, dtype=np.float64).ravel())


def array_lines(arr: np.ndarray) -> list:
    flat = np.asarray(arr, dtype=np.float64).ravel()
    return [
        fmt_vector(flat[i : i + VALUES_PER_LINE])
        for i in range(0, flat.size, VALUES_PER_LINE)
    ]


class LineReader:
    """Sequential reader with line numbers for error messages."""

    def __init__(self, text: str, what: str):
        self.lines = text.splitlines()
        self.pos = 0
        self.what = what

    def error(self, message: str) -> CheckpointFormatError:
        return CheckpointFormatError(f"{self.what}, line {self.pos}: {message}")

    def eof(self) -> bool:
        return self.pos >= len(self.lines)

    def peek(self):
        return None if self.eof() else self.lines[self.pos]

    def next(self) -> str:
        if self.eof():
            raise CheckpointFormatError(f"{self.what}: unexpected end of file")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def read_floats(self, count: int) -> np.ndarray:
        """Consume whitespace-separated floats across lines until count is met."""
        out = np.empty(count, dtype=np.float64)
        filled = 0
        while filled < count:
            parts = self.next().split()
            if filled + len(parts) > count:
                raise self.error(f"expected {count} values, got more")
            for p in parts:
                try:
                    out[filled] = float(p)
                except ValueError:
                    raise self.error(f"unparseable value {p!r}") from None
                filled += 1
        return out

    def read_ints(self, count: int) -> np.ndarray:
        out = np.empty(count, dtype=np.int64)
        filled = 0
        while filled < count:
            parts = self.next().split()
            if filled + len(parts) > count:
                raise self.error(f"expected {count} values, got more")
            for p in parts:
                try:
                    out[filled] = int(p)
                except ValueError:
                    raise self.error(f"unparseable integer {p!r}") from None
                filled += 1
        return out


def parse_kv(line: str, reader: LineReader):
    if "=" not in line:
        raise reader.error(f"expected key=value, got {line!r}")
    key, _, value = line.partition("=")
    return key.strip(), value.strip()
