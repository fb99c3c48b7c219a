"""Small shared I/O helpers: atomic file writes and lossless float formatting."""

import os
import tempfile


def fmt_float(x) -> str:
    """Shortest decimal string that round-trips back to the same float64."""
    return repr(float(x))


def atomic_write_text(path: str, text: str) -> None:
    """Write text to `path` via a temp file in the same directory, then rename.

    Readers never observe a partially written file.
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
