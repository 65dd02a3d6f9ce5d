import hashlib
import logging
import os
import tempfile
from pathlib import Path
from typing import Callable, Union

LOGGER_NAME = "fusionbcs"


def get_logger() -> logging.Logger:
    """Return the package logger, attaching a stderr handler on first use."""
    logger = logging.getLogger(LOGGER_NAME)
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        logger.addHandler(handler)
        logger.setLevel(logging.WARNING)
    return logger


def set_verbosity(verbose: bool) -> None:
    get_logger().setLevel(logging.DEBUG if verbose else logging.WARNING)


def resolve_path(target: Union[str, Path]) -> Path:
    """Resolve and validate a file or folder path.

    Relative paths are taken against the current working directory.
    Raises `FileNotFoundError` if the path does not exist.

    Args:
        target: string or Path to resolve.

    Returns:
        Resolved absolute Path object.
    """
    path = Path(target)

    if not path.is_absolute():
        path = (Path.cwd() / path).resolve()

    if not path.exists():
        raise FileNotFoundError(f"Path not found: {path}")

    return path


def atomic_write(path: Union[str, Path], writer: Callable[[Path], None]) -> Path:
    """Write `path` via a temp file in the same directory and rename it.

    `writer` receives the temporary path and must fully write it. The final
    file is either complete or absent.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    temp_fd, temp_name = tempfile.mkstemp(suffix=path.suffix, prefix=f".{path.stem}_", dir=path.parent)
    os.close(temp_fd)
    try:
        writer(Path(temp_name))
        os.replace(temp_name, path)
    finally:
        if os.path.exists(temp_name):
            try:
                os.remove(temp_name)
            except OSError:
                pass
    return path


def atomic_write_text(path: Union[str, Path], text: str) -> Path:
    def _write(tmp: Path) -> None:
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)

    return atomic_write(path, _write)


def derive_seed(master_seed: int, *keys: object) -> int:
    """Derive a 64-bit seed from the master seed and a tuple of keys.

    Replicate r, chain c uses derive_seed(master, r, c). The hash input is
    the colon-joined string form of every component, so the mapping is
    stable across processes and platforms.
    """
    text = ":".join(str(k) for k in (int(master_seed),) + keys)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")
