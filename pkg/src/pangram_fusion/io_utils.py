"""Atomic artifact writing: temp file in the target directory + rename,
so a crashed run never leaves a truncated file under the declared name."""

from __future__ import annotations

import os
from contextlib import contextmanager


@contextmanager
def atomic_path(path):
    path = os.fspath(path)
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        yield tmp
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    with atomic_path(path) as tmp:
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(text)
