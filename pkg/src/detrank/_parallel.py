"""Worker-count resolution shared by zoo scoring and subset evaluation."""

from __future__ import annotations

import os

THREADS_ENV_VAR = "TRANSFER_RANK_THREADS"


def worker_count(num_tasks: int | None = None) -> int:
    """Parallelism cap: TRANSFER_RANK_THREADS if set, else logical cores.

    Raises:
        ValueError: the environment variable is set but not a positive
            integer.
    """
    raw = os.environ.get(THREADS_ENV_VAR)
    if raw is None:
        count = os.cpu_count() or 1
    else:
        try:
            count = int(raw)
        except ValueError as exc:
            raise ValueError(
                f"{THREADS_ENV_VAR} must be a positive integer, got {raw!r}"
            ) from exc
        if count < 1:
            raise ValueError(
                f"{THREADS_ENV_VAR} must be a positive integer, got {raw!r}"
            )
    if num_tasks is not None:
        count = min(count, num_tasks)
    return max(count, 1)
