"""Deterministic parallel map over independent jobs."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor


def pmap(func, items, jobs: int = 1) -> list:
    """``[func(x) for x in items]``, optionally in ``jobs`` worker processes.

    Results come back in input order whatever the schedule.
    """
    items = list(items)
    if jobs is None or jobs <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=int(jobs)) as ex:
        return list(ex.map(func, items))
