"""Deterministic fan-out helper.

Results are collected in input order, so worker count never changes any
output; all randomness is derived per item before submission.
"""

from concurrent.futures import ThreadPoolExecutor


def parallel_map(fn, items, jobs: int = 1):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))
