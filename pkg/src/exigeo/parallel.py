import os
from concurrent.futures import ThreadPoolExecutor


def worker_count() -> int:
    """Worker cap from EXIGEO_THREADS (default 1, i.e. sequential)."""
    raw = os.environ.get("EXIGEO_THREADS", "1")
    try:
        k = int(raw)
    except ValueError:
        return 1
    return max(1, k)


def pmap(func, items):
    """Order-preserving map, threaded when EXIGEO_THREADS > 1."""
    items = list(items)
    k = min(worker_count(), len(items))
    if k <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=k) as ex:
        return list(ex.map(func, items))
