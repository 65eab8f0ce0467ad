import logging
import time
from functools import wraps

logger = logging.getLogger(__name__)


def timed(func):
    @wraps(func)
    def wrapper(*args, **kwargs):
        start = time.perf_counter()
        result = func(*args, **kwargs)
        end = time.perf_counter()
        logger.debug("%s took %.6fs", func.__name__, end - start)
        return result
    return wrapper


class Stopwatch:
    """
    Monotonic wall-clock timer for a block of work.

        with Stopwatch() as sw:
            solve(...)
        sw.elapsed  # seconds
    """

    def __init__(self):
        self.start = None
        self.elapsed = 0.0

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        return False
