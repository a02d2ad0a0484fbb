"""Worker pools for the independent local problems of a Schwarz sweep."""

import contextlib
import logging
import os

from multiprocessing.pool import ThreadPool
from typing import Callable, Iterator, List, Optional, Sequence, TypeVar

from inpaint.schwarz.core import InvalidInput

log = logging.getLogger(__name__)

THREADS_ENV = 'SCHWARZ_INPAINT_THREADS'

T = TypeVar('T')
R = TypeVar('R')


def resolve_threads(requested: Optional[int] = None) -> int:
    """
    The number of workers to use: :code:`requested` if given, else the
    :code:`SCHWARZ_INPAINT_THREADS` environment variable, else the number of
    CPUs.

    Raises
    ------
    InvalidInput
        If the count isn't a positive integer
    """
    if requested is None:
        setting = os.environ.get(THREADS_ENV)
        if setting:
            try:
                requested = int(setting)
            except ValueError as e:
                raise InvalidInput(f"{THREADS_ENV} must be an integer, got "
                                   f"'{setting}'") from e
        else:
            requested = os.cpu_count() or 1

    if requested < 1:
        raise InvalidInput(f"The thread count must be at least 1, got "
                           f"{requested}")
    return requested


@contextlib.contextmanager
def worker_pool(threads: int) -> Iterator[Optional[ThreadPool]]:
    """
    A thread pool for :func:`map_blocks`, or :code:`None` when a single
    thread is requested. Threads suffice since the numpy kernels doing the
    work release the GIL.
    """
    if threads <= 1:
        yield None
        return

    log.debug('Starting a pool of %d worker threads', threads)
    with ThreadPool(threads) as pool:
        yield pool


def map_blocks(func: Callable[[T], R], chunks: Sequence[T],
               pool: Optional[ThreadPool] = None) -> List[R]:
    """
    Applies :code:`func` to every chunk of subdomains, on the pool's workers
    if there is one. Results keep the order of :code:`chunks`.
    """
    if pool is None or len(chunks) < 2:
        return [func(chunk) for chunk in chunks]
    return pool.map(func, chunks)
