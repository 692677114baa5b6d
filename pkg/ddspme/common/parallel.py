import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from tqdm import tqdm

from ddspme.config import env_threads

LOGGER = logging.getLogger(__name__)

T = TypeVar('T')
R = TypeVar('R')

_threads: Optional[int] = None


def set_threads(threads: Optional[int]):
    global _threads
    _threads = None if threads is None else max(1, int(threads))


def get_threads(threads: Optional[int] = None) -> int:
    if threads is not None:
        return max(1, int(threads))
    if _threads is not None:
        return _threads
    return env_threads() or 1


def run_jobs(fn: Callable[[T], R], jobs: Iterable[T], threads: Optional[int] = None, desc: Optional[str] = None,
             show_progress: bool = True) -> List[R]:
    """
    Ordered map over jobs; results come back in job order whatever the worker count.

    :param fn: job callable
    :param jobs:
    :param threads: worker count, falls back to set_threads() then DDSPME_THREADS
    :param desc: progress bar label, no bar when None
    :param show_progress:
    :return: list of results aligned with jobs
    """
    jobs = list(jobs)
    workers = min(get_threads(threads), max(1, len(jobs)))
    disable = desc is None or not show_progress
    LOGGER.debug('running %s jobs on %s workers', len(jobs), workers)
    if workers == 1:
        return [fn(job) for job in tqdm(jobs, desc=desc, total=len(jobs), dynamic_ncols=True, miniters=0,
                                        disable=disable)]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(tqdm(executor.map(fn, jobs), desc=desc, total=len(jobs), dynamic_ncols=True, miniters=0,
                         disable=disable))
