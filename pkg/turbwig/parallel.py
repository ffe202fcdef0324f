"""Deterministic chunked work queues.

Work items are split into fixed-size chunks whose boundaries depend only on
the chunk size, never on the number of workers, and results come back in
chunk order.
"""
from concurrent.futures import ThreadPoolExecutor
from typing import Callable
from typing import Iterable
from typing import Sequence
from typing import TypeVar

from more_itertools import chunked

Item = TypeVar("Item")
Result = TypeVar("Result")


def chunk_ranges(count: int, chunk_size: int) -> list[range]:
    chunks = chunked(range(count), chunk_size)
    return [range(chunk[0], chunk[-1] + 1) for chunk in chunks]


def map_chunks(
    function: Callable[[int, Sequence[Item]], Result],
    items: Iterable[Item],
    chunk_size: int,
    threads: int = 1,
) -> list[Result]:
    """Apply ``function(chunk_index, chunk)`` to every chunk, preserving order."""
    chunks = list(chunked(items, chunk_size))
    if threads <= 1 or len(chunks) <= 1:
        return [function(index, chunk) for index, chunk in enumerate(chunks)]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(function, range(len(chunks)), chunks))
