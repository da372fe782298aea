"""Shared helpers: seed-stream derivation and reproducible BLAS reductions."""
from __future__ import annotations

from contextlib import contextmanager

import numpy as np
from threadpoolctl import threadpool_limits


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Derive an independent generator for a named sub-stream of ``seed``.

    The stream identity is the tuple of integers, so adding streams never
    perturbs existing ones and results do not depend on call order.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), *map(int, stream))))


@contextmanager
def single_thread_blas():
    """Pin BLAS pools to one thread for the enclosed block.

    Multi-threaded GEMM reductions are not bitwise reproducible across
    thread counts; every sign- or argmin-sensitive matrix product in this
    package runs under this guard so reruns are byte-identical regardless
    of the host's thread configuration.
    """
    with threadpool_limits(limits=1):
        yield
