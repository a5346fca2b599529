import pytest

from centerstar import kernels


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # compile (or load from cache) every kernel up front so JIT time never
    # pollutes timed assertions
    kernels.warmup()
