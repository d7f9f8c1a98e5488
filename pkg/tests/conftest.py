import numpy as np
import pytest

from evossl.data import make_split, resample_labeled
from evossl.synthetic import gaussian_blobs


@pytest.fixture(scope="session")
def blobs():
    return gaussian_blobs(n=400, d=6, informative=3, separation=2.0, seed=3, name="blobs")


@pytest.fixture(scope="session")
def blob_split(blobs):
    plan = make_split(blobs, 0.05, 0)
    return plan, resample_labeled(plan, blobs, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Records the verdict line for one acceptance criterion."""
    state = {}

    def verdict(number, ok, detail=""):
        state["n"] = number
        ACCEPTANCE[number] = ("PASS" if ok else "FAIL", detail)
        print(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    yield verdict
    if not state:
        num = int(request.node.name.split("_")[1])
        ACCEPTANCE.setdefault(num, ("FAIL", "raised before reaching a verdict"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:>2}: {status}  {detail}")
