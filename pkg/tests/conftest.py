import pytest

from phasemac.data import data_root

_ACCEPTANCE = []


def mnist_root():
    root = data_root()
    for cand in (root, root / "mnist"):
        if (cand / "train-images-idx3-ubyte").exists() or (cand / "train-images-idx3-ubyte.gz").exists():
            return cand
    return None


@pytest.fixture
def mnist_dir():
    root = mnist_root()
    if root is None:
        pytest.skip("MNIST IDX files not found (set PHASEMAC_DATA)")
    return root


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if item.get_closest_marker("acceptance") is None:
        return
    doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
    if rep.when == "call" or (rep.when == "setup" and rep.skipped):
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        _ACCEPTANCE.append((status, doc))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for status, doc in _ACCEPTANCE:
        terminalreporter.write_line(f"{status}  {doc}")
