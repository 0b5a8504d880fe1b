import pytest

from seqrec.dataset import SplitSpec, preprocess, split_chronological
from seqrec.synth import SynthSpec, generate


def pytest_addoption(parser):
    parser.addoption("--with-dataset", default=None, metavar="PATH",
                     help="directory holding the published Dota-350k corpus files")


@pytest.fixture
def dataset_path(request):
    path = request.config.getoption("--with-dataset")
    if path is None:
        pytest.skip("needs --with-dataset PATH")
    return path


@pytest.fixture(scope="session")
def small_synth():
    d, oracle = generate(SynthSpec(n_matches=80, n_items=12, n_heroes=2, seed=3))
    return d, oracle


@pytest.fixture(scope="session")
def small_splits(small_synth):
    return split_chronological(preprocess(small_synth[0]), SplitSpec(0.8, 0.1, 0.1))


# criterion number -> (status, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    # a criterion whose test failed before recording still gets a line
    name = report.nodeid.split("::")[-1]
    if report.when == "call" and name.startswith("test_criterion_") and report.failed:
        n = int(name.split("_")[2])
        ACCEPTANCE.setdefault(n, ("FAIL", "assertion failed before the measurement was recorded"))
    if report.skipped and name.startswith("test_criterion_"):
        ACCEPTANCE.setdefault(int(name.split("_")[2]), ("SKIP", "needs --with-dataset PATH"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {detail}")
