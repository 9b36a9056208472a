import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hiergen.config import ARCHITECTURES, toy_model_config  # noqa: E402
from hiergen.data import QGInstance  # noqa: E402


def toy_instance() -> QGInstance:
    """Two sentences (answer in the first), a three-token question, vocabulary of 12."""
    return QGInstance(
        sentences=[[2, 5, 6, 7, 3], [2, 8, 9, 3]],
        question=[10, 11, 5],
        bio_tags=[[0, 1, 2, 0, 0], [0, 0, 0, 0]],
        sentence_has_answer=[True, False],
        answer_span=(0, 1, 2),
        answer=[5, 6],
        id="toy",
        paragraph_id="p0",
    )


@pytest.fixture
def toy():
    return toy_instance()


@pytest.fixture(params=ARCHITECTURES)
def arch(request):
    return request.param


@pytest.fixture
def fixtures_dir():
    return Path(__file__).parent / "fixtures"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """Expose the call-phase report as ``item.rep_call`` for fixtures that summarise outcomes."""
    outcome = yield
    if call.when == "call":
        item.rep_call = outcome.get_result()
