import pytest

from reltrans.harness import corpus


@pytest.fixture(scope="session")
def entries():
    return {e.name: e for e in corpus.corpus()}
