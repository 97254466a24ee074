import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from corpusfix import build_fixture_corpus  # noqa: E402

from lfag.providers import ProviderSet  # noqa: E402


@pytest.fixture()
def providers() -> ProviderSet:
    return ProviderSet.fallback()


@pytest.fixture(scope="session")
def fixture_corpus(tmp_path_factory) -> dict:
    root = tmp_path_factory.mktemp("corpus")
    return build_fixture_corpus(root)
