import pytest

from watertrav.dataset import load_manifest
from watertrav.fixture import build_fixture_dataset


@pytest.fixture(scope="session")
def fixture_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("dataset") / "ds"
    build_fixture_dataset(root)
    return root


@pytest.fixture(scope="session")
def manifest(fixture_root):
    return load_manifest(fixture_root)
