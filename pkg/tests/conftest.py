"""Session fixtures: the toy dataset is built once and shared."""

import pytest

from vlg.datagen.dataset import Dataset, DatasetConfig, build_dataset

TOY = DatasetConfig(train=2000, val=500, test_per_axis=200, seed=7)


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    build_dataset(TOY, root)
    return Dataset(root)


SMALL = DatasetConfig(train=8, val=4, test_per_axis=6, seed=5)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("small")
    build_dataset(SMALL, root)
    return Dataset(root)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n:2d} {name}: {detail}")
