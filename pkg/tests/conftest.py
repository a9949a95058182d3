import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
ML100K = os.environ.get("RAMGNN_ML100K", os.path.join(ROOT, "data", "ml-100k"))

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = {}


def record_acceptance(number, passed, detail):
    ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])


@pytest.fixture(scope="session")
def ml100k_path():
    if not os.path.exists(os.path.join(ML100K, "u.data")):
        pytest.skip(f"ML-100K not found at {ML100K} (run scripts/fetch_ml100k.py)")
    return ML100K


@pytest.fixture(scope="session")
def ml100k(ml100k_path):
    from ramgnn.ingest import load_movielens
    return load_movielens(ml100k_path)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
