"""Shared fixtures and the acceptance reporting helper."""

import time
from contextlib import contextmanager
from pathlib import Path

import pytest

from paretogp.data import DatasetNotFound, resolve_dataset


@contextmanager
def criterion(name):
    """Print one pass/fail line per acceptance criterion (visible with -s)."""
    started = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"[FAIL] {name} ({time.perf_counter() - started:.1f}s)", flush=True)
        raise
    print(f"[PASS] {name} ({time.perf_counter() - started:.1f}s)", flush=True)


def default_data_dir():
    here = Path(__file__).resolve().parent.parent / "datasets"
    return here


@pytest.fixture(scope="session")
def airfoil_raw():
    """The UCI airfoil self-noise table from the dataset registry.

    Unavailable in offline environments; scripts/fetch_airfoil.py populates
    the registry on a machine with internet access.
    """
    for data_dir in (None, default_data_dir()):
        try:
            return resolve_dataset("airfoil", data_dir=data_dir)
        except DatasetNotFound:
            continue
    pytest.skip(
        "airfoil dataset not present in the registry (datasets/airfoil.csv); "
        "run scripts/fetch_airfoil.py on a connected machine to enable the "
        "desk-scale acceptance criteria"
    )
