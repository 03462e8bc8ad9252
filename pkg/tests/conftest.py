"""Shared fixtures and the acceptance summary printed after the run."""

from __future__ import annotations

import pytest

from evsiting.costmodel import ChargerSpec
from evsiting.geo import GeoPoint
from evsiting.ingest import (
    SYNTHETIC_PARAMS, CandidateSite, Category, Instance, ResidentialPoint, params_from_mapping,
)

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        word = "PASS" if passed is True else ("SKIP" if passed is None else "FAIL")
        terminalreporter.write_line(f"criterion {n}: {word} - {detail}")


def make_params(**overrides):
    raw = dict(SYNTHETIC_PARAMS)
    raw.update(overrides)
    return params_from_mapping(raw)


def tiny_instance(vehicles=1, budget=1.0e11, d_max=10.0, land=14600.0, **overrides) -> Instance:
    """One site with one colocated RP."""
    site = CandidateSite("s1", GeoPoint(10.776, 106.7), land, Category.GAS_STATION)
    rp = ResidentialPoint("r1", GeoPoint(10.776, 106.7), vehicles)
    return Instance.build([site], [rp], make_params(budget=budget, d_max=d_max, **overrides))


@pytest.fixture
def params():
    return make_params()


@pytest.fixture
def specs():
    spec2 = ChargerSpec("L2", install_cost=14600.0, maintenance_cost=5.0, energy_per_day=50.0, power=7.4)
    spec3 = ChargerSpec("L3", install_cost=29200.0, maintenance_cost=20.0, energy_per_day=200.0, power=60.0)
    return spec2, spec3
