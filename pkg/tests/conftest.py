#!/usr/bin/env python
# -*- coding: utf-8 -*-
import sys
from pathlib import Path

import pytest

# Add project root to sys.path to allow absolute imports
project_root = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(project_root))

from src.core.storage_manager import load_settings
from src.core.vehicle_dynamics import load_vehicle_params
from src.utils.resource_path import get_resource_path


@pytest.fixture(autouse=True)
def quiet_env(monkeypatch):
    """Progress bars off and no stray config override leaking in from the shell."""
    monkeypatch.setenv("HLAS_PROGRESS", "0")
    monkeypatch.delenv("HLAS_CONFIG", raising=False)
    monkeypatch.delenv("HLAS_N_WORKERS", raising=False)


@pytest.fixture(scope="session")
def vehicle():
    return load_vehicle_params(get_resource_path("config/vehicle_shuttle.yaml"))


@pytest.fixture
def settings():
    return load_settings()
