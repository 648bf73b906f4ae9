"""
Smoke test: every module imports and settings load from the environment.
"""
import importlib

import pytest

MODULES = ["config", "models", "expr", "lsh", "simplify", "optimizer", "data", "gp", "cli"]


@pytest.mark.parametrize("name", MODULES)
def test_module_imports(name):
    assert importlib.import_module(name) is not None


def test_default_settings():
    from config import Settings

    settings = Settings(_env_file=None)
    assert settings.app_name == "hashsimp"
    assert settings.threads == 1
    assert settings.out_dir == "results"


def test_settings_from_environment(monkeypatch):
    from config import Settings

    monkeypatch.setenv("HASHSIMP_THREADS", "4")
    monkeypatch.setenv("HASHSIMP_LOG_LEVEL", "debug")
    settings = Settings(_env_file=None)
    assert settings.threads == 4
    assert settings.log_level == "debug"


def test_invalid_thread_count(monkeypatch):
    from pydantic import ValidationError

    from config import Settings

    monkeypatch.setenv("HASHSIMP_THREADS", "0")
    with pytest.raises(ValidationError):
        Settings(_env_file=None)
