"""
Tests environment-driven settings
"""

import os

import pytest

from config import thread_count
from error import ConfigurationError


@pytest.mark.parametrize("raw, expected", [("3", 3), ("1", 1), (" 8 ", 8), ('"4"', 4)])
def test_thread_count_reads_environment(monkeypatch, raw, expected):
    """WEAKMEAS_THREADS caps the worker pool"""
    monkeypatch.setenv("WEAKMEAS_THREADS", raw)

    assert thread_count() == expected


@pytest.mark.parametrize("raw", [None, "", "  "])
def test_thread_count_defaults_to_cpu_count(monkeypatch, raw):
    """An absent or blank setting means one thread per CPU"""
    if raw is None:
        monkeypatch.delenv("WEAKMEAS_THREADS", raising=False)
    else:
        monkeypatch.setenv("WEAKMEAS_THREADS", raw)

    assert thread_count() == (os.cpu_count() or 1)


@pytest.mark.parametrize("raw", ["0", "-2", "many", "2.5"])
def test_thread_count_rejects_bad_values(monkeypatch, raw):
    """Anything but a positive integer is a configuration error"""
    monkeypatch.setenv("WEAKMEAS_THREADS", raw)

    with pytest.raises(ConfigurationError) as info:
        thread_count()

    assert info.value.offending_keys == ("WEAKMEAS_THREADS",)
