"""Shared builders for test fixtures."""

import numpy as np

from mgi.telemetry import Channel, Series


def make_series(channel, values, start=0.0, step=600.0):
    return Series(channel, start, step, np.asarray(values, dtype=float))


def voltage_series(values, start=0.0, step=600.0):
    return make_series(Channel.DC_VOLTAGE, values, start, step)


def load_series(values, start=0.0, step=600.0):
    return make_series(Channel.LOAD_POWER, values, start, step)


def daily_signal(days, step=600.0, start=0.0, fn=None):
    """Sample fn(hour_of_day) over whole days on the grid."""
    n = int(days * 86400 / step)
    t = start + step * np.arange(n)
    hours = (t % 86400.0) / 3600.0
    return t, hours, n
