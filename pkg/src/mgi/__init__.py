"""mgi: telemetry analytics and energy-balance simulation for islanded
PV-wind-battery microgrids."""

__version__ = "0.1.0"

from .telemetry import Channel, Series, TelemetryFrame  # noqa: F401
