"""Software twin of a wearable respiratory motion sensor.

The package models the whole round trip: FSR/divider/ADC electronics and
battery (:mod:`respsim.sensor`), the firmware sampling schedule and
batching (:mod:`respsim.firmware`), byte-exact telemetry framing
(:mod:`respsim.protocol`), the host pipeline that recovers respiration
rate, motion artifacts and battery status (:mod:`respsim.pipeline`), an
energy/battery-life audit (:mod:`respsim.power`), and a CLI harness
(:mod:`respsim.cli`).
"""

from .sensor import (
    AccelSample,
    AdcConfig,
    BatteryState,
    DividerConfig,
    ForceSample,
    FsrModel,
    OcvCurve,
    ParameterError,
    SenseRangeError,
    adc_quantize,
    battery_sense_voltage,
    battery_voltage,
    divider_voltage,
    fsr_resistance,
    generate_accel,
    generate_breathing,
)
from .protocol import (
    FrameKind,
    ProtocolError,
    StreamSplitter,
    TelemetryFrame,
    decode,
    encode,
    split_stream,
)
from .firmware import FirmwareConfig, FirmwareEmulator, InvalidConfigError
from .power import EnergyReport, PowerProfile, PRESETS, accumulate, battery_life_hours, drain
from .pipeline import (
    analyze_session,
    battery_percent,
    detect_breaths,
    detect_motion_artifacts,
    estimate_rate,
    reconstruct_force,
)
from .config import SessionConfig, from_dict, load_config
from .session import run_session

__version__ = "0.1.0"

__all__ = [
    "AccelSample", "AdcConfig", "BatteryState", "DividerConfig", "EnergyReport",
    "FirmwareConfig", "FirmwareEmulator", "ForceSample", "FrameKind", "FsrModel",
    "InvalidConfigError", "OcvCurve", "ParameterError", "PowerProfile", "PRESETS",
    "ProtocolError", "SenseRangeError", "SessionConfig", "StreamSplitter",
    "TelemetryFrame", "accumulate", "adc_quantize", "analyze_session",
    "battery_life_hours", "battery_percent", "battery_sense_voltage",
    "battery_voltage", "decode", "detect_breaths", "detect_motion_artifacts",
    "divider_voltage", "drain", "encode", "estimate_rate", "from_dict",
    "fsr_resistance", "generate_accel", "generate_breathing", "load_config",
    "reconstruct_force", "run_session", "split_stream",
]
