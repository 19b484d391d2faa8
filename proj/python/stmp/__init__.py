"""Joint activity detection and channel estimation for grant-free access."""

from ._core import (
    BridgeError,
    DimensionMismatch,
    Diverged,
    Error,
    FormatError,
    InvalidConfig,
    PilotOperator,
    bridge,
    brute_force_mmse,
    check_config,
    denoise,
    read_channel_dump,
    read_pilot_file,
    run_trial,
    score,
    simulate,
    write_channel_dump,
    write_pilot_file,
)

__all__ = [
    "BridgeError", "DimensionMismatch", "Diverged", "Error", "FormatError", "InvalidConfig",
    "PilotOperator", "bridge", "brute_force_mmse", "check_config", "denoise", "read_channel_dump",
    "read_pilot_file", "run_trial", "score", "simulate", "write_channel_dump", "write_pilot_file",
]
