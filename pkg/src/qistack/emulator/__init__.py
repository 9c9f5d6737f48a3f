from qistack.emulator.simulator import (
    NoMeasurement,
    SimulatorError,
    TooManyQubits,
    simulate,
    statevector,
)

__all__ = ["simulate", "statevector", "SimulatorError", "NoMeasurement", "TooManyQubits"]
