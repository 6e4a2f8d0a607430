"""Stack-machine interpreter over lowered modules."""

from .interp import (StepOutcome, instantiate, invoke_isolated, run,
                     run_unchecked, step)
from .state import (Frame, HostFunc, HostTrap, PrimitiveTable, StackLimits,
                    Status, Trap, TrapKind, VmState)

__all__ = [
    "Frame", "HostFunc", "HostTrap", "PrimitiveTable", "StackLimits",
    "Status", "Trap", "TrapKind", "VmState",
    "StepOutcome", "instantiate", "invoke_isolated", "run", "run_unchecked",
    "step",
]
