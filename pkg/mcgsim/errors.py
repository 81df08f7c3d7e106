"""
Exception hierarchy for the simulator and the exit-code mapping used by the CLI.

Exit codes:
  0 = ok true
  1 = invalid config, infeasible action catalog or other local error
  2 = runtime/numerical error or I/O failure
"""


class SimulatorError(Exception):
    """Base class for every error raised on purpose by mcgsim."""

    exit_code = 2


class ConfigError(SimulatorError):
    """Scenario configuration could not be parsed or violates an invariant."""

    exit_code = 1


class FeasibilityError(SimulatorError):
    """No feasible grant configuration exists, or a schedule violates its constraints."""

    exit_code = 1


class PreconditionError(SimulatorError, ValueError):
    """An operation was called outside its precondition."""

    exit_code = 1


class NumericalError(SimulatorError):
    """Training produced a non-finite loss, gradient or parameter."""

    exit_code = 2


def exit_code_for(err: BaseException) -> int:
    """Map an exception to the process exit code."""
    if isinstance(err, SimulatorError):
        return err.exit_code
    if isinstance(err, (ValueError, TypeError, KeyError)):
        return 1
    return 2
