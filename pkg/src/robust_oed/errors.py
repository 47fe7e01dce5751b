"""Exception hierarchy shared by all modules.

Every error carries an ``exit_code`` so the command-line front end can map
failures onto process exit statuses without inspecting messages.
"""


class OEDError(Exception):
    exit_code = 1


class InvalidConfigError(OEDError, ValueError):
    exit_code = 2


class ResonanceError(OEDError, ArithmeticError):
    """System matrix is singular at the requested frequency."""

    exit_code = 3

    def __init__(self, frequency, message=None):
        self.frequency = frequency
        super().__init__(message or f"system matrix singular at omega={frequency!r} rad/s")


class RankDeficiencyError(OEDError, ArithmeticError):
    exit_code = 3

    def __init__(self, rank, expected, message=None):
        self.rank = rank
        self.expected = expected
        super().__init__(
            message or f"FRF matrix has numerical rank {rank}, expected {expected}"
        )


class IllPosedError(OEDError, ArithmeticError):
    """Weighted information matrix is (numerically) singular."""

    exit_code = 3

    def __init__(self, rank=None, message=None, scenario=None):
        self.rank = rank
        self.scenario = scenario
        if message is None:
            message = "ill-posed inverse problem"
            if rank is not None:
                message += f" (numerical rank {rank})"
            if scenario is not None:
                message += f" in scenario {scenario}"
        super().__init__(message)


class InsufficientDataError(OEDError, ValueError):
    exit_code = 3


class InfeasibleError(OEDError, ValueError):
    exit_code = 2


class CombinatorialGuardError(OEDError, RuntimeError):
    exit_code = 4
