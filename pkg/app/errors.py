"""Exception hierarchy shared by the services and the CLI.

Each class carries the process exit code the CLI reports for it.
"""


class PfcSyncError(Exception):
    exit_code = 1


class ValidationError(PfcSyncError, ValueError):
    """Input rejected: malformed data, violated precondition or invariant."""
    exit_code = 2


class InvariantViolation(ValidationError):
    pass


class PoleProximityError(ValidationError):
    def __init__(self, pole: complex, omega: float):
        self.pole = pole
        self.omega = omega
        super().__init__(
            f"evaluation at omega={omega:g} rad/s is too close to the pole s={-pole:.6g} (d={pole:.6g})"
        )


class NotIFPError(ValidationError):
    pass


class AsymmetricResidueError(ValidationError):
    def __init__(self, pole: complex):
        self.pole = pole
        super().__init__(
            f"first residue at d={pole:.6g} is not symmetric; "
            "add the R^T/(s+d) pre-compensator first (symmetrize_residue)"
        )


class GraphConditionError(ValidationError):
    """Laplacian is unbalanced or zero is not a simple eigenvalue."""


class NotWellPosedError(PfcSyncError):
    exit_code = 3

    def __init__(self, condition_number: float):
        self.condition_number = condition_number
        super().__init__(
            f"interconnection not well-posed: I + Gamma*D is singular "
            f"(condition number {condition_number:.3g})"
        )
