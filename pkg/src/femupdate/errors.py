"""Exception types shared across the package.

Invalid arguments raise plain ``ValueError``; the classes here mark failures
that map to distinct CLI exit codes (config 2, data 3, numerical 4).
"""


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration (CLI exit code 2)."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class DataError(Exception):
    """Measurement data problem: parse failure or grid mismatch (exit code 3)."""


class ParseError(DataError):
    """Malformed measurement file; carries the offending line number."""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class OutOfDomainError(DataError):
    """Requested points fall outside the available sample domain."""


class NumericalError(Exception):
    """Numerical failure in the forward solver (exit code 4)."""


class SingularSystemError(NumericalError):
    """Stiffness system is singular; boundary conditions leave rigid modes."""


class DegenerateElementError(NumericalError):
    """Element Jacobian is non-positive at an integration point."""

    def __init__(self, element_id, detj):
        self.element_id = element_id
        self.detj = detj
        where = "" if element_id is None else f" in element {element_id}"
        super().__init__(f"non-positive Jacobian determinant {detj:.3e}{where}")
