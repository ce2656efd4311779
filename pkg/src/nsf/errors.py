"""Exception hierarchy shared across the package."""


class NSFError(Exception):
    """Base class for every error raised deliberately by this package."""


class ConfigError(NSFError, ValueError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(message)


class DatasetError(NSFError, ValueError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class BundleError(NSFError):
    pass


class BundleVersionError(BundleError):
    pass


class BundleCorruptError(BundleError):
    pass


class NoBiasDetected(NSFError):
    """No class has both a deviating and a conforming subset."""


class DegenerateDataError(NSFError):
    pass


class TrainingDiverged(NSFError, FloatingPointError):
    pass


class MissingGroupsError(NSFError):
    pass


class StageError(NSFError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
