class InvalidParameter(ValueError):
    pass


class ContractViolation(RuntimeError):
    pass


class CannotSample(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


class DomainError(ValueError):
    pass
