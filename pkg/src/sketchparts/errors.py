"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An operation was called with arguments that break its preconditions."""


class ConfigError(ValueError):
    """A configuration value is inconsistent or refers to something unknown."""


class TaxonomyParseError(ValueError):
    """Taxonomy text is malformed; carries the offending line number."""

    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class CheckpointError(ValueError):
    """A checkpoint file is unreadable; carries the byte offset of the fault."""

    def __init__(self, offset, message):
        super().__init__(f"at byte {offset}: {message}")
        self.offset = offset
