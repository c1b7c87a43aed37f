"""Exception hierarchy shared by every layer of the simulator."""


class SimError(Exception):
    """Base class; ``code`` is a stable machine-readable identifier."""

    code = "SIM_ERROR"

    def __init__(self, message="", **context):
        super().__init__(message or self.code)
        self.context = context


class ConfigInvalid(SimError):
    code = "CONFIG_INVALID"


class AddressError(SimError):
    code = "ADDRESS_OUT_OF_RANGE"


class UnalignedWrite(SimError):
    code = "UNALIGNED_WRITE"


class ZoneFull(SimError):
    code = "ZONE_FULL"


class UnmappedRead(SimError):
    code = "UNMAPPED_READ"


class OutOfSpace(SimError):
    code = "OUT_OF_SPACE"


class NoVictim(SimError):
    code = "NO_VICTIM"


class UnknownNamespace(SimError):
    code = "UNKNOWN_NAMESPACE"


class InvalidRequest(SimError):
    code = "INVALID_REQUEST"


class TraceParseError(SimError):
    code = "TRACE_PARSE_ERROR"

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message, line=line)
        self.line = line


class SimulationError(SimError):
    """Wraps a failure raised while replaying one trace record."""

    code = "SIMULATION_ERROR"

    def __init__(self, cause, record, index):
        super().__init__(f"record {index} ({record}): {cause.code}: {cause}")
        self.cause = cause
        self.record = record
        self.index = index
