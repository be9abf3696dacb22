"""Exception hierarchy shared across the controller."""


class EvpnError(Exception):
    """Base class for controller errors."""


class InvalidArgument(EvpnError, ValueError):
    def __init__(self, msg, field=None):
        super().__init__(msg)
        self.field = field


class InvalidState(EvpnError):
    pass


class ResourceExhausted(EvpnError):
    pass


class AlreadyAllocated(EvpnError):
    pass


class MalformedMessage(EvpnError):
    """A BGP message could not be decoded.

    ``code``/``subcode`` are the NOTIFICATION values to send before the
    session is torn down.
    """

    def __init__(self, msg, code=3, subcode=0):
        super().__init__(msg)
        self.code = code
        self.subcode = subcode


class Backpressure(EvpnError):
    """Output queue of a BGP session is full."""


class NotFound(EvpnError):
    pass


class Conflict(EvpnError):
    pass


class TransactionFailed(EvpnError):
    pass
