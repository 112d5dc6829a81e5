"""Exception hierarchy shared by every layer of the control plane."""


class GreyFiberError(Exception):
    """Base class for all errors raised by this package."""


# topology -----------------------------------------------------------------

class TopologyError(GreyFiberError):
    pass


class SchemaError(TopologyError):
    pass


class DuplicateId(TopologyError):
    pass


class DanglingReference(TopologyError):
    pass


class DuplicateWavelength(TopologyError):
    pass


class UnknownNode(TopologyError):
    pass


class UnknownLink(TopologyError):
    pass


class InvalidRequest(GreyFiberError):
    pass


class AllocationError(TopologyError):
    """Resources vanished or ran out while committing an allocation."""


class ConcurrentDepletion(AllocationError):
    pass


class WavelengthExhausted(AllocationError):
    pass


class DoubleRelease(TopologyError):
    pass


# exchange -----------------------------------------------------------------

class ExchangeError(GreyFiberError):
    pass


class DuplicateOffering(ExchangeError):
    pass


class UnknownOffering(ExchangeError):
    pass


class DuplicateBid(ExchangeError):
    pass


class EmptyRound(ExchangeError):
    pass


class UnknownBidder(ExchangeError):
    pass


class UnknownBuyer(ExchangeError):
    pass


class DuplicateBuyer(ExchangeError):
    pass


# site control -------------------------------------------------------------

class SiteError(GreyFiberError):
    pass


class LinkDown(SiteError):
    pass


class UnknownHandle(SiteError):
    pass


class NoLocalResource(SiteError):
    pass


# harness / protocol -------------------------------------------------------

class ScenarioError(GreyFiberError):
    pass


class MalformedLog(GreyFiberError):
    pass


class MissingRecovery(GreyFiberError):
    pass


class ProtocolError(GreyFiberError):
    pass
