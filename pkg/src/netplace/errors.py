"""Exception types shared across the package."""


class NetplaceError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(NetplaceError):
    """Strategy dimensions do not match the topology/catalogs."""


class LoopDetected(NetplaceError):
    """A commodity's forwarding support digraph contains a cycle."""

    def __init__(self, kind, key, cycle=None):
        self.kind = kind
        self.key = key
        self.cycle = cycle
        msg = f"cyclic {kind} support for commodity {key}"
        if cycle:
            msg += f": {' -> '.join(map(str, cycle))}"
        super().__init__(msg)


class CapacityExceeded(NetplaceError):
    """A flow or workload reached the pole of its queueing cost."""

    def __init__(self, element, load, cap):
        self.element = element
        self.load = load
        self.cap = cap
        super().__init__(f"{element}: load {load:.6g} >= capacity {cap:.6g}")


class Unreachable(NetplaceError):
    """Some node has no route toward a required destination set."""


class ParseError(NetplaceError):
    """Malformed topology or scenario file."""


class Disconnected(NetplaceError):
    """The topology is not connected."""


class InvalidParams(NetplaceError):
    """Bad generator or configuration parameters."""
