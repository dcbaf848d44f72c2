from __future__ import annotations

from typing import Any


class OhmicError(RuntimeError):
    """Base class; `exit_code` is what the CLI exits with."""

    exit_code: int = 2

    def __init__(self, message: str = "", **context: Any) -> None:
        super().__init__(message or self.__class__.__name__)
        self.context = context


class UsageError(OhmicError):
    exit_code = 1


class DomainError(OhmicError):
    exit_code = 2


class ResourceLimit(OhmicError):
    exit_code = 3


# network
class NegativeConductance(DomainError):
    pass


class Disconnected(DomainError):
    pass


class DuplicateEdge(DomainError):
    pass


class ZeroMassNode(DomainError):
    pass


class NotReversible(DomainError):
    pass


class NotStochastic(DomainError):
    pass


class EmptySet(DomainError):
    pass


class ComplementDisconnected(DomainError):
    pass


class ParseError(DomainError):
    pass


class UnknownLabel(DomainError):
    pass


# potential
class EmptyBoundary(DomainError):
    pass


class Overlap(DomainError):
    pass


class EmptyTarget(DomainError):
    pass


class XInTargets(DomainError):
    pass


# flow
class NotAFlowFromAToB(DomainError):
    pass


class CycleViolation(DomainError):
    pass


class InfiniteResistanceEdge(DomainError):
    pass


class BadBoundaryValues(DomainError):
    pass


class NotUnitary(DomainError):
    pass


class BrokenPath(DomainError):
    pass


class WeightsNotNormalized(DomainError):
    pass


# spectral
class ConstantFunction(DomainError):
    pass


class IncompleteFamily(DomainError):
    pass


class WeightViolation(DomainError):
    pass


# lattice / glauber
class BadDimension(DomainError):
    pass


class DegenerateRatio(DomainError):
    pass


class GateMismatch(DomainError):
    pass


class NegativeSelfLoop(DomainError):
    pass


# resource limits
class SizeLimit(ResourceLimit):
    pass


class SolverFailure(ResourceLimit):
    pass


class TimeoutExceeded(ResourceLimit):
    pass
