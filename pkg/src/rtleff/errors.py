"""Exception hierarchy.

Errors that describe the *environment* (missing tools, unreachable endpoints)
derive from :class:`EnvironmentFault` so the CLI can map them to exit code 2.
Everything about a candidate design is data, not an exception.
"""

from __future__ import annotations


class RtlEffError(Exception):
    """Base class for all harness errors."""


class EnvironmentFault(RtlEffError):
    """The host is missing something the run needs."""


# problem_store


class BundleError(RtlEffError):
    def __init__(self, message: str, bundle: str | None = None):
        self.bundle = bundle
        prefix = f"[{bundle}] " if bundle else ""
        super().__init__(prefix + message)


class MissingComponent(BundleError):
    def __init__(self, component: str, bundle: str | None = None):
        self.component = component
        super().__init__(f"missing component: {component}", bundle)


class HeaderMismatch(BundleError):
    pass


class MalformedManifest(BundleError):
    pass


class InvalidBundle(BundleError):
    """A bundle loaded but failed one of the validation checks."""

    def __init__(self, check: str, detail: str, bundle: str | None = None):
        self.check = check
        super().__init__(f"check {check!r} failed: {detail}", bundle)


class DuplicateId(BundleError):
    pass


# codegen


class EndpointUnreachable(EnvironmentFault):
    pass


class AuthMissing(EnvironmentFault):
    pass


# sim_harness


class RenameFailure(RtlEffError):
    pass


class SimulatorNotFound(EnvironmentFault):
    pass


# synth_harness


class MetricNotFound(RtlEffError):
    pass


class SynthToolNotFound(EnvironmentFault):
    pass


class BackendConfigError(RtlEffError):
    pass


# metrics


class DegenerateThreshold(RtlEffError):
    pass


class InvalidK(RtlEffError):
    pass


class EmptySuite(RtlEffError):
    pass


class TooLarge(RtlEffError):
    pass


# report / ablation / pipeline


class UnpairedProblem(RtlEffError):
    pass


class InsufficientBackends(RtlEffError):
    pass


class SweepFailed(RtlEffError):
    pass


class IncompleteRun(RtlEffError):
    def __init__(self, missing: list[str]):
        self.missing = missing
        shown = ", ".join(missing[:10])
        more = f" (+{len(missing) - 10} more)" if len(missing) > 10 else ""
        super().__init__(f"run is incomplete; missing records: {shown}{more}")


class ConfigMismatch(RtlEffError):
    pass
