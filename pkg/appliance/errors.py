"""Exception hierarchy shared by every appliance module.

Each error carries a stable ``code`` that the CLI prints verbatim so that
scripts can match on it.
"""

from __future__ import annotations


class ApplianceError(Exception):
    """Base class for all toolkit errors."""

    code = "ApplianceError"


class EmptyKeyId(ApplianceError):
    code = "EmptyKeyId"


class DuplicateKeyId(ApplianceError):
    code = "DuplicateKeyId"


class UnsupportedAlgorithm(ApplianceError):
    code = "UnsupportedAlgorithm"


class FormatError(ApplianceError):
    """A keyring, manifest, signature or config file could not be parsed."""

    code = "FormatError"


class MediumWriteLocked(ApplianceError):
    code = "MediumWriteLocked"


class NoStorage(ApplianceError):
    code = "NoStorage"


class PermissionDenied(ApplianceError):
    code = "PermissionDenied"


class EvanescentFull(ApplianceError):
    code = "EvanescentFull"


class NotFound(ApplianceError):
    code = "NotFound"


class MalformedVersion(ApplianceError):
    code = "MalformedVersion"


class PathEscape(ApplianceError):
    code = "PathEscape"


class NoMirrors(ApplianceError):
    code = "NoMirrors"


class PrivilegeViolation(ApplianceError, AssertionError):
    """A privileged process touched the network."""

    code = "PrivilegeViolation"


class IllegalTransition(ApplianceError):
    code = "IllegalTransition"


class FloppyNotLocked(ApplianceError):
    code = "FloppyNotLocked"


class ConfigError(ApplianceError):
    code = "ConfigError"


class DuplicatePackage(ApplianceError):
    code = "DuplicatePackage"


class UnknownPackage(ApplianceError):
    code = "UnknownPackage"


class InvalidScenario(ApplianceError):
    code = "InvalidScenario"


class ZeroRate(ApplianceError):
    code = "ZeroRate"


class InvalidInterval(ApplianceError):
    code = "InvalidInterval"


class EndpointUnreachable(ApplianceError):
    code = "EndpointUnreachable"


class InterfaceDown(ApplianceError):
    code = "InterfaceDown"


class NoSigningKeys(ApplianceError):
    code = "NoSigningKeys"
