"""Dotted-numeric package versions."""

from __future__ import annotations

import re
from enum import IntEnum
from itertools import zip_longest

from ..errors import MalformedVersion

VERSION_RE = re.compile(r"[0-9]+(\.[0-9]+)*")


class Ordering(IntEnum):
    less = -1
    equal = 0
    greater = 1


def parse_version(version: str) -> tuple[int, ...]:
    if not isinstance(version, str) or not VERSION_RE.fullmatch(version):
        raise MalformedVersion(f"not a dotted-numeric version: {version!r}")
    return tuple(int(part) for part in version.split("."))


def compare_versions(a: str, b: str) -> Ordering:
    """Componentwise numeric comparison, the shorter side padded with zeros."""
    for x, y in zip_longest(parse_version(a), parse_version(b), fillvalue=0):
        if x != y:
            return Ordering.less if x < y else Ordering.greater
    return Ordering.equal
