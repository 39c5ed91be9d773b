"""Words over an ordered alphabet and the identifiers built from them.

Labels are plain ``str`` values whose characters are drawn from an ordered
alphabet (itself a string, e.g. ``"01"``).  The alphabet's characters must be
given in increasing code-point order so that Python's native string ordering
coincides with the symbol order.  The empty string is the root label.
"""
from __future__ import annotations

import string
from typing import NamedTuple

Label = str

_SYMBOLS = string.digits + string.ascii_uppercase + string.ascii_lowercase


class LabelError(ValueError):
    """Raised for a label outside the configured alphabet or length bound."""


def make_alphabet(size: int) -> str:
    """Return the first ``size`` symbols of ``0-9A-Za-z``."""
    if not 1 <= size <= len(_SYMBOLS):
        raise ValueError(f"alphabet size must be in [1, {len(_SYMBOLS)}], got {size}")
    return _SYMBOLS[:size]


def check_label(label: Label, alphabet: str, max_length: int) -> Label:
    if len(label) > max_length:
        raise LabelError(f"label {label!r} longer than {max_length}")
    bad = set(label) - set(alphabet)
    if bad:
        raise LabelError(f"label {label!r} uses symbols {sorted(bad)} outside {alphabet!r}")
    return label


def gcp(w1: Label, w2: Label) -> Label:
    """Greatest common prefix of two words."""
    n = min(len(w1), len(w2))
    i = 0
    while i < n and w1[i] == w2[i]:
        i += 1
    return w1[:i]


def is_prefix(u: Label, v: Label) -> bool:
    return v.startswith(u)


def is_proper_prefix(u: Label, v: Label) -> bool:
    return len(u) < len(v) and v.startswith(u)


class WaveId(NamedTuple):
    """Identifier of a PIF wave: the initiating peer and the initiator's label.

    Tuple ordering gives the total order used everywhere: peer id first,
    then the label lexicographically (a proper prefix sorts first).
    """

    peer_id: int
    initiator_label: Label

    def __str__(self) -> str:
        return f"({self.peer_id},{self.initiator_label!r})"


def wave_id_less(a: WaveId, b: WaveId) -> bool:
    return (a.peer_id, a.initiator_label) < (b.peer_id, b.initiator_label)


def keyspace_size(alphabet_size: int, max_length: int) -> int:
    """Number of words of length at most ``max_length`` (empty word included)."""
    if alphabet_size < 1 or max_length < 0:
        raise ValueError("need alphabet_size >= 1 and max_length >= 0")
    if alphabet_size == 1:
        return max_length + 1
    return (alphabet_size ** (max_length + 1) - 1) // (alphabet_size - 1)
