from enum import Enum


class StatisticKind(str, Enum):
    D = "D"
    W2 = "W2"
    A2 = "A2"
    V = "V"
    U2 = "U2"
    PCvM = "PCvM"
    PAD = "PAD"
    NBak = "NBak"

    # names equal values, so this matches Enum's hash while staying in C
    __hash__ = str.__hash__

    @property
    def is_classical(self) -> bool:
        return self in CLASSICAL

    @property
    def is_spherical(self) -> bool:
        return self in SPHERICAL

    @property
    def code(self) -> int:
        """Stable small integer used when deriving RNG sub-streams."""
        return _CODES[self]

    def __str__(self) -> str:
        return self.value


CLASSICAL = (StatisticKind.D, StatisticKind.W2, StatisticKind.A2,
             StatisticKind.V, StatisticKind.U2)
SPHERICAL = (StatisticKind.PCvM, StatisticKind.PAD, StatisticKind.NBak)
_CODES = {k: i for i, k in enumerate(StatisticKind)}


def as_kind(kind) -> StatisticKind:
    if isinstance(kind, StatisticKind):
        return kind
    try:
        return StatisticKind(str(kind))
    except ValueError:
        lookup = {k.value.lower(): k for k in StatisticKind}
        try:
            return lookup[str(kind).lower()]
        except KeyError:
            raise ValueError(f"unknown statistic kind {kind!r}") from None
