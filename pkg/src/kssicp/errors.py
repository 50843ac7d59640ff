"""Exception hierarchy shared by every module of the package."""


class KSSError(Exception):
    """Base class for domain errors raised by kssicp."""


class FormatError(KSSError):
    pass


class EmptyCloud(KSSError):
    pass


class TooFewPoints(KSSError):
    pass


class QuotaExceedsPoints(KSSError):
    pass


class DegenerateCloud(KSSError):
    pass


class DegenerateInput(KSSError):
    pass


class DegenerateFrame(KSSError):
    pass


class SizeMismatch(KSSError):
    pass


class BadFraction(KSSError):
    pass
