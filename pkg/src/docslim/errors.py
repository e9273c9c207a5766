"""Exception types shared across the toolkit."""


class DocSlimError(Exception):
    pass


class ImageTooSmall(DocSlimError):
    pass


class ShapeMismatch(DocSlimError):
    pass


class EmptyResult(DocSlimError):
    pass


class DegenerateOutput(DocSlimError):
    pass


class TooFewTokens(DocSlimError):
    pass


class ZeroNormToken(DocSlimError):
    pass


class MalformedTokenFile(DocSlimError):
    pass


class SpecConflict(DocSlimError):
    pass


class DimTooSmall(DocSlimError):
    pass
