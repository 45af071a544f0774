"""Exception hierarchy.

Every error raised on purpose derives from :class:`CoenobiaError`.  The CLI
maps :class:`ConfigError` to exit code 1 and :class:`DataError` to exit
code 2; anything else is an internal failure.
"""


class CoenobiaError(Exception):
    pass


class ConfigError(CoenobiaError):
    pass


class DataError(CoenobiaError):
    pass


# core
class UnsupportedFormat(DataError):
    pass


class CorruptHeader(DataError):
    pass


class MalformedRow(DataError):
    pass


class BadLabel(DataError):
    pass


# preprocess
class ImageSmallerThanTile(DataError):
    pass


class AllSameIntensity(DataError):
    pass


# segment
class DegenerateSpectrum(DataError):
    pass


class ContourCollapsed(DataError):
    pass


# features
class EmptyMask(DataError):
    pass


class PatchTooSmall(DataError):
    pass


class NoValidPairs(DataError):
    pass


class DescriptorError(DataError):
    """A descriptor block failed; ``block`` names it (e.g. ``"zernike"``)."""

    def __init__(self, block, cause):
        super().__init__(f"{block}: {cause}")
        self.block = block
        self.cause = cause


class TooFewSamples(DataError):
    pass


# select / classify / evaluate
class DegenerateData(DataError):
    pass


class SingleClassInput(DataError):
    pass


class NonFiniteFeature(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class ClassTooSmall(DataError):
    pass


class LengthMismatch(DataError):
    pass


# synth / cli
class ConfigOutOfRange(ConfigError):
    pass


class TooFewPatches(DataError):
    pass


class IoFailure(DataError):
    pass
