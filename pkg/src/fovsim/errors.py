"""Exception types shared across the fovsim package."""


class FovsimError(Exception):
    """Base class for all fovsim errors."""


class MalformedInput(FovsimError):
    """Byte stream is not a decodable image."""


class BadChannelCount(FovsimError):
    """Operation received an image with an unsupported channel count."""


class DimensionMismatch(FovsimError):
    """Two arrays/images that must agree in shape do not."""


class UncoveredPixel(FovsimError):
    """A peripheral pixel has zero total pooling weight."""


class TooSmall(FovsimError):
    """Image is below the minimum size for a pyramid decomposition."""


class DegenerateRegion(FovsimError):
    """Pooling region has (near-)zero total weight."""


class SchemaMismatch(FovsimError):
    """Two statistic vectors with different schemas were compared."""


class NonFiniteLoss(FovsimError):
    """Synthesis loss or gradient became non-finite."""


class ShapeMismatch(FovsimError):
    """Network input does not match the architecture's expectations."""


class DivergedLoss(FovsimError):
    """Training loss exceeded the divergence threshold."""


class BadMagic(FovsimError):
    """Checkpoint stream does not start with a known magic string."""


class VersionUnsupported(FovsimError):
    """Checkpoint container version is not supported."""


class PayloadSizeMismatch(FovsimError):
    """Checkpoint payload length disagrees with the declared architecture."""


class EmptyFovea(FovsimError):
    """Foveal disk contains no pixels."""
