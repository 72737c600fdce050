"""Exception types shared across the toolkit."""


class EmberforgeError(Exception):
    """Base class for all toolkit errors."""


class MalformedFile(EmberforgeError):
    """File violates the container grammar (GLB/glTF/EMTX)."""


class UnsupportedFeature(EmberforgeError):
    """File uses a named feature outside the supported subset."""


class MissingBuffer(EmberforgeError):
    """A referenced buffer or buffer view is absent."""


class InvalidAsset(EmberforgeError):
    """Asset violates a type invariant (e.g. zero triangles)."""


class IoError(EmberforgeError):
    """Filesystem write failure."""


class EmptyTexture(EmberforgeError):
    """Texture has no pixels."""


class ShapeMismatch(EmberforgeError):
    """Tensor or image operands have incompatible shapes."""


class TimestepOutOfRange(EmberforgeError):
    """Diffusion timestep index outside [0, T)."""


class ViewCountMismatch(EmberforgeError):
    """A strength level does not carry the expected number of views."""


class ClientUnavailable(EmberforgeError):
    """Single-object classifier could not be reached."""


class DegenerateMesh(EmberforgeError):
    """Mesh has only zero-area triangles."""


class InsufficientVariation(EmberforgeError):
    """Disentanglement sampling needs >= 2 strengths and >= 2 rigs."""


class DivergenceDetected(EmberforgeError):
    """Training loss became non-finite."""


class DimensionMismatch(EmberforgeError):
    """Feature vectors or Gaussian fits disagree on dimension."""


class NonConvergedSqrt(EmberforgeError):
    """Matrix square root failed to converge."""


class ZeroVector(EmberforgeError):
    """Cosine similarity of a zero-norm vector."""


class EmptyInput(EmberforgeError):
    """An aggregate was requested over no data."""


class ImageTooSmall(EmberforgeError):
    """Image below the minimum size for a windowed metric."""


class TopologyMismatch(EmberforgeError):
    """Evaluation requires both assets to share mesh topology."""


class MissingUVs(EmberforgeError):
    """Mesh lacks the UV coordinates baking requires."""


class EmptyViews(EmberforgeError):
    """Baking requires at least one view."""


class ResolutionMismatch(EmberforgeError):
    """Texture maps disagree on resolution where agreement is required."""


class UncoveredSurface(EmberforgeError):
    """Too many UV texels were seen by no view."""
