class SolverError(RuntimeError):
    """Base class for failures raised by the ALE-DG solver core."""


class StepRejectedError(SolverError):
    """A time step attempt failed and may be retried with a smaller step."""


class PredictorDivergenceError(StepRejectedError):
    """The local space-time predictor did not reach its tolerance."""


class TangledMeshError(StepRejectedError):
    """A subcell reached non-positive area at the new time level."""


class InadmissibleStateError(StepRejectedError):
    """A state with non-positive density or pressure, or non-finite entries."""


class SingularMassMatrixError(StepRejectedError):
    """The mass matrix at the new time level could not be inverted."""


class DegenerateGeometryError(ValueError):
    """Geometry with zero or negative measure was passed to a geometric
    helper."""


class MeshFormatError(ValueError):
    """A mesh file or connectivity array violates the mesh invariants."""
