"""Error types shared by the toolkit.

The CLI maps them to exit codes: validation 2, design 3, numeric 4.
"""


class NlosError(Exception):
    """Base class for toolkit errors"""


class ScenarioError(NlosError, ValueError):
    """Scenario or input failed validation"""


class GeometryError(NlosError, ValueError):
    """Geometry evaluated outside its domain"""


class DesignError(NlosError, ValueError):
    """Requested plane or codebook design is infeasible"""


class IlluminationError(NlosError, ValueError):
    """Source footprint misses the reflection plane"""


class MetricError(NlosError, ValueError):
    """Image metric cannot be measured"""


class NumericError(NlosError, RuntimeError):
    """Runtime numeric failure (non-finite data, overflow)"""
