"""fieldpipe: filter pipelines for unstructured CFD field data.

Reads transient results (Ensight Gold ASCII or the native container
format), pushes them through a DAG of interpolation, differentiation and
aeroacoustic source-term filters described by an XML document, and writes
native containers.
"""

from .aeroacoustic import (lamb_vector, lighthill_scalar, lighthill_vector,
                           time_derivative)
from .container import (ContainerError, ContainerReader, ContainerWriter,
                        Manifest, read_mesh, read_native, strip_mesh,
                        write_mesh, write_native)
from .conservative import conservative_centroid, conservative_cutcell
from .derivatives import DerivativeError, RbfFdSettings, StencilSet
from .engine import (FilterRuntimeError, Pipeline, PipelineError,
                     StepValueDefinition, load_pipeline, parse_pipeline,
                     resolve_schedule)
from .ensight import EnsightError, EnsightReader, read_ensight
from .interp import (InterpError, RbfParams, ShepardParams, cell_to_node,
                     node_to_cell, rbf_interpolate, shepard_interpolate)
from .mesh import (ElementBlock, ElementType, FieldQuantity, FieldStep, Mesh,
                   MeshError)
from .spatial import BoxIndex, PointIndex

__version__ = "1.0.0"

__all__ = [
    "BoxIndex", "ContainerError", "ContainerReader", "ContainerWriter",
    "DerivativeError", "ElementBlock", "ElementType", "EnsightError",
    "EnsightReader", "FieldQuantity", "FieldStep", "FilterRuntimeError",
    "InterpError", "Manifest", "Mesh", "MeshError", "Pipeline",
    "PipelineError", "PointIndex", "RbfFdSettings", "RbfParams",
    "ShepardParams", "StencilSet", "StepValueDefinition", "cell_to_node",
    "conservative_centroid", "conservative_cutcell", "lamb_vector",
    "lighthill_scalar", "lighthill_vector", "load_pipeline", "node_to_cell",
    "parse_pipeline", "rbf_interpolate", "read_ensight", "read_mesh",
    "read_native", "resolve_schedule", "shepard_interpolate",
    "strip_mesh", "time_derivative", "write_mesh", "write_native",
]
