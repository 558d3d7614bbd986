# Import core types for easier access
from .errors import YMDError
from .lattice import Grid, LieScalarField, LieVectorField, SpinorField
