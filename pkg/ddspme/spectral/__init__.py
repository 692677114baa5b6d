from .operator import (
    SpectralOperator, SobolevScale, QuadraturePolicy, NormSpace, Field, FieldLike,
    make_fractional_laplacian, make_explicit_operator, mode_frequencies,
    to_grid, from_grid, scale_apply, shifted_scale_apply, norm, norm_squared, inner, semigroup, gamma_transform
)
