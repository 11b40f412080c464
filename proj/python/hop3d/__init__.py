from hop3d._core import (
    decompose,
    entropy_terms,
    generate_scene,
    gram_schmidt,
    harmonic_mean,
    orthogonality_loss,
    project_out,
)

__all__ = [
    "decompose",
    "entropy_terms",
    "generate_scene",
    "gram_schmidt",
    "harmonic_mean",
    "orthogonality_loss",
    "project_out",
]
