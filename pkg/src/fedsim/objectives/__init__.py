from .federation import Federation, quadratic_federation
from .heterogeneity import fit_g2, measure_bgd, measure_bhd
from .logistic import (
    Dataset,
    LogisticClient,
    accuracy,
    load_csv_dataset,
    make_synthetic_classification,
    save_csv_dataset,
)
from .partition import label_entropy, similarity_indices, split_by_similarity
from .quadratic import (
    LowerBoundPair,
    QuadraticClient,
    make_identical_hessian_ensemble,
    make_lower_bound_clients,
    make_quadratic_ensemble,
)

__all__ = [
    "Dataset",
    "Federation",
    "LogisticClient",
    "LowerBoundPair",
    "QuadraticClient",
    "accuracy",
    "fit_g2",
    "label_entropy",
    "load_csv_dataset",
    "make_identical_hessian_ensemble",
    "make_lower_bound_clients",
    "make_quadratic_ensemble",
    "make_synthetic_classification",
    "measure_bgd",
    "measure_bhd",
    "quadratic_federation",
    "save_csv_dataset",
    "similarity_indices",
    "split_by_similarity",
]
