"""Deviation and moment bounds for contracting non-homogeneous Markov chains."""
from .metrics import ContractionCertificate, DomainError, ConfigurationError, Metric, alpha_transform, k_rho, verify_contraction
from .models import (
    ARCH,
    GAR,
    INAR1,
    GenericModel,
    GLMGarchPoisson,
    GLMPoisson,
    ModelError,
    NonContractiveError,
    SwitchingARCH,
    model_from_dict,
)
from .rng import RngPolicy

__version__ = "0.1.0"
