"""Large-time asymptotics of the Dirichlet heat equation in exterior domains."""

from .geometry import ExteriorDomain, HarmonicProfile, make_domain, profile_for

__version__ = "0.1.0"

__all__ = ["ExteriorDomain", "HarmonicProfile", "make_domain", "profile_for", "__version__"]
